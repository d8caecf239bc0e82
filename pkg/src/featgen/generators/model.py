"""Configuration, trained-model container, sampling and persistence."""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalError, ParameterError, ShapeError
from ..formats import dump_json, load_json, read_mlp, write_mlp
from ..mmd import KernelSpec
from ..neuralnet import InitSpec, Mlp, forward, init_mlp, layer_stack
from ..numerics import Matrix, Rng, sample_gaussian, sample_uniform

MODEL_KINDS = ("gmmn", "acgan", "denoising_ae", "adversarial_ae")

BatchHook = Callable[[np.ndarray], None]


@dataclass(frozen=True)
class NoiseSpec:
    dim: int = 16
    distribution: str = "gaussian"

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterError(f"noise dim must be >= 1, got {self.dim}")
        if self.distribution not in ("gaussian", "uniform"):
            raise ParameterError(f"noise distribution must be 'gaussian' or 'uniform', got {self.distribution!r}")

    def sample(self, rng: Rng, n: int) -> Matrix:
        if self.distribution == "gaussian":
            return sample_gaussian(rng, n, self.dim, 0.0, 1.0)
        return sample_uniform(rng, n, self.dim, 0.0, 1.0)


@dataclass(frozen=True)
class GeneratorConfig:
    model_kind: str = "gmmn"
    hidden_dims: tuple[int, ...] = (500,)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    learning_rate: float = 1e-4
    epochs: int = 100
    batch_size: int = 128
    input_noise_stddev: float = 0.1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    seed: int = 0
    init_stddev: float = 0.02
    leak: float = 0.2
    input_dropout: float = 0.2
    hidden_dropout: float = 0.5
    dropout_on_conditioning: bool = True
    discriminator_hidden_dims: tuple[int, ...] = (500,)
    aux_weight: float = 1.0
    adversarial_weight: float = 1.0
    width_range: tuple[int, int] = (500, 2000)
    depth_range: tuple[int, int] = (1, 2)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "discriminator_hidden_dims", tuple(int(h) for h in self.discriminator_hidden_dims))
        object.__setattr__(self, "width_range", tuple(self.width_range))
        object.__setattr__(self, "depth_range", tuple(self.depth_range))
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        lo_w, hi_w = self.width_range
        lo_d, hi_d = self.depth_range
        for name in ("hidden_dims", "discriminator_hidden_dims"):
            dims = getattr(self, name)
            if not lo_d <= len(dims) <= hi_d:
                raise ConfigError(f"{name} has {len(dims)} layers, outside depth range [{lo_d}, {hi_d}]")
            for h in dims:
                if not lo_w <= h <= hi_w:
                    raise ConfigError(f"{name} width {h} outside search range [{lo_w}, {hi_w}]")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.input_noise_stddev < 0:
            raise ConfigError("input_noise_stddev must be >= 0")
        for name in ("input_dropout", "hidden_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["discriminator_hidden_dims"] = list(self.discriminator_hidden_dims)
        d["width_range"] = list(self.width_range)
        d["depth_range"] = list(self.depth_range)
        d["kernel"] = self.kernel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorConfig:
        """Strict parse: unknown keys raise ConfigError, absent keys take defaults."""
        if not isinstance(d, dict):
            raise ConfigError("generator config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown generator config keys {unknown}")
        kw = dict(d)
        try:
            if "noise" in kw:
                extra = sorted(set(kw["noise"]) - {"dim", "distribution"})
                if extra:
                    raise ConfigError(f"unknown noise keys {extra}")
                kw["noise"] = NoiseSpec(**kw["noise"])
            if "kernel" in kw:
                extra = sorted(set(kw["kernel"]) - {"bandwidths", "weights"})
                if extra:
                    raise ConfigError(f"unknown kernel keys {extra}")
                kw["kernel"] = KernelSpec.from_dict(kw["kernel"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid generator config: {exc}") from exc


@dataclass(eq=False)
class GeneratorModel:
    kind: str
    generator_net: Mlp
    noise: NoiseSpec
    feature_dim: int
    attr_dim: int
    auxiliary_nets: dict[str, Mlp] = field(default_factory=dict)
    seen_classes: tuple[int, ...] = ()

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeneratorModel):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.generator_net == other.generator_net
            and self.noise == other.noise
            and (self.feature_dim, self.attr_dim) == (other.feature_dim, other.attr_dim)
            and self.auxiliary_nets.keys() == other.auxiliary_nets.keys()
            and all(self.auxiliary_nets[k] == other.auxiliary_nets[k] for k in self.auxiliary_nets)
            and self.seen_classes == other.seen_classes
        )


@dataclass
class TrainReport:
    curves: dict[str, list[float]] = field(default_factory=dict)
    wall_seconds: float = 0.0
    class_curves: dict[int, list[float]] = field(default_factory=dict)

    @property
    def final(self) -> dict[str, float]:
        return {k: v[-1] for k, v in self.curves.items() if v}

    def log_epoch(self, epoch: int, losses: dict[str, list[float]]) -> None:
        for term, values in losses.items():
            value = float(np.mean(values)) if values else float("nan")
            if not math.isfinite(value):
                raise NumericalError(f"epoch {epoch}: loss term {term!r} is not finite ({value})")
            self.curves.setdefault(term, []).append(value)

    def to_dict(self) -> dict:
        # wall time is left out so reports are reproducible byte for byte
        return {
            "curves": self.curves,
            "final": self.final,
            "class_curves": {str(k): v for k, v in sorted(self.class_curves.items())},
        }


def generator_specs(cfg: GeneratorConfig, attr_dim: int, in_dim: int, out_dim: int):
    """Layer specs for a network whose input is (conditioning attributes, code/noise).

    With ``dropout_on_conditioning`` off, the input layer has no dropout.
    """
    return layer_stack(
        in_dim,
        cfg.hidden_dims,
        out_dim,
        leak=cfg.leak,
        input_dropout=cfg.input_dropout if cfg.dropout_on_conditioning else 0.0,
        hidden_dropout=cfg.hidden_dropout,
    )


def build_generator(cfg: GeneratorConfig, attr_dim: int, feature_dim: int, rng: Rng) -> Mlp:
    specs = generator_specs(cfg, attr_dim, attr_dim + cfg.noise.dim, feature_dim)
    return init_mlp(specs, InitSpec(cfg.init_stddev), rng)


def build_head(cfg: GeneratorConfig, in_dim: int, out_dim: int, rng: Rng) -> Mlp:
    """Discriminator-style network: leaky hidden layers then a linear output."""
    specs = layer_stack(
        in_dim,
        cfg.discriminator_hidden_dims,
        out_dim,
        leak=cfg.leak,
        input_dropout=cfg.input_dropout,
        hidden_dropout=cfg.hidden_dropout,
    )
    return init_mlp(specs, InitSpec(cfg.init_stddev), rng)


def conditioned_input(attrs: Matrix, codes: Matrix) -> Matrix:
    return np.hstack([attrs, codes])


def generate(model: GeneratorModel, attributes: Matrix, per_class: int, rng: Rng) -> tuple[Matrix, np.ndarray]:
    """``per_class`` eval-mode samples for each attribute row; labels are row indices."""
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")
    if attributes.ndim != 2 or attributes.shape[1] != model.attr_dim:
        raise ShapeError(f"attributes shape {attributes.shape} does not match model attr_dim {model.attr_dim}")
    n_cls = attributes.shape[0]
    attrs = np.repeat(attributes, per_class, axis=0)
    z = model.noise.sample(rng, n_cls * per_class)
    out, _ = forward(model.generator_net, conditioned_input(attrs, z), "eval")
    return out, np.repeat(np.arange(n_cls), per_class)


def _aux_path(path: Path, role: str) -> Path:
    return path.with_name(f"{path.stem}.{role}{path.suffix}")


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def save_generator_model(model: GeneratorModel, path, cfg: GeneratorConfig | None = None, extra: dict | None = None) -> None:
    path = Path(path)
    write_mlp(path, model.generator_net)
    aux = {}
    for role, net in sorted(model.auxiliary_nets.items()):
        aux_file = _aux_path(path, role)
        write_mlp(aux_file, net)
        aux[role] = aux_file.name
    meta = {
        "model_kind": model.kind,
        "noise": asdict(model.noise),
        "feature_dim": model.feature_dim,
        "attr_dim": model.attr_dim,
        "seen_classes": list(model.seen_classes),
        "auxiliary_nets": aux,
        "kernel": cfg.kernel.to_dict() if cfg is not None else None,
        "config": cfg.to_dict() if cfg is not None else None,
    }
    if extra:
        meta.update(extra)
    dump_json(sidecar_path(path), meta)


def load_generator_model(path) -> tuple[GeneratorModel, dict]:
    path = Path(path)
    meta = load_json(sidecar_path(path))
    net = read_mlp(path)
    aux = {role: read_mlp(path.with_name(name)) for role, name in meta.get("auxiliary_nets", {}).items()}
    model = GeneratorModel(
        kind=meta["model_kind"],
        generator_net=net,
        noise=NoiseSpec(**meta["noise"]),
        feature_dim=int(meta["feature_dim"]),
        attr_dim=int(meta["attr_dim"]),
        auxiliary_nets=aux,
        seen_classes=tuple(meta.get("seen_classes", ())),
    )
    if net.input_dim != model.attr_dim + model.noise.dim or net.output_dim != model.feature_dim:
        raise ShapeError(f"{path}: network dims do not match sidecar metadata")
    return model, meta
