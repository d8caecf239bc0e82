"""Generate-then-classify evaluation: ZSC, GZSC, Flat-Hit@K, cross-validation,
the four-generator comparison and a nearest-attribute control."""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifier import (
    ClassifierConfig,
    SoftmaxClassifier,
    predict_topk,
    rank_classes,
    train_classifier,
)
from .data import Dataset, SyntheticOracle, restrict
from .errors import DataError, ParameterError, SolverError
from .generators import (
    MODEL_KINDS,
    GeneratorConfig,
    GeneratorModel,
    TrainReport,
    generate,
    train_generator,
)
from .numerics import Matrix, Rng

DEFAULT_KS = (1, 2, 5, 10, 20)
DEFAULT_PER_CLASS = 500

BatchHook = Callable[[np.ndarray], None]


# scenario tag -> (test pool, label space)
_SCENARIO_TABLE = {
    "u2u": ("unseen", "unseen"),
    "s2s": ("seen", "seen"),
    "u2a": ("unseen", "all"),
    "s2a": ("seen", "all"),
}


@dataclass(frozen=True)
class Scenario:
    tag: str

    def __post_init__(self):
        if self.tag not in _SCENARIO_TABLE:
            raise ParameterError(f"unknown scenario {self.tag!r}")

    @property
    def test_pool(self) -> str:
        return _SCENARIO_TABLE[self.tag][0]

    @property
    def label_space(self) -> str:
        return _SCENARIO_TABLE[self.tag][1]

    def classes(self, data: Dataset) -> tuple[int, ...]:
        if self.label_space == "seen":
            return data.seen_classes
        if self.label_space == "unseen":
            return data.unseen_classes
        return tuple(sorted(data.seen_classes + data.unseen_classes))


SCENARIOS = tuple(Scenario(t) for t in ("u2u", "s2s", "u2a", "s2a"))


@dataclass
class EvalReport:
    scenario_accuracy: dict[str, float]
    per_class_accuracy: dict[str, float]
    flat_hit: dict[int, float]
    seed: int
    config_digest: str
    # (correct, total) per scenario, kept for significance tests; not serialised
    counts: dict[str, tuple[int, int]] = field(default_factory=dict, repr=False)
    train_report: TrainReport | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario_accuracy": dict(self.scenario_accuracy),
            "per_class_accuracy": dict(self.per_class_accuracy),
            "flat_hit": {str(k): v for k, v in sorted(self.flat_hit.items())},
            "seed": self.seed,
            "config_digest": self.config_digest,
        }


def config_digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def max_workers() -> int:
    env = os.environ.get("FEATGEN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ParameterError(f"FEATGEN_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _accuracies(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float, int]:
    correct = pred == truth
    per_class = [correct[truth == c].mean() for c in np.unique(truth)]
    return float(correct.mean()), float(np.mean(per_class)), int(correct.sum())


def restricted_top1(scores: Matrix, class_ids: Sequence[int], label_space: Sequence[int]) -> np.ndarray:
    """Top-1 predictions when only ``label_space`` columns of ``scores`` compete."""
    pos = {c: i for i, c in enumerate(class_ids)}
    cols = [pos[c] for c in label_space]
    return rank_classes(list(label_space), scores[:, cols])[:, 0]


def _evaluate(
    score_fn: Callable[[Matrix], Matrix],
    class_ids: Sequence[int],
    data: Dataset,
    tags: Sequence[str],
) -> tuple[dict[str, float], dict[str, float], dict[str, tuple[int, int]]]:
    acc, per_class, counts = {}, {}, {}
    for tag in tags:
        sc = Scenario(tag)
        x, y = data.test_set(sc.test_pool)
        if y.size == 0:
            raise DataError(f"scenario {tag}: no test images from {sc.test_pool} classes")
        pred = restricted_top1(score_fn(x), class_ids, sc.classes(data))
        acc[tag], per_class[tag], n_ok = _accuracies(pred, y)
        counts[tag] = (n_ok, int(y.size))
    return acc, per_class, counts


def flat_hit_at_k(clf: SoftmaxClassifier, features: Matrix, labels: np.ndarray, ks: Sequence[int]) -> dict[int, float]:
    """Percentage of rows whose true label is among the top-K predictions."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("flat_hit_at_k needs at least one test image")
    for k in ks:
        if not 1 <= k <= clf.num_classes:
            raise ParameterError(f"K={k} outside [1, {clf.num_classes}]")
    ranked = predict_topk(clf, features, max(ks))
    hits = ranked == labels[:, None]
    cum = np.cumsum(hits, axis=1) > 0
    return {int(k): float(100.0 * cum[:, k - 1].mean()) for k in ks}


def _usable_ks(ks: Sequence[int], n_classes: int) -> list[int]:
    return sorted({k for k in ks if 1 <= k <= n_classes})


def _fit(features, labels, class_ids, clf_cfg: ClassifierConfig, rng: Rng) -> SoftmaxClassifier:
    return train_classifier(
        features, labels, class_ids, clf_cfg.learning_rate, clf_cfg.epochs, clf_cfg.batch_size, rng, clf_cfg.init_stddev
    )


def _check_split(data: Dataset, need_seen_test: bool = False) -> None:
    # Dataset construction already rejects overlapping splits; check it again for hand-mutated objects
    overlap = set(data.seen_classes) & set(data.unseen_classes)
    if overlap:
        raise DataError(f"seen and unseen classes overlap: {sorted(overlap)}")
    if not data.unseen_classes or data.test_set("unseen")[1].size == 0:
        raise DataError("no test images from unseen classes")
    if need_seen_test and data.test_set("seen")[1].size == 0:
        raise DataError("GZSC needs test images from seen classes")


def _digest(cfg: GeneratorConfig | None, clf_cfg: ClassifierConfig, per_class: int, mode: str) -> str:
    return config_digest(
        {
            "generator": cfg.to_dict() if cfg is not None else None,
            "classifier": clf_cfg.to_dict(),
            "per_class": per_class,
            "mode": mode,
        }
    )


def _obtain_generator(data, cfg, model, rng, on_batch) -> tuple[GeneratorModel, TrainReport | None]:
    if model is not None:
        if model.feature_dim != data.feature_dim or model.attr_dim != data.attr_dim:
            raise DataError(
                f"model dims (features {model.feature_dim}, attributes {model.attr_dim}) do not match "
                f"dataset ({data.feature_dim}, {data.attr_dim})"
            )
        return model, None
    if cfg is None:
        raise ParameterError("either a generator config or a trained model is required")
    return train_generator(data, cfg, rng.child("generator"), on_batch)


def run_zsc(
    data: Dataset,
    cfg: GeneratorConfig | None,
    clf_cfg: ClassifierConfig | None = None,
    per_class: int = DEFAULT_PER_CLASS,
    rng: Rng | None = None,
    *,
    model: GeneratorModel | None = None,
    ks: Sequence[int] = DEFAULT_KS,
    on_batch: BatchHook | None = None,
) -> EvalReport:
    """Classical ZSC: classifier over unseen classes trained on generated features only."""
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")
    clf_cfg = clf_cfg or ClassifierConfig()
    rng = rng or Rng(0)
    _check_split(data)
    model, train_report = _obtain_generator(data, cfg, model, rng, on_batch)
    unseen = np.array(data.unseen_classes)
    fake, local = generate(model, data.class_attributes[unseen], per_class, rng.child("generate"))
    clf = _fit(fake, unseen[local], unseen, clf_cfg, rng.child("classifier"))
    acc, per_cls, counts = _evaluate(clf.logits, clf.class_ids, data, ["u2u"])
    x, y = data.test_set("unseen")
    hits = flat_hit_at_k(clf, x, y, _usable_ks(ks, clf.num_classes))
    return EvalReport(acc, per_cls, hits, rng.seed, _digest(cfg, clf_cfg, per_class, "zsc"), counts, train_report)


def run_gzsc(
    data: Dataset,
    cfg: GeneratorConfig | None,
    clf_cfg: ClassifierConfig | None = None,
    per_class: int = DEFAULT_PER_CLASS,
    rng: Rng | None = None,
    *,
    model: GeneratorModel | None = None,
    generate_seen: bool = False,
    ks: Sequence[int] = DEFAULT_KS,
    on_batch: BatchHook | None = None,
) -> EvalReport:
    """Generalized ZSC with one classifier over seen + unseen classes.

    u2u and s2s reuse that classifier with the competing columns restricted,
    so u2a <= u2u and s2a <= s2s hold image by image. Flat-Hit@K is measured
    on unseen test images over the full label space.
    """
    if per_class < 1:
        raise ParameterError(f"per_class must be >= 1, got {per_class}")
    clf_cfg = clf_cfg or ClassifierConfig()
    rng = rng or Rng(0)
    _check_split(data, need_seen_test=True)
    model, train_report = _obtain_generator(data, cfg, model, rng, on_batch)
    targets = np.array(data.unseen_classes + (data.seen_classes if generate_seen else ()))
    fake, local = generate(model, data.class_attributes[targets], per_class, rng.child("generate"))
    x_real, y_real = data.train_set()
    if on_batch is not None:
        on_batch(y_real)
    all_classes = Scenario("u2a").classes(data)
    clf = _fit(
        np.vstack([x_real, fake]),
        np.concatenate([y_real, targets[local]]),
        all_classes,
        clf_cfg,
        rng.child("classifier"),
    )
    acc, per_cls, counts = _evaluate(clf.logits, clf.class_ids, data, [s.tag for s in SCENARIOS])
    x, y = data.test_set("unseen")
    hits = flat_hit_at_k(clf, x, y, _usable_ks(ks, clf.num_classes))
    digest = _digest(cfg, clf_cfg, per_class, "gzsc-seen" if generate_seen else "gzsc")
    return EvalReport(acc, per_cls, hits, rng.seed, digest, counts, train_report)


def run_oracle(data: Dataset, oracle: SyntheticOracle, clf_cfg: ClassifierConfig | None = None, rng: Rng | None = None) -> EvalReport:
    """Control: classifier trained on the real (withheld) unseen training images."""
    clf_cfg = clf_cfg or ClassifierConfig()
    rng = rng or Rng(0)
    clf = _fit(oracle.unseen_train_features, oracle.unseen_train_labels, data.unseen_classes, clf_cfg, rng.child("classifier"))
    acc, per_cls, counts = _evaluate(clf.logits, clf.class_ids, data, ["u2u"])
    x, y = data.test_set("unseen")
    hits = flat_hit_at_k(clf, x, y, _usable_ks(DEFAULT_KS, clf.num_classes))
    return EvalReport(acc, per_cls, hits, rng.seed, _digest(None, clf_cfg, 0, "oracle"), counts)


def baseline_nearest_attribute(
    data: Dataset, label_space: Sequence[int] | None = None, ridge: float | None = None
) -> EvalReport:
    """Ridge map from features to attributes, then the nearest class attribute wins.

    The map is fitted on seen training images only (with an intercept).
    ``label_space`` bounds the candidate classes (default: all seen and
    unseen); each scenario then further restricts to its own label space.
    """
    x, y = data.train_set()
    if x.shape[0] == 0:
        raise DataError("baseline needs seen training images")
    lam = 1e-3 * data.feature_dim if ridge is None else ridge
    x_mean = x.mean(axis=0)
    targets = data.class_attributes[y]
    t_mean = targets.mean(axis=0)
    xc = x - x_mean
    gram = xc.T @ xc + lam * np.eye(x.shape[1])
    try:
        w = np.linalg.solve(gram, xc.T @ (targets - t_mean))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"ridge system is singular: {exc}") from exc

    universe = tuple(sorted(label_space)) if label_space is not None else Scenario("u2a").classes(data)
    protos = data.class_attributes[list(universe)]

    def scores(feats: Matrix) -> Matrix:
        mapped = (feats - x_mean) @ w + t_mean
        d = ((mapped[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
        return -d

    tags = []
    for sc in SCENARIOS:
        if set(sc.classes(data)) <= set(universe) and data.test_set(sc.test_pool)[1].size:
            tags.append(sc.tag)
    acc, per_cls, counts = _evaluate(scores, universe, data, tags)
    return EvalReport(acc, per_cls, {}, 0, config_digest({"baseline": "nearest_attribute", "ridge": lam}), counts)


@dataclass
class CvResult:
    candidates: list[dict]
    accuracies: list[float]
    selected_index: int
    folds: list[dict]

    @property
    def selected_config(self) -> dict:
        return self.candidates[self.selected_index]

    @property
    def selected_accuracy(self) -> float:
        return self.accuracies[self.selected_index]

    def to_dict(self) -> dict:
        return {
            "candidates": [{"config": c, "validation_accuracy": a} for c, a in zip(self.candidates, self.accuracies)],
            "selected_index": self.selected_index,
            "selected_config": self.selected_config,
            "selected_accuracy": self.selected_accuracy,
            "folds": self.folds,
        }


def validation_split(data: Dataset, holdout_fraction: float, rng: Rng) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Hold out a fraction of the seen classes (whole classes) as pseudo-unseen."""
    if not 0 < holdout_fraction < 1:
        raise ParameterError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    seen = np.array(data.seen_classes)
    n_hold = max(1, round(holdout_fraction * seen.size))
    if seen.size - n_hold < 2:
        raise DataError(
            f"{seen.size} seen classes are too few: holding out {n_hold} leaves fewer than 2 for training"
        )
    perm = seen[rng.permutation(seen.size)]
    return tuple(sorted(perm[n_hold:].tolist())), tuple(sorted(perm[:n_hold].tolist()))


def _parallel_map(fn, items):
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def zsc_cross_validate(
    data: Dataset,
    candidate_cfgs: Sequence[GeneratorConfig],
    holdout_fraction: float = 0.2,
    rng: Rng | None = None,
    *,
    clf_cfg: ClassifierConfig | None = None,
    per_class: int = DEFAULT_PER_CLASS,
    folds: int = 1,
    on_batch: BatchHook | None = None,
) -> CvResult:
    """Pick the candidate with the best mean u2u accuracy on pseudo-unseen seen classes."""
    if not candidate_cfgs:
        raise ParameterError("need at least one candidate config")
    if folds < 1:
        raise ParameterError("folds must be >= 1")
    rng = rng or Rng(0)
    fold_data, fold_info = [], []
    for f in range(folds):
        pseudo_seen, pseudo_unseen = validation_split(data, holdout_fraction, rng.child(f"fold-{f}"))
        fold_data.append(restrict(data, pseudo_seen, pseudo_unseen))
        fold_info.append({"pseudo_seen": list(pseudo_seen), "pseudo_unseen": list(pseudo_unseen)})

    jobs = [(i, f) for i in range(len(candidate_cfgs)) for f in range(folds)]

    def run(job):
        i, f = job
        rep = run_zsc(
            fold_data[f], candidate_cfgs[i], clf_cfg, per_class, rng.child(f"candidate-{i}-fold-{f}"), on_batch=on_batch
        )
        return rep.scenario_accuracy["u2u"]

    scores = _parallel_map(run, jobs)
    accs = [float(np.mean(scores[i * folds : (i + 1) * folds])) for i in range(len(candidate_cfgs))]
    best = int(np.argmax(accs))  # first maximum on ties
    return CvResult([c.to_dict() for c in candidate_cfgs], accs, best, fold_info)


@dataclass
class ComparisonTable:
    datasets: list[str]
    rows: dict[str, dict[str, float]]
    seeds: dict[str, int]
    counts: dict[str, dict[str, tuple[int, int]]]
    chance: dict[str, float]
    final_losses: dict[str, dict[str, dict[str, float]]]

    def to_dict(self) -> dict:
        return {
            "columns": self.datasets + ["avg"],
            "rows": {k: self.rows[k] for k in self.rows},
            "seeds": self.seeds,
            "chance": self.chance,
            "counts": {k: {d: list(v) for d, v in c.items()} for k, c in self.counts.items()},
            "final_losses": self.final_losses,
        }

    def render(self) -> str:
        cols = self.datasets + ["avg"]
        width = max(len(k) for k in self.rows) + 2
        lines = ["model".ljust(width) + "".join(f"{c:>12}" for c in cols)]
        for kind, row in self.rows.items():
            lines.append(kind.ljust(width) + "".join(f"{100 * row[c]:>12.2f}" for c in cols))
        return "\n".join(lines)


def compare_generators(
    data: Dataset | Mapping[str, Dataset],
    cfgs: Mapping[str, GeneratorConfig],
    rng: Rng | None = None,
    *,
    clf_cfg: ClassifierConfig | None = None,
    per_class: int = DEFAULT_PER_CLASS,
    holdout_fraction: float = 0.2,
) -> ComparisonTable:
    """u2u accuracy of every generator kind on each dataset's validation split.

    All kinds share one validation split per dataset; each kind trains from
    its own seed derived from the master stream.
    """
    missing = [k for k in MODEL_KINDS if k not in cfgs]
    if missing:
        raise ParameterError(f"compare_generators needs a config for every kind; missing {missing}")
    for kind, cfg in cfgs.items():
        if cfg.model_kind != kind:
            raise ParameterError(f"config under {kind!r} has model_kind {cfg.model_kind!r}")
    datasets = {"synthetic": data} if isinstance(data, Dataset) else dict(data)
    rng = rng or Rng(0)
    seeds = {kind: rng.child(f"kind-{kind}").derive_seed() for kind in MODEL_KINDS}
    splits = {}
    for name, d in datasets.items():
        seen, unseen = validation_split(d, holdout_fraction, rng.child(f"split-{name}"))
        splits[name] = restrict(d, seen, unseen)

    jobs = [(kind, name) for kind in MODEL_KINDS for name in datasets]

    def run(job):
        kind, name = job
        return run_zsc(splits[name], cfgs[kind], clf_cfg, per_class, Rng(seeds[kind]).child(name))

    reports = dict(zip(jobs, _parallel_map(run, jobs)))
    rows, counts, losses = {}, {}, {}
    for kind in MODEL_KINDS:
        row = {name: reports[(kind, name)].scenario_accuracy["u2u"] for name in datasets}
        row["avg"] = float(np.mean(list(row.values())))
        rows[kind] = row
        counts[kind] = {name: reports[(kind, name)].counts["u2u"] for name in datasets}
        losses[kind] = {name: reports[(kind, name)].train_report.final for name in datasets}
    chance = {name: 1.0 / len(splits[name].unseen_classes) for name in datasets}
    return ComparisonTable(list(datasets), rows, seeds, counts, chance, losses)
