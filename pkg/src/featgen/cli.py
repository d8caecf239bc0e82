"""``featgen`` command line: synth, train, eval, cv, compare.

stdout carries only the documented tables/paths; logs go to stderr.
Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .classifier import ClassifierConfig
from .data import SyntheticSpec, load_dataset, make_synthetic, preprocess, save_dataset
from .errors import ConfigError, FeatGenError, NumericalError
from .formats import dump_json, load_json, write_labels, write_matrix
from .generators import (
    MODEL_KINDS,
    GeneratorConfig,
    load_generator_model,
    save_generator_model,
    train_generator,
)
from .numerics import Rng
from .pipeline import (
    DEFAULT_KS,
    DEFAULT_PER_CLASS,
    compare_generators,
    run_gzsc,
    run_zsc,
    zsc_cross_validate,
)

log = logging.getLogger("featgen")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs. JSON keys mirror the field names."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    per_class: int = DEFAULT_PER_CLASS
    mode: str = "zsc"
    ks: tuple[int, ...] = DEFAULT_KS
    generate_seen: bool = False
    seed: int = 0

    KEYS = ("generator", "classifier", "per_class", "mode", "ks", "generate_seen", "seed")

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if not isinstance(d, dict):
            raise ConfigError("run config must be a JSON object")
        unknown = sorted(set(d) - set(cls.KEYS))
        if unknown:
            raise ConfigError(f"unknown run config keys {unknown}")
        kw = dict(d)
        if "generator" in kw:
            kw["generator"] = GeneratorConfig.from_dict(kw["generator"])
        if "classifier" in kw:
            kw["classifier"] = ClassifierConfig.from_dict(kw["classifier"])
        if "ks" in kw:
            kw["ks"] = tuple(int(k) for k in kw["ks"])
        if kw.get("mode", "zsc") not in ("zsc", "gzsc"):
            raise ConfigError(f"mode must be 'zsc' or 'gzsc', got {kw['mode']!r}")
        if "per_class" in kw and (not isinstance(kw["per_class"], int) or kw["per_class"] < 1):
            raise ConfigError("per_class must be a positive integer")
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict(),
            "classifier": self.classifier.to_dict(),
            "per_class": self.per_class,
            "mode": self.mode,
            "ks": list(self.ks),
            "generate_seen": self.generate_seen,
            "seed": self.seed,
        }


def _run_config(path, seed) -> RunConfig:
    run = RunConfig.from_dict(load_json(path)) if path else RunConfig()
    if seed is not None:
        run = replace(run, seed=seed)
    return replace(run, generator=replace(run.generator, seed=run.seed))


def _load_data(path):
    data, _, _ = preprocess(load_dataset(path))
    return data


def _write_loss_csv(path: Path, curves: dict[str, list[float]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "term", "value"])
    for term in sorted(curves):
        for epoch, v in enumerate(curves[term]):
            w.writerow([epoch, term, repr(float(v))])
    path.write_text(buf.getvalue())


def cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec(
            num_classes=args.classes,
            seen_count=args.seen_count,
            attr_dim=args.attr_dim,
            feature_dim=args.feature_dim,
            examples_per_class_train=args.train_per_class,
            examples_per_class_test=args.test_per_class,
            nonlinearity=args.nonlinearity,
            noise_stddev=args.noise,
            seed=args.seed,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data, oracle = make_synthetic(spec)
    out = Path(args.out_dir)
    manifest = save_dataset(data, out)
    write_matrix(out / "oracle_unseen_train_features.fgz", oracle.unseen_train_features)
    write_labels(out / "oracle_unseen_train_labels.fgzl", oracle.unseen_train_labels)
    desc = oracle.to_dict()
    desc["unseen_train_features"] = "oracle_unseen_train_features.fgz"
    desc["unseen_train_labels"] = "oracle_unseen_train_labels.fgzl"
    oracle_path = out / "oracle.json"
    dump_json(oracle_path, desc)
    log.info("wrote dataset manifest %s", manifest)
    print(oracle_path)
    return EXIT_OK


def cmd_train(args) -> int:
    run = _run_config(args.config, args.seed)
    gen_cfg = run.generator
    if args.kind is not None:
        gen_cfg = replace(gen_cfg, model_kind=args.kind)
    if args.epochs is not None:
        gen_cfg = replace(gen_cfg, epochs=args.epochs)
    data = _load_data(args.data)
    model, report = train_generator(data, gen_cfg, Rng(run.seed).child("generator"))
    out = Path(args.model_out)
    save_generator_model(model, out, gen_cfg)
    report_path = Path(args.report) if args.report else out.with_name(out.name + ".train.json")
    dump_json(report_path, {"model_kind": gen_cfg.model_kind, "seed": run.seed, **report.to_dict()})
    csv_path = Path(args.loss_csv) if args.loss_csv else out.with_name(out.name + ".losses.csv")
    _write_loss_csv(csv_path, report.curves)
    log.info("trained %s for %d epochs in %.1fs", gen_cfg.model_kind, gen_cfg.epochs, report.wall_seconds)
    return EXIT_OK


def _print_report(rep) -> None:
    print(f"{'scenario':<10}{'accuracy':>10}{'per_class':>11}")
    for tag, acc in rep.scenario_accuracy.items():
        print(f"{tag:<10}{100 * acc:>10.2f}{100 * rep.per_class_accuracy[tag]:>11.2f}")


def cmd_eval(args) -> int:
    run = _run_config(args.config, args.seed)
    data = _load_data(args.data)
    model, meta = load_generator_model(args.model)
    gen_cfg = GeneratorConfig.from_dict(meta["config"]) if meta.get("config") else None
    per_class = args.per_class if args.per_class is not None else run.per_class
    mode = args.mode or run.mode
    rng = Rng(run.seed)
    if mode == "zsc":
        rep = run_zsc(data, gen_cfg, run.classifier, per_class, rng, model=model, ks=run.ks)
    else:
        rep = run_gzsc(
            data, gen_cfg, run.classifier, per_class, rng, model=model, ks=run.ks, generate_seen=run.generate_seen
        )
    dump_json(args.report, rep.to_dict())
    _print_report(rep)
    return EXIT_OK


def _load_grid(path) -> list[GeneratorConfig]:
    raw = load_json(path)
    if isinstance(raw, dict):
        unknown = sorted(set(raw) - {"candidates"})
        if unknown:
            raise ConfigError(f"unknown grid keys {unknown}")
        raw = raw.get("candidates", [])
    if not isinstance(raw, list) or not raw:
        raise ConfigError("grid must be a non-empty list of generator configs")
    return [GeneratorConfig.from_dict(c) for c in raw]


def cmd_cv(args) -> int:
    run = _run_config(args.config, args.seed)
    data = _load_data(args.data)
    candidates = _load_grid(args.grid)
    res = zsc_cross_validate(
        data,
        candidates,
        args.holdout,
        Rng(run.seed),
        clf_cfg=run.classifier,
        per_class=args.per_class if args.per_class is not None else run.per_class,
        folds=args.folds,
    )
    dump_json(args.report, {"seed": run.seed, **res.to_dict()})
    for i, acc in enumerate(res.accuracies):
        mark = "*" if i == res.selected_index else " "
        print(f"{mark} candidate {i:<3}{100 * acc:>8.2f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    run = _run_config(args.config, args.seed)
    raw = load_json(args.configs)
    if not isinstance(raw, dict):
        raise ConfigError("--configs must map model kind to generator config")
    unknown = sorted(set(raw) - set(MODEL_KINDS))
    if unknown:
        raise ConfigError(f"unknown model kinds {unknown}")
    cfgs = {}
    for kind in MODEL_KINDS:
        d = dict(raw.get(kind, {}))
        d.setdefault("model_kind", kind)
        cfgs[kind] = GeneratorConfig.from_dict(d)
    datasets = {}
    for spec in args.data:
        name, _, path = spec.rpartition("=")
        path = path or spec
        datasets[name or Path(path).parent.name or "data"] = _load_data(path)
    table = compare_generators(
        datasets,
        cfgs,
        Rng(run.seed),
        clf_cfg=run.classifier,
        per_class=args.per_class if args.per_class is not None else run.per_class,
        holdout_fraction=args.holdout,
    )
    text = table.render()
    dump_json(args.report, {"seed": run.seed, **table.to_dict()})
    Path(args.report).with_suffix(".txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featgen", description="Zero-shot classification by generating unseen-class features.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic benchmark dataset")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--classes", type=int, default=20)
    s.add_argument("--seen-count", type=int, default=15)
    s.add_argument("--attr-dim", type=int, default=8)
    s.add_argument("--feature-dim", type=int, default=32)
    s.add_argument("--train-per-class", type=int, default=100)
    s.add_argument("--test-per-class", type=int, default=50)
    s.add_argument("--nonlinearity", choices=["linear", "tanh-mixed"], default="linear")
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a conditional feature generator")
    t.add_argument("--data", required=True, help="dataset manifest.json")
    t.add_argument("--config", help="run config JSON")
    t.add_argument("--model-out", required=True)
    t.add_argument("--kind", choices=MODEL_KINDS)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--report", help="train report JSON (default: <model-out>.train.json)")
    t.add_argument("--loss-csv", help="loss curve CSV (default: <model-out>.losses.csv)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a trained generator (ZSC or GZSC)")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--mode", choices=["zsc", "gzsc"])
    e.add_argument("--per-class", type=int)
    e.add_argument("--report", required=True)
    e.add_argument("--config")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("cv", help="zero-shot cross-validation over a config grid")
    c.add_argument("--data", required=True)
    c.add_argument("--grid", required=True, help="JSON list (or {'candidates': [...]}) of generator configs")
    c.add_argument("--report", required=True)
    c.add_argument("--config")
    c.add_argument("--holdout", type=float, default=0.2)
    c.add_argument("--folds", type=int, default=1)
    c.add_argument("--per-class", type=int)
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_cv)

    m = sub.add_parser("compare", help="compare the four generator kinds on validation splits")
    m.add_argument("--data", required=True, action="append", help="manifest path, optionally NAME=path; repeatable")
    m.add_argument("--configs", required=True, help="JSON mapping model kind -> generator config")
    m.add_argument("--report", required=True)
    m.add_argument("--config")
    m.add_argument("--holdout", type=float, default=0.2)
    m.add_argument("--per-class", type=int)
    m.add_argument("--seed", type=int)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (FeatGenError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
