import csv
import json
import subprocess
import sys

import pytest

from featgen import cli
from featgen.data import load_dataset
from featgen.generators import GeneratorConfig, load_generator_model
from featgen.generators.model import build_generator
from featgen.numerics import Rng

SMALL = ["--classes", 8, "--seen-count", 6, "--attr-dim", 4, "--feature-dim", 8,
         "--train-per-class", 20, "--test-per-class", 10]
NET = {"hidden_dims": [32], "discriminator_hidden_dims": [32], "width_range": [8, 2000],
       "noise": {"dim": 4}, "learning_rate": 1e-3}


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def dataset(tmp_path):
    assert run("synth", "--out-dir", tmp_path / "data", *SMALL, "--seed", 1) == 0
    return tmp_path / "data" / "manifest.json"


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_synth_defaults_and_oracle_path(tmp_path, capsys):
    assert run("synth", "--out-dir", tmp_path / "d") == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / "d" / "oracle.json")
    data = load_dataset(tmp_path / "d" / "manifest.json")
    assert data.num_classes == 20 and len(data.seen_classes) == 15
    oracle = json.loads((tmp_path / "d" / "oracle.json").read_text())
    assert oracle["spec"]["seed"] == 0


def test_synth_same_seed_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--out-dir", tmp_path / name, *SMALL, "--seed", 7) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_synth_invalid_spec_exit_2(tmp_path):
    assert run("synth", "--out-dir", tmp_path / "d", "--seen-count", 25, "--classes", 20) == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        run("train")
    assert exc.value.code == 2


def test_train_writes_model_report_and_csv(dataset, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"generator": {**NET, "model_kind": "gmmn", "epochs": 30}})
    assert run("train", "--data", dataset, "--config", cfg, "--model-out", tmp_path / "m.fgzm") == 0
    model, _ = load_generator_model(tmp_path / "m.fgzm")
    assert model.kind == "gmmn"
    report = json.loads((tmp_path / "m.fgzm.train.json").read_text())
    assert "wall_seconds" not in report and report["seed"] == 0
    rows = list(csv.DictReader((tmp_path / "m.fgzm.losses.csv").open()))
    assert rows[0].keys() == {"epoch", "term", "value"}
    values = [float(r["value"]) for r in rows if r["term"] == "mmd2"]
    assert len(values) == 30
    assert sum(values[-5:]) < sum(values[:5])


def test_train_epochs_zero_is_init(dataset, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"generator": {**NET, "model_kind": "gmmn"}})
    assert run("train", "--data", dataset, "--config", cfg, "--model-out", tmp_path / "m.fgzm",
               "--epochs", 0, "--seed", 3) == 0
    model, meta = load_generator_model(tmp_path / "m.fgzm")
    gcfg = GeneratorConfig.from_dict(meta["config"])
    assert gcfg.epochs == 0 and gcfg.seed == 3
    expected = build_generator(gcfg, model.attr_dim, model.feature_dim, Rng(3).child("generator").child("init"))
    assert model.generator_net == expected


def test_train_bad_inputs_exit_2(dataset, tmp_path):
    assert run("train", "--data", tmp_path / "missing.json", "--model-out", tmp_path / "m.fgzm") == 2
    bad = write_json(tmp_path / "bad.json", {"generator": {"model_kind": "gmmn", "lr": 1}})
    assert run("train", "--data", dataset, "--config", bad, "--model-out", tmp_path / "m.fgzm") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_3(dataset, tmp_path):
    cfg = write_json(
        tmp_path / "cfg.json",
        {"generator": {**NET, "model_kind": "denoising_ae", "learning_rate": 1e300, "epochs": 3}},
    )
    assert run("train", "--data", dataset, "--config", cfg, "--model-out", tmp_path / "m.fgzm") == 3


@pytest.fixture
def trained(dataset, tmp_path):
    cfg = write_json(
        tmp_path / "cfg.json",
        {"generator": {**NET, "model_kind": "gmmn", "epochs": 20}, "classifier": {"epochs": 10}, "per_class": 30},
    )
    assert run("train", "--data", dataset, "--config", cfg, "--model-out", tmp_path / "m.fgzm") == 0
    return dataset, cfg, tmp_path / "m.fgzm"


def test_eval_modes(trained, tmp_path, capsys):
    data, cfg, model = trained
    assert run("eval", "--data", data, "--model", model, "--config", cfg, "--report", tmp_path / "z.json") == 0
    z = json.loads((tmp_path / "z.json").read_text())
    assert list(z["scenario_accuracy"]) == ["u2u"]
    assert run("eval", "--data", data, "--model", model, "--config", cfg, "--mode", "gzsc",
               "--report", tmp_path / "g.json") == 0
    g = json.loads((tmp_path / "g.json").read_text())
    assert set(g["scenario_accuracy"]) == {"u2u", "s2s", "u2a", "s2a"}
    out = capsys.readouterr().out
    assert "u2a" in out and "scenario" in out


def test_eval_per_class_default_is_500():
    assert cli.RunConfig().per_class == 500
    args = cli.build_parser().parse_args(["eval", "--data", "d", "--model", "m", "--report", "r"])
    assert args.per_class is None


def test_eval_dim_mismatch_exit_2(trained, tmp_path):
    _, _, model = trained
    assert run("synth", "--out-dir", tmp_path / "other", *SMALL[:-6], "--feature-dim", 5,
               "--train-per-class", 20, "--test-per-class", 10) == 0
    assert run("eval", "--data", tmp_path / "other" / "manifest.json", "--model", model,
               "--report", tmp_path / "r.json") == 2


def test_cv_single_candidate_and_strict_grid(dataset, tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"classifier": {"epochs": 5}, "per_class": 20})
    grid = write_json(tmp_path / "grid.json", {"candidates": [{**NET, "model_kind": "gmmn", "epochs": 3}]})
    assert run("cv", "--data", dataset, "--grid", grid, "--config", cfg, "--report", tmp_path / "cv.json") == 0
    rep = json.loads((tmp_path / "cv.json").read_text())
    assert rep["selected_index"] == 0
    assert rep["selected_accuracy"] == max(c["validation_accuracy"] for c in rep["candidates"])
    bad = write_json(tmp_path / "bad.json", [{"model_kind": "gmmn", "depth": 3}])
    assert run("cv", "--data", dataset, "--grid", bad, "--report", tmp_path / "x.json") == 2


def test_compare_lists_all_kinds(dataset, tmp_path, capsys):
    kinds = {k: {**NET, "epochs": 2} for k in ("gmmn", "acgan", "denoising_ae", "adversarial_ae")}
    cfgs = write_json(tmp_path / "kinds.json", kinds)
    cfg = write_json(tmp_path / "cfg.json", {"classifier": {"epochs": 5}})
    assert run("compare", "--data", f"toy={dataset}", "--configs", cfgs, "--config", cfg, "--per-class", 20,
               "--report", tmp_path / "cmp.json") == 0
    rep = json.loads((tmp_path / "cmp.json").read_text())
    assert list(rep["rows"]) == ["acgan", "adversarial_ae", "denoising_ae", "gmmn"]  # sorted JSON keys
    assert rep["columns"] == ["toy", "avg"]
    assert len(set(rep["seeds"].values())) == 4
    lines = (tmp_path / "cmp.txt").read_text().splitlines()
    assert [ln.split()[0] for ln in lines[1:]] == ["gmmn", "acgan", "denoising_ae", "adversarial_ae"]
    bad = write_json(tmp_path / "bad.json", {"vae": {}})
    assert run("compare", "--data", dataset, "--configs", bad, "--report", tmp_path / "x.json") == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "featgen", "--help"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "synth" in proc.stdout
