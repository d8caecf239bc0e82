from itertools import pairwise

import numpy as np
import pytest
from helpers import KINDS, small
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest

from featgen.classifier import ClassifierConfig, SoftmaxClassifier, predict_topk
from featgen.data import SyntheticSpec, make_synthetic
from featgen.errors import DataError, ParameterError
from featgen.generators import GeneratorConfig, train_generator
from featgen.numerics import Rng
from featgen.pipeline import (
    SCENARIOS,
    Scenario,
    baseline_nearest_attribute,
    compare_generators,
    config_digest,
    flat_hit_at_k,
    max_workers,
    restricted_top1,
    run_gzsc,
    run_zsc,
    validation_split,
    zsc_cross_validate,
)

FAST_CLF = ClassifierConfig(epochs=10)


def test_scenario_table(tiny_bench):
    data, _ = tiny_bench
    assert [s.tag for s in SCENARIOS] == ["u2u", "s2s", "u2a", "s2a"]
    assert Scenario("u2a").classes(data) == tuple(range(data.num_classes))
    assert Scenario("s2s").test_pool == "seen"
    with pytest.raises(ParameterError):
        Scenario("a2u")


def test_restricted_top1_matches_manual_masking():
    scores = np.array([[0.1, 0.9, 0.5], [0.7, 0.2, 0.7]])
    assert restricted_top1(scores, (4, 5, 6), (4, 6)).tolist() == [6, 4]
    assert restricted_top1(scores, (4, 5, 6), (4, 5, 6)).tolist() == [5, 4]


def test_flat_hit_rank_three():
    clf = SoftmaxClassifier(np.zeros((5, 1)), np.array([5.0, 4.0, 3.0, 2.0, 1.0]), (0, 1, 2, 3, 4))
    assert flat_hit_at_k(clf, np.zeros((1, 1)), np.array([2]), [1, 2, 5]) == {1: 0.0, 2: 0.0, 5: 100.0}


def test_flat_hit_errors():
    clf = SoftmaxClassifier(np.zeros((3, 1)), np.zeros(3), (0, 1, 2))
    with pytest.raises(DataError):
        flat_hit_at_k(clf, np.zeros((0, 1)), np.array([], dtype=int), [1])
    with pytest.raises(ParameterError):
        flat_hit_at_k(clf, np.zeros((1, 1)), np.array([0]), [4])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(2, 8), st.integers(0, 2**31))
def test_flat_hit_properties(n, c, seed):
    r = Rng(seed)
    clf = SoftmaxClassifier(r.normal((c, 3)), r.normal(c), tuple(range(c)))
    x, y = r.normal((n, 3)), r.integers(0, c, n)
    ks = list(range(1, c + 1))
    hits = flat_hit_at_k(clf, x, y, ks)
    vals = [hits[k] for k in ks]
    assert all(a <= b for a, b in pairwise(vals))
    assert vals[-1] == 100.0
    assert hits[1] == pytest.approx(100.0 * np.mean(predict_topk(clf, x, 1)[:, 0] == y), abs=1e-12)


def test_run_zsc_contract(tiny_bench):
    data, _ = tiny_bench
    rep = run_zsc(data, small(epochs=20), FAST_CLF, 50, Rng(0))
    assert set(rep.scenario_accuracy) == {"u2u"}
    assert set(rep.flat_hit) == {1, 2}
    assert rep.counts["u2u"][1] == data.test_set("unseen")[1].size
    assert rep.train_report is not None
    d = rep.to_dict()
    assert set(d) == {"scenario_accuracy", "per_class_accuracy", "flat_hit", "seed", "config_digest"}
    again = run_zsc(data, small(epochs=20), FAST_CLF, 50, Rng(0))
    assert again.to_dict() == d


def test_run_zsc_rejects_bad_inputs(tiny_bench):
    data, _ = tiny_bench
    with pytest.raises(ParameterError):
        run_zsc(data, small(), FAST_CLF, 0, Rng(0))
    with pytest.raises(ParameterError):
        run_zsc(data, None, FAST_CLF, 5, Rng(0))
    other, _ = make_synthetic(SyntheticSpec(num_classes=6, seen_count=4, attr_dim=3, feature_dim=8))
    model, _ = train_generator(other, small(epochs=0), Rng(0))
    with pytest.raises(DataError):
        run_zsc(data, None, FAST_CLF, 5, Rng(0), model=model)


def test_untrained_generator_is_at_chance():
    data, _ = make_synthetic(SyntheticSpec(num_classes=10, seen_count=5, attr_dim=4, feature_dim=8, seed=2))
    rep = run_zsc(data, small(epochs=0), FAST_CLF, 50, Rng(1))
    ok, n = rep.counts["u2u"]
    assert binomtest(ok, n, 1.0 / len(data.unseen_classes)).pvalue > 0.05


def test_run_gzsc_contract(tiny_bench):
    data, _ = tiny_bench
    for generate_seen in (False, True):
        rep = run_gzsc(data, small(epochs=10), FAST_CLF, 30, Rng(4), generate_seen=generate_seen)
        assert list(rep.scenario_accuracy) == ["u2u", "s2s", "u2a", "s2a"]
        assert rep.scenario_accuracy["u2a"] <= rep.scenario_accuracy["u2u"]
        assert rep.scenario_accuracy["s2a"] <= rep.scenario_accuracy["s2s"]


def test_baseline_exact_match_and_determinism(tiny_bench):
    data, _ = tiny_bench
    a = baseline_nearest_attribute(data)
    b = baseline_nearest_attribute(data)
    assert a.to_dict() == b.to_dict()
    assert set(a.scenario_accuracy) == {"u2u", "s2s", "u2a", "s2a"}
    ok, n = a.counts["u2u"]
    assert binomtest(ok, n, 1.0 / len(data.unseen_classes), alternative="greater").pvalue < 0.05
    only_unseen = baseline_nearest_attribute(data, label_space=data.unseen_classes)
    assert set(only_unseen.scenario_accuracy) == {"u2u"}


def test_baseline_zero_distance_match():
    # noiseless linear data: the ridge map recovers attributes almost exactly
    data, _ = make_synthetic(SyntheticSpec(num_classes=6, seen_count=4, attr_dim=3, feature_dim=12, noise_stddev=0.0))
    rep = baseline_nearest_attribute(data, ridge=1e-9)
    assert rep.scenario_accuracy["u2a"] == 1.0


def test_validation_split_by_class(tiny_bench):
    data, _ = tiny_bench
    seen, held = validation_split(data, 0.25, Rng(0))
    assert len(held) == 1 and len(seen) == 3
    assert set(seen) | set(held) == set(data.seen_classes)
    with pytest.raises(ParameterError):
        validation_split(data, 1.0, Rng(0))
    with pytest.raises(DataError):
        validation_split(data, 0.75, Rng(0))


def test_cv_single_candidate_selected(tiny_bench):
    data, _ = tiny_bench
    res = zsc_cross_validate(data, [small(epochs=2)], 0.25, Rng(0), clf_cfg=FAST_CLF, per_class=20)
    assert res.selected_index == 0
    assert res.selected_accuracy == max(res.accuracies)
    assert res.to_dict()["selected_config"] == small(epochs=2).to_dict()


def test_cv_prefers_trained_over_untrained():
    data, _ = make_synthetic(SyntheticSpec(num_classes=12, seen_count=10, attr_dim=4, feature_dim=16, seed=1))
    cands = [small(epochs=0), small(epochs=100, hidden_dims=(128,), learning_rate=3e-3)]
    res = zsc_cross_validate(data, cands, 0.3, Rng(2), clf_cfg=ClassifierConfig(epochs=20), per_class=100)
    assert res.selected_index == 1, res.accuracies


def test_cv_errors(tiny_bench):
    data, _ = tiny_bench
    with pytest.raises(ParameterError):
        zsc_cross_validate(data, [], 0.25, Rng(0))
    few, _ = make_synthetic(SyntheticSpec(num_classes=4, seen_count=2, feature_dim=4, attr_dim=2))
    with pytest.raises(DataError):
        zsc_cross_validate(few, [small()], 0.2, Rng(0))


def test_compare_shape_and_average(tiny_bench):
    data, _ = tiny_bench
    other, _ = make_synthetic(SyntheticSpec(num_classes=6, seen_count=4, attr_dim=4, feature_dim=8, seed=9))
    cfgs = {k: small(k, epochs=2) for k in KINDS}
    table = compare_generators({"a": data, "b": other}, cfgs, Rng(0), clf_cfg=FAST_CLF, per_class=20, holdout_fraction=0.25)
    assert list(table.rows) == list(KINDS)
    assert table.to_dict()["columns"] == ["a", "b", "avg"]
    for row in table.rows.values():
        assert abs(row["avg"] - (row["a"] + row["b"]) / 2) < 1e-9
    assert len(set(table.seeds.values())) == 4
    assert len(table.render().splitlines()) == 5


def test_compare_requires_every_kind(tiny_bench):
    data, _ = tiny_bench
    with pytest.raises(ParameterError):
        compare_generators(data, {"gmmn": small()}, Rng(0))
    with pytest.raises(ParameterError):
        compare_generators(data, {k: small("gmmn") for k in KINDS}, Rng(0))


def test_thread_count_does_not_change_results(tiny_bench, monkeypatch):
    data, _ = tiny_bench
    cands = [small(epochs=1), small(epochs=2)]
    monkeypatch.setenv("FEATGEN_THREADS", "1")
    assert max_workers() == 1
    one = zsc_cross_validate(data, cands, 0.25, Rng(0), clf_cfg=FAST_CLF, per_class=10, folds=2)
    monkeypatch.setenv("FEATGEN_THREADS", "4")
    four = zsc_cross_validate(data, cands, 0.25, Rng(0), clf_cfg=FAST_CLF, per_class=10, folds=2)
    assert one.to_dict() == four.to_dict()
    monkeypatch.setenv("FEATGEN_THREADS", "many")
    with pytest.raises(ParameterError):
        max_workers()


def test_config_digest_is_order_independent():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})


@pytest.mark.slow
def test_generated_features_beat_baseline_on_noisy_benchmark():
    # supporting evidence only; the acceptance check runs on the default (noise 0.05) benchmark
    cfg = small(hidden_dims=(500,), epochs=100, noise=GeneratorConfig().noise)
    for seed in (0, 1, 2):
        data, _ = make_synthetic(SyntheticSpec(seed=seed, noise_stddev=1.0))
        rep = run_gzsc(data, cfg, rng=Rng(seed))
        assert rep.scenario_accuracy["u2a"] > baseline_nearest_attribute(data).scenario_accuracy["u2a"]
