import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from featgen.classifier import (
    ClassifierConfig,
    SoftmaxClassifier,
    load_classifier,
    predict_scores,
    predict_topk,
    rank_classes,
    save_classifier,
    train_classifier,
)
from featgen.errors import (
    ConfigError,
    DataError,
    FormatError,
    ParameterError,
    ShapeError,
)
from featgen.neuralnet import softmax_cross_entropy
from featgen.numerics import Rng


def blobs(rng, n=40):
    a = rng.normal((n, 2)) * 0.3 + np.array([2.0, 2.0])
    b = rng.normal((n, 2)) * 0.3 - np.array([2.0, 2.0])
    return np.vstack([a, b]), np.array([7] * n + [3] * n)


def test_separable_blobs_fit_perfectly():
    x, y = blobs(Rng(0))
    clf = train_classifier(x, y, [3, 7], lr=1e-2, epochs=100, batch_size=16, rng=Rng(1))
    assert np.mean(predict_topk(clf, x, 1)[:, 0] == y) == 1.0


def test_untrained_is_near_uniform():
    x, y = blobs(Rng(0))
    clf = train_classifier(x, y, [3, 7, 9], epochs=0, rng=Rng(1))
    local = np.where(y == 3, 0, 1)
    loss, _ = softmax_cross_entropy(clf.logits(x), local)
    assert loss == pytest.approx(math.log(3), abs=0.1)


def test_training_determinism():
    x, y = blobs(Rng(0))
    a = train_classifier(x, y, [3, 7], epochs=5, rng=Rng(2))
    b = train_classifier(x, y, [3, 7], epochs=5, rng=Rng(2))
    assert a == b


def test_training_errors():
    x, y = blobs(Rng(0))
    with pytest.raises(DataError):
        train_classifier(x, y, [3], epochs=1)
    with pytest.raises(ShapeError):
        train_classifier(x, y[:-1], [3, 7], epochs=1)
    with pytest.raises(DataError):
        SoftmaxClassifier(np.zeros((2, 2)), np.zeros(2), (1, 1))


def test_config_strictness():
    assert ClassifierConfig.from_dict({"epochs": 3}).epochs == 3
    with pytest.raises(ConfigError):
        ClassifierConfig.from_dict({"momentum": 0.9})
    with pytest.raises(ConfigError):
        ClassifierConfig(learning_rate=0)


def test_zero_weights_give_uniform_scores():
    clf = SoftmaxClassifier(np.zeros((4, 3)), np.zeros(4), (0, 1, 2, 3))
    p = predict_scores(clf, Rng(0).normal((5, 3)))
    assert np.allclose(p, 0.25, atol=1e-15)
    with pytest.raises(ShapeError):
        predict_scores(clf, np.zeros((2, 4)))


def test_ties_broken_by_class_id():
    clf = SoftmaxClassifier(np.zeros((3, 2)), np.zeros(3), (9, 2, 5))
    assert predict_topk(clf, np.ones((1, 2)), 3).tolist() == [[2, 5, 9]]
    assert rank_classes([4, 1, 3], np.array([[1.0, 2.0, 1.0]])).tolist() == [[1, 3, 4]]


def test_topk_range_errors():
    clf = SoftmaxClassifier(np.zeros((3, 2)), np.zeros(3), (0, 1, 2))
    for k in (0, 4):
        with pytest.raises(ParameterError):
            predict_topk(clf, np.ones((1, 2)), k)


def test_restricted_masks_columns():
    r = Rng(3)
    clf = SoftmaxClassifier(r.normal((4, 3)), r.normal(4), (10, 11, 12, 13))
    sub = clf.restricted([13, 11])
    x = r.normal((6, 3))
    full = clf.logits(x)
    assert np.array_equal(sub.logits(x), full[:, [3, 1]])
    with pytest.raises(DataError):
        clf.restricted([99])


def test_save_load(tmp_path):
    r = Rng(3)
    clf = SoftmaxClassifier(r.normal((4, 3)), r.normal(4), (10, 11, 12, 13))
    save_classifier(clf, tmp_path / "c.fgzm")
    assert load_classifier(tmp_path / "c.fgzm") == clf
    (tmp_path / "c.fgzm.json").write_text('{"model_kind": "gmmn", "class_ids": [1]}')
    with pytest.raises(FormatError):
        load_classifier(tmp_path / "c.fgzm")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 8), st.floats(-20, 20), st.integers(0, 2**31))
def test_ranking_properties(n, c, shift, seed):
    r = Rng(seed)
    ids = tuple(int(i) for i in r.permutation(50)[:c])
    clf = SoftmaxClassifier(r.normal((c, 3)), r.normal(c), ids)
    x = r.normal((n, 3))
    p = predict_scores(clf, x)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    full = predict_topk(clf, x, c)
    assert all(sorted(row) == sorted(ids) for row in full.tolist())
    top1 = predict_topk(clf, x, 1)[:, 0]
    assert np.array_equal(top1, np.array(ids)[np.argmax(p, axis=1)])
    shifted = SoftmaxClassifier(clf.weights, clf.biases + shift, ids)
    assert np.array_equal(predict_topk(shifted, x, 1), predict_topk(clf, x, 1))
