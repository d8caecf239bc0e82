"""Linear softmax classifier trained with Adam on (real or generated) features."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, ParameterError, ShapeError
from .formats import dump_json, load_json, read_mlp, write_mlp
from .neuralnet import (
    InitSpec,
    LayerSpec,
    Mlp,
    adam_init,
    adam_step,
    backward,
    forward,
    init_mlp,
    softmax,
    softmax_cross_entropy,
)
from .numerics import Matrix, Rng

KIND_TAG = "softmax_classifier"


@dataclass(frozen=True)
class ClassifierConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 128
    init_stddev: float = 0.02

    def __post_init__(self):
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1 or not self.init_stddev > 0:
            raise ConfigError(f"invalid classifier config {self}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ClassifierConfig:
        if not isinstance(d, dict):
            raise ConfigError("classifier config must be a JSON object")
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise ConfigError(f"unknown classifier config keys {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid classifier config: {exc}") from exc


@dataclass(eq=False)
class SoftmaxClassifier:
    weights: np.ndarray  # (num_classes, feature_dim)
    biases: np.ndarray
    class_ids: tuple[int, ...]

    def __post_init__(self):
        self.class_ids = tuple(int(c) for c in self.class_ids)
        if len(set(self.class_ids)) != len(self.class_ids):
            raise DataError("class_ids must be unique")
        if self.weights.shape[0] != len(self.class_ids) or self.biases.shape != (len(self.class_ids),):
            raise ShapeError(
                f"weights {self.weights.shape} / biases {self.biases.shape} do not match {len(self.class_ids)} classes"
            )

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def logits(self, features: Matrix) -> Matrix:
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ShapeError(f"features {features.shape} do not match classifier feature_dim {self.feature_dim}")
        return features @ self.weights.T + self.biases

    def restricted(self, class_subset: Sequence[int]) -> SoftmaxClassifier:
        """Same scorer over a smaller label space (columns masked, not retrained)."""
        pos = {c: i for i, c in enumerate(self.class_ids)}
        try:
            rows = [pos[int(c)] for c in class_subset]
        except KeyError as exc:
            raise DataError(f"class {exc.args[0]} is not in the classifier's label space") from None
        return SoftmaxClassifier(self.weights[rows], self.biases[rows], tuple(class_subset))

    def to_mlp(self) -> Mlp:
        spec = LayerSpec(self.feature_dim, self.num_classes, "softmax")
        return Mlp((spec,), [self.weights.copy()], [self.biases.copy()])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SoftmaxClassifier):
            return NotImplemented
        return (
            self.class_ids == other.class_ids
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
        )


def train_classifier(
    features: Matrix,
    labels: np.ndarray,
    class_ids: Sequence[int],
    lr: float = 1e-3,
    epochs: int = 50,
    batch_size: int = 128,
    rng: Rng | None = None,
    init_stddev: float = 0.02,
) -> SoftmaxClassifier:
    class_ids = tuple(int(c) for c in class_ids)
    labels = np.asarray(labels)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ShapeError(f"features {features.shape} and labels {labels.shape} do not align")
    if not np.all(np.isfinite(features)):
        raise DataError("classifier features must be finite")
    lookup = {c: i for i, c in enumerate(class_ids)}
    missing = sorted(set(np.unique(labels).tolist()) - set(class_ids))
    if missing:
        raise DataError(f"labels {missing} are not in class_ids")
    if epochs < 0 or batch_size < 1:
        raise ParameterError("epochs must be >= 0 and batch_size >= 1")
    rng = rng if rng is not None else Rng(0)
    local = np.array([lookup[int(c)] for c in labels], dtype=np.int64)

    # train on logits; the softmax lives in the loss
    spec = LayerSpec(features.shape[1], len(class_ids), "linear")
    net = init_mlp([spec], InitSpec(init_stddev), rng.child("init"))
    opt = adam_init(net, lr)
    shuffle = rng.child("shuffle")
    n = features.shape[0]
    for _ in range(epochs):
        perm = shuffle.permutation(n)
        for s in range(0, n, batch_size):
            idx = perm[s : s + batch_size]
            logits, tape = forward(net, features[idx], "eval")
            _, g = softmax_cross_entropy(logits, local[idx])
            net, opt = adam_step(net, backward(net, tape, g), opt)
    return SoftmaxClassifier(net.weights[0], net.biases[0], class_ids)


def predict_scores(clf: SoftmaxClassifier, features: Matrix) -> Matrix:
    return softmax(clf.logits(features))


def rank_classes(class_ids: Sequence[int], scores: Matrix) -> np.ndarray:
    """Class ids per row by descending score; exact ties go to the smaller class id."""
    ids = np.broadcast_to(np.asarray(class_ids), scores.shape)
    order = np.lexsort(np.stack([ids, -scores]), axis=-1)
    return np.asarray(class_ids)[order]


def predict_topk(clf: SoftmaxClassifier, features: Matrix, k: int) -> np.ndarray:
    """Top-k class ids per row.

    Ranking uses the logits, which order classes exactly like the
    probabilities but without the rounding of the softmax normalisation.
    """
    if not 1 <= k <= clf.num_classes:
        raise ParameterError(f"k must be in [1, {clf.num_classes}], got {k}")
    return rank_classes(clf.class_ids, clf.logits(features))[:, :k]


def save_classifier(clf: SoftmaxClassifier, path) -> None:
    path = Path(path)
    write_mlp(path, clf.to_mlp())
    dump_json(path.with_name(path.name + ".json"), {"model_kind": KIND_TAG, "class_ids": list(clf.class_ids)})


def load_classifier(path) -> SoftmaxClassifier:
    path = Path(path)
    meta = load_json(path.with_name(path.name + ".json"))
    if meta.get("model_kind") != KIND_TAG:
        raise FormatError(f"{path}: sidecar kind {meta.get('model_kind')!r} is not {KIND_TAG!r}")
    net = read_mlp(path)
    if len(net.layers) != 1:
        raise FormatError(f"{path}: a softmax classifier has exactly one layer, found {len(net.layers)}")
    return SoftmaxClassifier(net.weights[0], net.biases[0], tuple(meta["class_ids"]))
