"""Datasets, preprocessing, manifest I/O and the synthetic benchmark."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParameterError, ShapeError, SplitError
from .formats import (
    dump_json,
    load_json,
    read_labels,
    read_matrix,
    write_labels,
    write_matrix,
)
from .numerics import Rng, sample_gaussian, sample_uniform

MANIFEST_KEYS = (
    "features",
    "labels",
    "class_attributes",
    "class_names",
    "seen_classes",
    "unseen_classes",
    "train_indices",
    "test_indices",
)


@dataclass(eq=False)
class Dataset:
    """Image features for all images plus class-level attributes and the split.

    Unseen classes may only appear in ``test_indices``.
    """

    features: np.ndarray
    labels: np.ndarray
    class_attributes: np.ndarray
    class_names: list[str]
    seen_classes: tuple[int, ...]
    unseen_classes: tuple[int, ...]
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_attributes = np.ascontiguousarray(self.class_attributes, dtype=np.float64)
        self.class_names = [str(n) for n in self.class_names]
        self.seen_classes = tuple(int(c) for c in self.seen_classes)
        self.unseen_classes = tuple(int(c) for c in self.unseen_classes)
        self.train_indices = np.asarray(self.train_indices, dtype=np.int64)
        self.test_indices = np.asarray(self.test_indices, dtype=np.int64)
        self.validate()

    @property
    def num_classes(self) -> int:
        return self.class_attributes.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def attr_dim(self) -> int:
        return self.class_attributes.shape[1]

    def validate(self) -> None:
        f, y, a = self.features, self.labels, self.class_attributes
        if f.ndim != 2 or a.ndim != 2:
            raise ShapeError(f"features {f.shape} and class_attributes {a.shape} must be 2-D")
        if y.shape != (f.shape[0],):
            raise ShapeError(f"{f.shape[0]} feature rows but {y.shape} labels")
        if not np.all(np.isfinite(f)) or not np.all(np.isfinite(a)):
            raise DataError("features and attributes must be finite")
        c = a.shape[0]
        if len(self.class_names) != c:
            raise DataError(f"{len(self.class_names)} class names for {c} classes")
        if y.size and (y.min() < 0 or y.max() >= c):
            bad = int(y[(y < 0) | (y >= c)][0])
            raise DataError(f"label {bad} outside [0, {c})")
        seen, unseen = set(self.seen_classes), set(self.unseen_classes)
        if len(seen) != len(self.seen_classes) or len(unseen) != len(self.unseen_classes):
            raise SplitError("duplicate class id in seen/unseen lists")
        for cls in seen | unseen:
            if not 0 <= cls < c:
                raise SplitError(f"split class {cls} outside [0, {c})")
        overlap = seen & unseen
        if overlap:
            raise SplitError(f"classes {sorted(overlap)} are both seen and unseen")
        stray = set(np.unique(y).tolist()) - seen - unseen
        if stray:
            raise SplitError(f"labels reference classes {sorted(stray)} that are neither seen nor unseen")
        n = f.shape[0]
        for name, idx in (("train_indices", self.train_indices), ("test_indices", self.test_indices)):
            if idx.ndim != 1:
                raise ShapeError(f"{name} must be 1-D")
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataError(f"{name} out of range [0, {n})")
            if np.unique(idx).size != idx.size:
                raise DataError(f"{name} contains duplicates")
        both = np.intersect1d(self.train_indices, self.test_indices)
        if both.size:
            raise SplitError(f"image {int(both[0])} is in both train and test partitions")
        leaked = np.isin(y[self.train_indices], list(unseen))
        if leaked.any():
            img = int(self.train_indices[np.argmax(leaked)])
            raise SplitError(f"train image {img} belongs to unseen class {int(y[img])}")

    def train_set(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.train_indices], self.labels[self.train_indices]

    def test_set(self, pool: str) -> tuple[np.ndarray, np.ndarray]:
        """Test images whose class is in ``pool`` ("seen" or "unseen")."""
        classes = self.seen_classes if pool == "seen" else self.unseen_classes
        idx = self.test_indices[np.isin(self.labels[self.test_indices], classes)]
        return self.features[idx], self.labels[idx]

    def class_indices(self, cls: int, partition: str = "train") -> np.ndarray:
        idx = self.train_indices if partition == "train" else self.test_indices
        return idx[self.labels[idx] == cls]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.class_attributes, other.class_attributes)
            and self.class_names == other.class_names
            and self.seen_classes == other.seen_classes
            and self.unseen_classes == other.unseen_classes
            and np.array_equal(self.train_indices, other.train_indices)
            and np.array_equal(self.test_indices, other.test_indices)
        )


def save_dataset(data: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "features.fgz", data.features)
    write_labels(out / "labels.fgzl", data.labels)
    write_matrix(out / "class_attributes.fgz", data.class_attributes)
    manifest = {
        "features": "features.fgz",
        "labels": "labels.fgzl",
        "class_attributes": "class_attributes.fgz",
        "class_names": data.class_names,
        "seen_classes": list(data.seen_classes),
        "unseen_classes": list(data.unseen_classes),
        "train_indices": data.train_indices.tolist(),
        "test_indices": data.test_indices.tolist(),
    }
    path = out / "manifest.json"
    dump_json(path, manifest)
    return path


def load_dataset(manifest_path) -> Dataset:
    path = Path(manifest_path)
    manifest = load_json(path)
    if not isinstance(manifest, dict):
        raise FormatError(f"{path}: manifest must be a JSON object")
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(f"{path}: manifest missing keys {missing}")
    unknown = sorted(set(manifest) - set(MANIFEST_KEYS))
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {unknown}")
    base = path.parent
    return Dataset(
        features=read_matrix(base / manifest["features"]),
        labels=read_labels(base / manifest["labels"]),
        class_attributes=read_matrix(base / manifest["class_attributes"]),
        class_names=manifest["class_names"],
        seen_classes=manifest["seen_classes"],
        unseen_classes=manifest["unseen_classes"],
        train_indices=manifest["train_indices"],
        test_indices=manifest["test_indices"],
    )


def average_image_attributes(per_image_attrs: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Class attribute rows as the mean of that class's per-image attribute rows."""
    labels = np.asarray(labels)
    if per_image_attrs.shape[0] != labels.shape[0]:
        raise ShapeError(f"{per_image_attrs.shape[0]} attribute rows but {labels.shape[0]} labels")
    out = np.empty((num_classes, per_image_attrs.shape[1]))
    for c in range(num_classes):
        rows = per_image_attrs[labels == c]
        if rows.shape[0] == 0:
            raise DataError(f"class {c} has no images to average attributes over")
        out[c] = rows.mean(axis=0)
    return out


@dataclass(frozen=True)
class ScalingParams:
    minimum: np.ndarray
    maximum: np.ndarray

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}


def fit_scaling(train_features: np.ndarray) -> ScalingParams:
    return ScalingParams(train_features.min(axis=0), train_features.max(axis=0))


def apply_scaling(params: ScalingParams, m: np.ndarray) -> np.ndarray:
    """Per-column affine map onto [0, 1]; constant columns map to 0, outliers are clamped."""
    span = params.maximum - params.minimum
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (m - params.minimum) / safe, 0.0)
    return np.clip(out, 0.0, 1.0)


def preprocess(data: Dataset) -> tuple[Dataset, ScalingParams, ScalingParams]:
    """Scale features (fit on the train partition) and class attributes to [0, 1]."""
    if data.train_indices.size == 0:
        raise DataError("cannot fit feature scaling: empty train partition")
    fs = fit_scaling(data.features[data.train_indices])
    at = fit_scaling(data.class_attributes)
    scaled = replace(
        data,
        features=apply_scaling(fs, data.features),
        class_attributes=apply_scaling(at, data.class_attributes),
    )
    return scaled, fs, at


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 20
    seen_count: int = 15
    attr_dim: int = 8
    feature_dim: int = 32
    examples_per_class_train: int = 100
    examples_per_class_test: int = 50
    nonlinearity: str = "linear"
    noise_stddev: float = 0.05
    seed: int = 0

    def __post_init__(self):
        counts = ("num_classes", "seen_count", "attr_dim", "feature_dim",
                  "examples_per_class_train", "examples_per_class_test")
        for name in counts:
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seen_count >= self.num_classes:
            raise ParameterError(
                f"seen_count ({self.seen_count}) must be smaller than num_classes ({self.num_classes})"
            )
        if self.nonlinearity not in ("linear", "tanh-mixed"):
            raise ParameterError(f"nonlinearity must be 'linear' or 'tanh-mixed', got {self.nonlinearity!r}")
        if self.noise_stddev < 0:
            raise ParameterError("noise_stddev must be >= 0")


@dataclass(eq=False)
class SyntheticOracle:
    """Ground truth behind a synthetic dataset.

    ``unseen_train_*`` are the real (scaled) training images of the unseen
    classes, withheld from the Dataset; they exist only to fit oracle
    classifiers.
    """

    spec: SyntheticSpec
    linear_map: np.ndarray
    offset: np.ndarray
    tanh_map: np.ndarray | None
    tanh_offset: np.ndarray | None
    feature_scaling: ScalingParams
    unseen_train_features: np.ndarray
    unseen_train_labels: np.ndarray = field(repr=False)

    def raw_features(self, attrs: np.ndarray) -> np.ndarray:
        out = attrs @ self.linear_map + self.offset
        if self.tanh_map is not None:
            out = out + np.tanh(2.0 * (attrs @ self.tanh_map + self.tanh_offset))
        return out

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "linear_map": self.linear_map.tolist(),
            "offset": self.offset.tolist(),
            "tanh_map": None if self.tanh_map is None else self.tanh_map.tolist(),
            "tanh_offset": None if self.tanh_offset is None else self.tanh_offset.tolist(),
            "feature_scaling": self.feature_scaling.to_dict(),
            "formula": "x = clip01(scale(a @ linear_map + offset [+ tanh(2 (a @ tanh_map + tanh_offset))] + noise))",
        }


def make_synthetic(spec: SyntheticSpec) -> tuple[Dataset, SyntheticOracle]:
    rng = Rng(spec.seed)
    a_dim, d = spec.attr_dim, spec.feature_dim
    attrs = sample_uniform(rng.child("attributes"), spec.num_classes, a_dim, 0.0, 1.0)
    map_rng = rng.child("map")
    lin = sample_gaussian(map_rng, a_dim, d, 0.0, 1.0)
    offset = sample_gaussian(map_rng, 1, d, 0.0, 1.0)[0]
    tanh_map = tanh_offset = None
    if spec.nonlinearity == "tanh-mixed":
        tanh_map = sample_gaussian(map_rng, a_dim, d, 0.0, 1.0)
        tanh_offset = -0.5 * tanh_map.sum(axis=0)  # centres the tanh argument for a ~ U[0,1]
    oracle_fn = SyntheticOracle(spec, lin, offset, tanh_map, tanh_offset, None, None, None)  # type: ignore[arg-type]

    n_tr, n_te = spec.examples_per_class_train, spec.examples_per_class_test
    noise_rng = rng.child("noise")
    feats, labels, train_idx, test_idx = [], [], [], []
    held_out, held_out_labels = [], []
    row = 0
    for c in range(spec.num_classes):
        clean = oracle_fn.raw_features(attrs[c : c + 1])
        x = clean + sample_gaussian(noise_rng, n_tr + n_te, d, 0.0, spec.noise_stddev)
        if c < spec.seen_count:
            feats.append(x)
            labels.extend([c] * (n_tr + n_te))
            train_idx.extend(range(row, row + n_tr))
            test_idx.extend(range(row + n_tr, row + n_tr + n_te))
            row += n_tr + n_te
        else:
            held_out.append(x[:n_tr])
            held_out_labels.extend([c] * n_tr)
            feats.append(x[n_tr:])
            labels.extend([c] * n_te)
            test_idx.extend(range(row, row + n_te))
            row += n_te
    features = np.vstack(feats)
    scaling = fit_scaling(features[train_idx])
    features = apply_scaling(scaling, features)
    data = Dataset(
        features=features,
        labels=np.array(labels),
        class_attributes=apply_scaling(fit_scaling(attrs), attrs),
        class_names=[f"class_{c:02d}" for c in range(spec.num_classes)],
        seen_classes=tuple(range(spec.seen_count)),
        unseen_classes=tuple(range(spec.seen_count, spec.num_classes)),
        train_indices=np.array(train_idx),
        test_indices=np.array(test_idx),
    )
    oracle = SyntheticOracle(
        spec, lin, offset, tanh_map, tanh_offset, scaling,
        apply_scaling(scaling, np.vstack(held_out)), np.array(held_out_labels),
    )
    return data, oracle


def restrict(data: Dataset, seen: Sequence[int], unseen: Sequence[int], unseen_partition: str = "test") -> Dataset:
    """Sub-problem over ``seen`` and ``unseen`` classes, keeping class ids unchanged.

    Images of other classes are dropped. Images of ``unseen`` classes are
    kept only from ``unseen_partition`` ("test" or "all") and always land
    in the test partition.
    """
    seen, unseen = tuple(sorted(seen)), tuple(sorted(unseen))
    y = data.labels
    keep_train = data.train_indices[np.isin(y[data.train_indices], seen)]
    keep_test = data.test_indices[np.isin(y[data.test_indices], seen + unseen)]
    if unseen_partition == "all":
        extra = data.train_indices[np.isin(y[data.train_indices], unseen)]
        keep_test = np.sort(np.concatenate([keep_test, extra]))
    rows = np.concatenate([keep_train, keep_test])
    order = np.argsort(rows, kind="stable")
    rows = rows[order]
    new_pos = np.empty(rows.size, dtype=np.int64)
    new_pos[order] = np.arange(rows.size)
    return Dataset(
        features=data.features[rows],
        labels=y[rows],
        class_attributes=data.class_attributes,
        class_names=data.class_names,
        seen_classes=seen,
        unseen_classes=unseen,
        train_indices=np.sort(new_pos[: keep_train.size]),
        test_indices=np.sort(new_pos[keep_train.size :]),
    )
