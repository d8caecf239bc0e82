"""Biased MMD^2 with a mixture of Gaussian kernels, and its gradient.

Kernel convention: k(u, v) = sum_k w_k * exp(-||u - v||^2 / (2 sigma_k^2)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .numerics import Matrix

DEFAULT_BANDWIDTHS = (1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass(frozen=True)
class KernelSpec:
    bandwidths: tuple[float, ...] = DEFAULT_BANDWIDTHS
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bandwidths", tuple(float(s) for s in self.bandwidths))
        if not self.bandwidths:
            raise ParameterError("KernelSpec needs at least one bandwidth")
        if any(not s > 0 for s in self.bandwidths):
            raise ParameterError(f"bandwidths must be positive, got {self.bandwidths}")
        if self.weights is None:
            object.__setattr__(self, "weights", (1.0,) * len(self.bandwidths))
        else:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(self.bandwidths):
            raise ParameterError("one weight per bandwidth required")
        if any(not w > 0 for w in self.weights):
            raise ParameterError(f"kernel weights must be positive, got {self.weights}")

    def to_dict(self) -> dict:
        return {"bandwidths": list(self.bandwidths), "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, d: dict) -> KernelSpec:
        return cls(tuple(d["bandwidths"]), tuple(d["weights"]) if d.get("weights") is not None else None)


def _sq_dists(x: Matrix, y: Matrix) -> Matrix:
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"cannot compare samples of shape {x.shape} and {y.shape}")
    d = (x * x).sum(1)[:, None] + (y * y).sum(1)[None, :] - 2.0 * (x @ y.T)
    return np.maximum(d, 0.0)


def _per_bandwidth(x: Matrix, y: Matrix, kernel: KernelSpec) -> list[Matrix]:
    d = _sq_dists(x, y)
    return [w * np.exp(-d / (2.0 * s * s)) for s, w in zip(kernel.bandwidths, kernel.weights)]


def gram(x: Matrix, y: Matrix, kernel: KernelSpec) -> Matrix:
    return sum(_per_bandwidth(x, y, kernel))


def _check_samples(x: Matrix, y: Matrix) -> None:
    if x.shape[0] < 1 or y.shape[0] < 1:
        raise DataError(f"MMD needs non-empty samples, got {x.shape[0]} and {y.shape[0]} rows")


def mmd2_biased(x: Matrix, y: Matrix, kernel: KernelSpec) -> float:
    _check_samples(x, y)
    kxx = gram(x, x, kernel).mean()
    kyy = gram(y, y, kernel).mean()
    kxy = gram(x, y, kernel).mean()
    # V-statistic is a squared RKHS norm; clip round-off below zero
    return max(float(kxx + kyy - 2.0 * kxy), 0.0)


def mmd2_gradient(x_generated: Matrix, y_real: Matrix, kernel: KernelSpec) -> Matrix:
    """d mmd2_biased / d x_generated, with y_real held constant."""
    x, y = x_generated, y_real
    _check_samples(x, y)
    n, m = x.shape[0], y.shape[0]
    grad = np.zeros_like(x)
    kxx_all = _per_bandwidth(x, x, kernel)
    kxy_all = _per_bandwidth(x, y, kernel)
    for s, kxx, kxy in zip(kernel.bandwidths, kxx_all, kxy_all):
        inv = 1.0 / (s * s)
        # d k(x_i, v)/d x_i = -k(x_i, v) (x_i - v) / s^2; the xx term counts each pair twice
        a = kxx * inv
        grad -= (2.0 / (n * n)) * (a.sum(1)[:, None] * x - a @ x)
        b = kxy * inv
        grad += (2.0 / (n * m)) * (b.sum(1)[:, None] * x - b @ y)
    return grad

