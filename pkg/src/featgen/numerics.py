"""Dense float64 matrices and reproducible random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64 in C
(row-major) order. ``Rng`` wraps numpy's PCG64 bit generator; Gaussian
draws are produced from its uniform doubles with the Box-Muller transform
so the stream depends only on PCG64 and IEEE arithmetic.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import ParameterError, ShapeError

Matrix = np.ndarray


def as_matrix(values, name: str = "matrix") -> Matrix:
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.ascontiguousarray(a @ b)


def transpose(a: Matrix) -> Matrix:
    return np.ascontiguousarray(a.T)


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Rng:
    """Seeded PCG64 stream with named, independent child streams.

    ``child("noise")`` always yields the same stream for the same parent
    seed and path, no matter how many draws the parent has made.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ParameterError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, name: str) -> Rng:
        return Rng(self.seed, self.path + (_stream_key(name),))

    def uniform(self, shape) -> np.ndarray:
        """Doubles in [0, 1)."""
        return self._gen.random(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller on pairs of uniforms."""
        n = int(np.prod(shape))
        m = (n + 1) // 2
        u1 = 1.0 - self._gen.random(m)  # (0, 1] so log is finite
        u2 = self._gen.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * m)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def derive_seed(self) -> int:
        return int(self._gen.integers(0, 2**63))


def sample_gaussian(rng: Rng, rows: int, cols: int, mean: float = 0.0, stddev: float = 1.0) -> Matrix:
    if stddev < 0:
        raise ParameterError(f"stddev must be >= 0, got {stddev}")
    return mean + stddev * rng.normal((rows, cols))


def sample_uniform(rng: Rng, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0) -> Matrix:
    if lo > hi:
        raise ParameterError(f"uniform bounds inverted: lo={lo} > hi={hi}")
    return lo + (hi - lo) * rng.uniform((rows, cols))
