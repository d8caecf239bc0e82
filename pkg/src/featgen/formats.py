"""Little-endian binary file formats.

FGZ1 matrix::

    "FGZ1" | u16 version=1 | u8 dtype=1 (f64) | u8 reserved=0 | u32 rows | u32 cols | f64[rows*cols]

FGZL labels::

    "FGZL" | u16 version=1 | u32 count | u32[count]

FGZM model (one network per file)::

    "FGZM" | u16 version=1 | u32 layer_count |
      per layer: u32 in | u32 out | u8 activation | f64 leak | f64 dropout |
                 f64[out*in] weights (row-major) | f64[out] biases

Every reader reports the byte offset at which a file stops making sense.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .neuralnet import ACTIVATIONS, LayerSpec, Mlp, check_chain

MATRIX_MAGIC = b"FGZ1"
LABELS_MAGIC = b"FGZL"
MODEL_MAGIC = b"FGZM"
VERSION = 1
DTYPE_F64 = 1

_ACT_TAG = {name: i for i, name in enumerate(ACTIVATIONS)}


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def fail(self, msg: str, offset: int | None = None):
        raise FormatError(f"{self.path}: {msg} at byte offset {self.pos if offset is None else offset}")

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            self.fail(f"truncated {what}: need {n} bytes, {len(self.buf) - self.pos} available")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        vals = struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))
        return vals if len(vals) > 1 else vals[0]

    def magic(self, expected: bytes) -> None:
        got = self.take(len(expected), "magic")
        if got != expected:
            self.fail(f"bad magic {got!r}, expected {expected!r}", 0)

    def version(self) -> None:
        v = self.unpack("H", "version")
        if v != VERSION:
            self.fail(f"unsupported version {v}", self.pos - 2)

    def f64(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * count, what), dtype="<f8").astype(np.float64)

    def done(self) -> None:
        if self.pos != len(self.buf):
            self.fail(f"{len(self.buf) - self.pos} trailing bytes")


def _read(path) -> _Reader:
    p = Path(path)
    try:
        return _Reader(p.read_bytes(), str(p))
    except OSError as exc:
        raise FormatError(f"{p}: cannot read ({exc.strerror})") from exc


def encode_matrix(m: np.ndarray) -> bytes:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise FormatError(f"only 2-D matrices can be written, got shape {m.shape}")
    head = MATRIX_MAGIC + struct.pack("<HBBII", VERSION, DTYPE_F64, 0, m.shape[0], m.shape[1])
    return head + np.ascontiguousarray(m, dtype="<f8").tobytes()


def write_matrix(path, m: np.ndarray) -> None:
    Path(path).write_bytes(encode_matrix(m))


def read_matrix(path) -> np.ndarray:
    r = _read(path)
    r.magic(MATRIX_MAGIC)
    r.version()
    dtype = r.unpack("B", "dtype tag")
    if dtype != DTYPE_F64:
        r.fail(f"unsupported dtype tag {dtype}", r.pos - 1)
    if r.unpack("B", "reserved byte") != 0:
        r.fail("reserved byte must be 0", r.pos - 1)
    rows, cols = r.unpack("II", "shape")
    data = r.f64(rows * cols, f"matrix data ({rows}x{cols})")
    r.done()
    return data.reshape(rows, cols)


def write_labels(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and labels.min() < 0):
        raise FormatError("labels must be a 1-D vector of non-negative integers")
    head = LABELS_MAGIC + struct.pack("<HI", VERSION, labels.size)
    Path(path).write_bytes(head + labels.astype("<u4").tobytes())


def read_labels(path) -> np.ndarray:
    r = _read(path)
    r.magic(LABELS_MAGIC)
    r.version()
    count = r.unpack("I", "count")
    data = np.frombuffer(r.take(4 * count, f"label data ({count} entries)"), dtype="<u4")
    r.done()
    return data.astype(np.int64)


def encode_mlp(net: Mlp) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<HI", VERSION, len(net.layers))]
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        parts.append(
            struct.pack(
                "<IIBdd", spec.input_dim, spec.output_dim, _ACT_TAG[spec.activation], spec.leak, spec.dropout_rate
            )
        )
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def write_mlp(path, net: Mlp) -> None:
    Path(path).write_bytes(encode_mlp(net))


def read_mlp(path) -> Mlp:
    r = _read(path)
    r.magic(MODEL_MAGIC)
    r.version()
    n_layers = r.unpack("I", "layer count")
    if n_layers < 1:
        r.fail("model has no layers", r.pos - 4)
    specs, weights, biases = [], [], []
    for k in range(n_layers):
        start = r.pos
        d_in, d_out, tag, leak, dropout = r.unpack("IIBdd", f"layer {k} header")
        if tag >= len(ACTIVATIONS):
            r.fail(f"layer {k}: unknown activation tag {tag}", start + 8)
        try:
            specs.append(LayerSpec(d_in, d_out, ACTIVATIONS[tag], leak, dropout))
        except ValueError as exc:
            r.fail(f"layer {k}: {exc}", start)
        weights.append(r.f64(d_in * d_out, f"layer {k} weights").reshape(d_out, d_in))
        biases.append(r.f64(d_out, f"layer {k} biases"))
    r.done()
    try:
        check_chain(specs)
    except ValueError as exc:
        raise FormatError(f"{r.path}: {exc}") from exc
    return Mlp(tuple(specs), weights, biases)


def dump_json(path, obj) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    p = Path(path)
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise FormatError(f"{p}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
