"""Fully connected networks with hand-written backpropagation and Adam.

Weights are stored ``(output_dim, input_dim)`` so a batched layer computes
``x @ W.T + b``. Each layer's ``dropout_rate`` is applied to that layer's
*input* (inverted dropout), so a rate on the first layer drops network
inputs and a rate on later layers drops hidden activations.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError, UsageError
from .numerics import Matrix, Rng, sample_gaussian

ACTIVATIONS = ("linear", "leaky_relu", "sigmoid", "softmax")
DEFAULT_LEAK = 0.2


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "leaky_relu"
    leak: float = DEFAULT_LEAK
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError(f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class InitSpec:
    stddev: float = 0.02

    def __post_init__(self):
        if not self.stddev > 0:
            raise ParameterError(f"init stddev must be > 0, got {self.stddev}")


@dataclass(eq=False)
class Mlp:
    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> Mlp:
        return Mlp(self.layers, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mlp) or self.layers != other.layers:
            return False
        return all(np.array_equal(p, q) for p, q in zip(self.params(), other.params()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ShapeError("an Mlp needs at least one layer")
    for k in range(len(specs) - 1):
        if specs[k].output_dim != specs[k + 1].input_dim:
            raise ShapeError(
                f"layer {k} output_dim {specs[k].output_dim} does not match "
                f"layer {k + 1} input_dim {specs[k + 1].input_dim}"
            )
    for k, s in enumerate(specs[:-1]):
        if s.activation == "softmax":
            raise ParameterError(f"softmax is only allowed on the final layer (layer {k})")


def layer_stack(
    input_dim: int,
    hidden_dims: Sequence[int],
    output_dim: int,
    *,
    output_activation: str = "linear",
    leak: float = DEFAULT_LEAK,
    input_dropout: float = 0.0,
    hidden_dropout: float = 0.0,
) -> list[LayerSpec]:
    """Leaky-relu hidden layers followed by one output layer."""
    dims = [input_dim, *hidden_dims, output_dim]
    specs = []
    for k in range(len(dims) - 1):
        last = k == len(dims) - 2
        specs.append(
            LayerSpec(
                dims[k],
                dims[k + 1],
                activation=output_activation if last else "leaky_relu",
                leak=leak,
                dropout_rate=input_dropout if k == 0 else hidden_dropout,
            )
        )
    return specs


def init_mlp(specs: Sequence[LayerSpec], init: InitSpec, rng: Rng) -> Mlp:
    specs = tuple(specs)
    check_chain(specs)
    weights = [sample_gaussian(rng, s.output_dim, s.input_dim, 0.0, init.stddev) for s in specs]
    biases = [np.zeros(s.output_dim) for s in specs]
    return Mlp(specs, weights, biases)


def softmax(logits: Matrix) -> Matrix:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _activate(spec: LayerSpec, pre: Matrix) -> Matrix:
    if spec.activation == "linear":
        return pre
    if spec.activation == "leaky_relu":
        return np.where(pre > 0, pre, spec.leak * pre)
    if spec.activation == "sigmoid":
        return sigmoid(pre)
    return softmax(pre)


def _activation_grad(spec: LayerSpec, pre: Matrix, post: Matrix, g: Matrix) -> Matrix:
    if spec.activation == "linear":
        return g
    if spec.activation == "leaky_relu":
        return np.where(pre > 0, g, spec.leak * g)
    if spec.activation == "sigmoid":
        return g * post * (1.0 - post)
    return post * (g - np.sum(g * post, axis=1, keepdims=True))


@dataclass
class Tape:
    """Everything ``backward`` needs from one ``forward`` call."""

    net: Mlp
    layer_inputs: list[Matrix]
    masks: list[np.ndarray | None]
    pre: list[Matrix]
    post: list[Matrix]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: Matrix

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def scaled(self, factor: float) -> Gradients:
        return Gradients([w * factor for w in self.weights], [b * factor for b in self.biases], self.input * factor)

    def __add__(self, other: Gradients) -> Gradients:
        return Gradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            self.input + other.input,
        )


def forward(net: Mlp, x: Matrix, mode: str = "eval", rng: Rng | None = None) -> tuple[Matrix, Tape]:
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match network input_dim {net.input_dim}")
    h = x
    layer_inputs, masks, pres, posts = [], [], [], []
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        mask = None
        if mode == "train" and spec.dropout_rate > 0:
            if rng is None:
                raise UsageError("train-mode forward with dropout needs an rng")
            keep = 1.0 - spec.dropout_rate
            mask = (rng.uniform(h.shape) < keep) / keep
            h = h * mask
        pre = h @ w.T + b
        post = _activate(spec, pre)
        layer_inputs.append(h)
        masks.append(mask)
        pres.append(pre)
        posts.append(post)
        h = post
    return h, Tape(net, layer_inputs, masks, pres, posts)


def backward(net: Mlp, tape: Tape, output_gradient: Matrix) -> Gradients:
    if tape.net is not net:
        raise UsageError("tape was recorded on a different (or since-updated) network")
    if output_gradient.shape != tape.post[-1].shape:
        raise ShapeError(f"output gradient shape {output_gradient.shape} != output shape {tape.post[-1].shape}")
    n_layers = len(net.layers)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    g = output_gradient
    for k in reversed(range(n_layers)):
        spec = net.layers[k]
        dpre = _activation_grad(spec, tape.pre[k], tape.post[k], g)
        gw[k] = dpre.T @ tape.layer_inputs[k]
        gb[k] = dpre.sum(axis=0)
        g = dpre @ net.weights[k]
        if tape.masks[k] is not None:
            g = g * tape.masks[k]
    return Gradients(gw, gb, g)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float | None = None


def adam_init(net: Mlp, learning_rate: float = 1e-4, **kwargs) -> AdamState:
    params = net.params()
    return AdamState(
        [np.zeros_like(p) for p in params],
        [np.zeros_like(p) for p in params],
        learning_rate=learning_rate,
        **kwargs,
    )


def adam_step(net: Mlp, grads: Gradients, state: AdamState) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update. Returns new objects; inputs are untouched."""
    params = net.params()
    gparams = grads.params()
    if len(params) != len(gparams) or len(params) != len(state.first_moment):
        raise ShapeError("gradient/state parameter count does not match the network")
    for p, g, m in zip(params, gparams, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter shape {p.shape} vs gradient {g.shape} vs moment {m.shape}")
    if state.clip_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in gparams))
        if norm > state.clip_norm:
            gparams = [g * (state.clip_norm / norm) for g in gparams]
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, gparams, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    net2 = Mlp(net.layers, new_p[0::2], new_p[1::2])
    state2 = AdamState(
        new_m, new_v, t, state.learning_rate, state.beta1, state.beta2, state.epsilon, state.clip_norm
    )
    return net2, state2


def _check_labels(labels: np.ndarray, n_rows: int, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n_rows,):
        raise ShapeError(f"expected {n_rows} labels, got shape {labels.shape}")
    if n_rows and (labels.min() < 0 or labels.max() >= n_classes):
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise DataError(f"label {bad} outside [0, {n_classes})")
    return labels.astype(np.int64)


def softmax_cross_entropy(logits: Matrix, labels: np.ndarray) -> tuple[float, Matrix]:
    n, c = logits.shape
    labels = _check_labels(labels, n, c)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = np.exp(z - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def sigmoid_cross_entropy(logits: Matrix, targets: Matrix) -> tuple[float, Matrix]:
    """Mean binary log-loss over rows of a logit column (or columns)."""
    if logits.shape != targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {targets.shape}")
    n = logits.shape[0]
    # log(1 + exp(-|x|)) + max(x, 0) - x*t
    loss = np.maximum(logits, 0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    grad = (sigmoid(logits) - targets) / n
    return float(loss.sum() / n), grad


def l2_reconstruction_loss(output: Matrix, target: Matrix) -> tuple[float, Matrix]:
    if output.shape != target.shape:
        raise ShapeError(f"output {output.shape} vs target {target.shape}")
    n = output.shape[0]
    diff = output - target
    return float(np.sum(diff * diff) / n), 2.0 * diff / n
