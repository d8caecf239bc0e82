"""Auxiliary-classifier conditional GAN.

The discriminator emits ``1 + n_seen`` logits: column 0 scores real vs
generated, the rest form a linear softmax classifier over seen classes.
"""

from __future__ import annotations

import time

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DataError
from ..neuralnet import (
    Gradients,
    Mlp,
    adam_init,
    adam_step,
    backward,
    forward,
    sigmoid_cross_entropy,
    softmax_cross_entropy,
)
from ..numerics import Matrix, Rng
from .model import (
    BatchHook,
    GeneratorConfig,
    GeneratorModel,
    TrainReport,
    build_generator,
    build_head,
    conditioned_input,
)


def discriminator_loss(
    disc: Mlp,
    real: Matrix,
    fake: Matrix,
    classes: np.ndarray,
    aux_weight: float = 1.0,
    mode: str = "eval",
    rng: Rng | None = None,
) -> tuple[dict[str, float], Gradients]:
    """Real/fake log-loss plus auxiliary class cross-entropy on both halves.

    ``classes`` are local (0..n_seen-1) indices shared by the real and the
    fake rows. Returns the loss terms and gradients w.r.t. ``disc``.
    """
    n_real = real.shape[0]
    x = np.vstack([real, fake])
    target = np.concatenate([np.ones(n_real), np.zeros(fake.shape[0])])[:, None]
    logits, tape = forward(disc, x, mode, rng)
    rf_loss, rf_grad = sigmoid_cross_entropy(logits[:, :1], target)
    aux_loss, aux_grad = softmax_cross_entropy(logits[:, 1:], np.concatenate([classes, classes]))
    g = np.hstack([rf_grad, aux_weight * aux_grad])
    return {"d_real_fake": rf_loss, "d_aux": aux_loss}, backward(disc, tape, g)


def generator_loss(
    gen: Mlp,
    disc: Mlp,
    gen_input: Matrix,
    classes: np.ndarray,
    aux_weight: float = 1.0,
    mode: str = "eval",
    rng: Rng | None = None,
) -> tuple[dict[str, float], Gradients]:
    """Non-saturating generator objective: -log D(G) plus auxiliary cross-entropy."""
    fake, g_tape = forward(gen, gen_input, mode, rng)
    logits, d_tape = forward(disc, fake, mode, rng)
    rf_loss, rf_grad = sigmoid_cross_entropy(logits[:, :1], np.ones((fake.shape[0], 1)))
    aux_loss, aux_grad = softmax_cross_entropy(logits[:, 1:], classes)
    g = np.hstack([rf_grad, aux_weight * aux_grad])
    d_grads = backward(disc, d_tape, g)
    return {"g_fake": rf_loss, "g_aux": aux_loss}, backward(gen, g_tape, d_grads.input)


def train_acgan(
    data: Dataset, cfg: GeneratorConfig, rng: Rng, on_batch: BatchHook | None = None
) -> tuple[GeneratorModel, TrainReport]:
    if cfg.model_kind != "acgan":
        raise ConfigError(f"train_acgan got model_kind {cfg.model_kind!r}")
    seen = tuple(data.seen_classes)
    if len(seen) < 2:
        raise DataError(f"AC-GAN needs >= 2 seen classes for its auxiliary classifier, got {len(seen)}")
    x_train, y_train = data.train_set()
    if x_train.shape[0] == 0:
        raise DataError("AC-GAN needs training images")
    local = np.full(data.num_classes, -1, dtype=np.int64)
    local[list(seen)] = np.arange(len(seen))

    start = time.perf_counter()
    init_rng = rng.child("init")
    gen = build_generator(cfg, data.attr_dim, data.feature_dim, init_rng)
    disc = build_head(cfg, data.feature_dim, 1 + len(seen), init_rng)
    g_opt, d_opt = adam_init(gen, cfg.learning_rate), adam_init(disc, cfg.learning_rate)
    shuffle, noise_rng, drop_rng = rng.child("shuffle"), rng.child("noise"), rng.child("dropout")
    report = TrainReport()
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        losses: dict[str, list[float]] = {}
        perm = shuffle.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = perm[s : s + cfg.batch_size]
            real, y = x_train[idx], y_train[idx]
            if on_batch is not None:
                on_batch(y)
            cls = local[y]
            attrs = data.class_attributes[y]

            fake, _ = forward(gen, conditioned_input(attrs, cfg.noise.sample(noise_rng, idx.size)), "train", drop_rng)
            d_terms, d_grads = discriminator_loss(disc, real, fake, cls, cfg.aux_weight, "train", drop_rng)
            disc, d_opt = adam_step(disc, d_grads, d_opt)

            gen_in = conditioned_input(attrs, cfg.noise.sample(noise_rng, idx.size))
            g_terms, g_grads = generator_loss(gen, disc, gen_in, cls, cfg.aux_weight, "train", drop_rng)
            gen, g_opt = adam_step(gen, g_grads, g_opt)
            for k, v in {**d_terms, **g_terms}.items():
                losses.setdefault(k, []).append(v)
        report.log_epoch(epoch, losses)
    report.wall_seconds = time.perf_counter() - start
    model = GeneratorModel("acgan", gen, cfg.noise, data.feature_dim, data.attr_dim, {"discriminator": disc}, seen)
    return model, report
