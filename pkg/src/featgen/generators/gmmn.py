"""Conditional generative moment matching network."""

from __future__ import annotations

import time

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DataError
from ..mmd import mmd2_biased, mmd2_gradient
from ..neuralnet import adam_init, adam_step, backward, forward
from ..numerics import Rng
from .model import (
    BatchHook,
    GeneratorConfig,
    GeneratorModel,
    TrainReport,
    build_generator,
    conditioned_input,
)


def train_gmmn(
    data: Dataset, cfg: GeneratorConfig, rng: Rng, on_batch: BatchHook | None = None
) -> tuple[GeneratorModel, TrainReport]:
    """One Adam step per seen class per epoch, each on that class's full train set.

    The generated batch has as many rows as the real one and is compared
    with it through MMD^2.
    """
    if cfg.model_kind != "gmmn":
        raise ConfigError(f"train_gmmn got model_kind {cfg.model_kind!r}")
    if not data.seen_classes:
        raise DataError("GMMN training needs at least one seen class")
    per_class = {}
    for c in data.seen_classes:
        idx = data.class_indices(c, "train")
        if idx.size < 2:
            raise DataError(f"seen class {c} ({data.class_names[c]}) has {idx.size} training images; need >= 2")
        per_class[c] = data.features[idx]

    start = time.perf_counter()
    net = build_generator(cfg, data.attr_dim, data.feature_dim, rng.child("init"))
    opt = adam_init(net, cfg.learning_rate)
    order_rng, noise_rng, drop_rng = rng.child("order"), rng.child("noise"), rng.child("dropout")
    report = TrainReport()
    classes = np.array(data.seen_classes)
    for epoch in range(cfg.epochs):
        losses = []
        for c in classes[order_rng.permutation(classes.size)]:
            real = per_class[int(c)]
            n = real.shape[0]
            if on_batch is not None:
                on_batch(np.full(n, c))
            attrs = np.repeat(data.class_attributes[c : c + 1], n, axis=0)
            z = cfg.noise.sample(noise_rng, n)
            fake, tape = forward(net, conditioned_input(attrs, z), "train", drop_rng)
            loss = mmd2_biased(fake, real, cfg.kernel)
            grads = backward(net, tape, mmd2_gradient(fake, real, cfg.kernel))
            net, opt = adam_step(net, grads, opt)
            losses.append(loss)
            report.class_curves.setdefault(int(c), []).append(loss)
        report.log_epoch(epoch, {"mmd2": losses})
    report.wall_seconds = time.perf_counter() - start
    model = GeneratorModel("gmmn", net, cfg.noise, data.feature_dim, data.attr_dim, {}, tuple(data.seen_classes))
    return model, report
