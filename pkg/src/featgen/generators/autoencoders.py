"""Conditional denoising and adversarial auto-encoders.

The encoder maps a corrupted feature vector to a code of ``noise.dim``
units; the decoder (kept as the generator) maps ``[a, code]`` back to
feature space. At sampling time the code is replaced by a prior draw.
"""

from __future__ import annotations

import time

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, DataError
from ..neuralnet import (
    Gradients,
    InitSpec,
    Mlp,
    adam_init,
    adam_step,
    backward,
    forward,
    init_mlp,
    l2_reconstruction_loss,
    layer_stack,
    sigmoid_cross_entropy,
)
from ..numerics import Matrix, Rng, sample_gaussian
from .model import (
    BatchHook,
    GeneratorConfig,
    GeneratorModel,
    TrainReport,
    build_generator,
    build_head,
    conditioned_input,
)


def build_encoder(cfg: GeneratorConfig, feature_dim: int, rng: Rng) -> Mlp:
    specs = layer_stack(
        feature_dim,
        cfg.hidden_dims,
        cfg.noise.dim,
        leak=cfg.leak,
        input_dropout=cfg.input_dropout,
        hidden_dropout=cfg.hidden_dropout,
    )
    return init_mlp(specs, InitSpec(cfg.init_stddev), rng)


def autoencoder_loss(
    encoder: Mlp,
    decoder: Mlp,
    corrupted: Matrix,
    target: Matrix,
    attrs: Matrix,
    code_disc: Mlp | None = None,
    adversarial_weight: float = 1.0,
    mode: str = "eval",
    rng: Rng | None = None,
) -> tuple[dict[str, float], Gradients, Gradients]:
    """L2 reconstruction, plus (if ``code_disc`` is given) the encoder's fooling term.

    Returns loss terms, encoder gradients and decoder gradients. The code
    discriminator's own parameters are not updated here.
    """
    code, e_tape = forward(encoder, corrupted, mode, rng)
    recon, d_tape = forward(decoder, conditioned_input(attrs, code), mode, rng)
    rec_loss, rec_grad = l2_reconstruction_loss(recon, target)
    d_grads = backward(decoder, d_tape, rec_grad)
    code_grad = d_grads.input[:, attrs.shape[1] :]
    terms = {"reconstruction": rec_loss}
    if code_disc is not None:
        logit, c_tape = forward(code_disc, code, mode, rng)
        adv_loss, adv_grad = sigmoid_cross_entropy(logit, np.ones_like(logit))
        code_grad = code_grad + adversarial_weight * backward(code_disc, c_tape, adv_grad).input
        terms["encoder_adversarial"] = adv_loss
    return terms, backward(encoder, e_tape, code_grad), d_grads


def code_discriminator_loss(
    code_disc: Mlp, prior_codes: Matrix, encoded: Matrix, mode: str = "eval", rng: Rng | None = None
) -> tuple[float, Gradients]:
    """Mean log-loss separating prior draws (label 1) from encoder codes (label 0)."""
    x = np.vstack([prior_codes, encoded])
    target = np.concatenate([np.ones(prior_codes.shape[0]), np.zeros(encoded.shape[0])])[:, None]
    logit, tape = forward(code_disc, x, mode, rng)
    loss, g = sigmoid_cross_entropy(logit, target)
    return loss, backward(code_disc, tape, g)


def _train_autoencoder(
    data: Dataset, cfg: GeneratorConfig, rng: Rng, adversarial: bool, on_batch: BatchHook | None
) -> tuple[GeneratorModel, TrainReport]:
    x_train, y_train = data.train_set()
    if x_train.shape[0] == 0:
        raise DataError("auto-encoder training needs training images")
    start = time.perf_counter()
    init_rng = rng.child("init")
    encoder = build_encoder(cfg, data.feature_dim, init_rng)
    decoder = build_generator(cfg, data.attr_dim, data.feature_dim, init_rng)
    code_disc = build_head(cfg, cfg.noise.dim, 1, init_rng) if adversarial else None
    e_opt, d_opt = adam_init(encoder, cfg.learning_rate), adam_init(decoder, cfg.learning_rate)
    c_opt = adam_init(code_disc, cfg.learning_rate) if adversarial else None
    shuffle, corrupt_rng = rng.child("shuffle"), rng.child("corruption")
    prior_rng, drop_rng = rng.child("prior"), rng.child("dropout")
    report = TrainReport()
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        losses: dict[str, list[float]] = {}
        perm = shuffle.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = perm[s : s + cfg.batch_size]
            x, y = x_train[idx], y_train[idx]
            if on_batch is not None:
                on_batch(y)
            corrupted = x + sample_gaussian(corrupt_rng, *x.shape, 0.0, cfg.input_noise_stddev)
            attrs = data.class_attributes[y]
            if adversarial:
                codes, _ = forward(encoder, corrupted, "train", drop_rng)
                prior = cfg.noise.sample(prior_rng, idx.size)
                c_loss, c_grads = code_discriminator_loss(code_disc, prior, codes, "train", drop_rng)
                code_disc, c_opt = adam_step(code_disc, c_grads, c_opt)
                losses.setdefault("code_discriminator", []).append(c_loss)
            terms, e_grads, dec_grads = autoencoder_loss(
                encoder, decoder, corrupted, x, attrs, code_disc, cfg.adversarial_weight, "train", drop_rng
            )
            encoder, e_opt = adam_step(encoder, e_grads, e_opt)
            decoder, d_opt = adam_step(decoder, dec_grads, d_opt)
            for k, v in terms.items():
                losses.setdefault(k, []).append(v)
        report.log_epoch(epoch, losses)
    report.wall_seconds = time.perf_counter() - start
    aux = {"encoder": encoder}
    if adversarial:
        aux["code_discriminator"] = code_disc
    kind = "adversarial_ae" if adversarial else "denoising_ae"
    model = GeneratorModel(kind, decoder, cfg.noise, data.feature_dim, data.attr_dim, aux, tuple(data.seen_classes))
    return model, report


def train_denoising_ae(
    data: Dataset, cfg: GeneratorConfig, rng: Rng, on_batch: BatchHook | None = None
) -> tuple[GeneratorModel, TrainReport]:
    if cfg.model_kind != "denoising_ae":
        raise ConfigError(f"train_denoising_ae got model_kind {cfg.model_kind!r}")
    return _train_autoencoder(data, cfg, rng, False, on_batch)


def train_adversarial_ae(
    data: Dataset, cfg: GeneratorConfig, rng: Rng, on_batch: BatchHook | None = None
) -> tuple[GeneratorModel, TrainReport]:
    if cfg.model_kind != "adversarial_ae":
        raise ConfigError(f"train_adversarial_ae got model_kind {cfg.model_kind!r}")
    return _train_autoencoder(data, cfg, rng, True, on_batch)
