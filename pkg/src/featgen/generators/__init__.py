"""Conditional feature generators: x_hat = G(a, z; w)."""

from .acgan import train_acgan
from .autoencoders import train_adversarial_ae, train_denoising_ae
from .gmmn import train_gmmn
from .model import (
    MODEL_KINDS,
    GeneratorConfig,
    GeneratorModel,
    NoiseSpec,
    TrainReport,
    generate,
    load_generator_model,
    save_generator_model,
)

TRAINERS = {
    "gmmn": train_gmmn,
    "acgan": train_acgan,
    "denoising_ae": train_denoising_ae,
    "adversarial_ae": train_adversarial_ae,
}


def train_generator(data, cfg, rng, on_batch=None):
    """Dispatch on ``cfg.model_kind``."""
    return TRAINERS[cfg.model_kind](data, cfg, rng, on_batch)


__all__ = [
    "MODEL_KINDS",
    "TRAINERS",
    "GeneratorConfig",
    "GeneratorModel",
    "NoiseSpec",
    "TrainReport",
    "generate",
    "load_generator_model",
    "save_generator_model",
    "train_acgan",
    "train_adversarial_ae",
    "train_denoising_ae",
    "train_generator",
    "train_gmmn",
]
