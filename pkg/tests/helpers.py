"""Shared builders for fast test configurations."""

from featgen.generators import GeneratorConfig, NoiseSpec

KINDS = ("gmmn", "acgan", "denoising_ae", "adversarial_ae")


def small(kind="gmmn", **kw):
    """Narrow networks (the width search range is widened to allow them)."""
    base = dict(
        model_kind=kind,
        hidden_dims=(32,),
        discriminator_hidden_dims=(32,),
        width_range=(8, 2000),
        noise=NoiseSpec(dim=4),
        learning_rate=1e-3,
        epochs=3,
        batch_size=32,
    )
    base.update(kw)
    return GeneratorConfig(**base)
