"""Zero-shot classification by generating features for unseen classes.

A conditional generator G(a, z) is trained on seen classes, used to
synthesise features for unseen classes from their attribute vectors, and a
softmax classifier is trained on the result.
"""

from .classifier import (
    ClassifierConfig,
    SoftmaxClassifier,
    predict_scores,
    predict_topk,
    train_classifier,
)
from .data import (
    Dataset,
    SyntheticSpec,
    load_dataset,
    make_synthetic,
    preprocess,
    save_dataset,
)
from .generators import (
    GeneratorConfig,
    GeneratorModel,
    NoiseSpec,
    generate,
    train_generator,
)
from .mmd import KernelSpec, mmd2_biased, mmd2_gradient
from .numerics import Rng
from .pipeline import (
    EvalReport,
    baseline_nearest_attribute,
    compare_generators,
    flat_hit_at_k,
    run_gzsc,
    run_oracle,
    run_zsc,
    zsc_cross_validate,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierConfig",
    "Dataset",
    "EvalReport",
    "GeneratorConfig",
    "GeneratorModel",
    "KernelSpec",
    "NoiseSpec",
    "Rng",
    "SoftmaxClassifier",
    "SyntheticSpec",
    "baseline_nearest_attribute",
    "compare_generators",
    "flat_hit_at_k",
    "generate",
    "load_dataset",
    "make_synthetic",
    "mmd2_biased",
    "mmd2_gradient",
    "predict_scores",
    "predict_topk",
    "preprocess",
    "run_gzsc",
    "run_oracle",
    "run_zsc",
    "save_dataset",
    "train_classifier",
    "train_generator",
    "zsc_cross_validate",
]
