"""Developer verification: full-model gradient checks on a tiny fixture.

Builds a desk-size model (small vocabulary, narrow embeddings, short
sentences) for any variant and compares every hand-derived gradient against
central finite differences through the complete forward pass.
"""

from __future__ import annotations

import numpy as np

from .correlation import reg_loss_grads
from .data import LabeledInstance, SyntheticSpec, corr_from_pairs, gen_synthetic
from .model import Model, ModelConfig
from .numerics import GradCheckReport, LossAndGrads, grad_check


def fixture_instances(n: int = 4, seed: int = 5, sentence_len: int = 4) -> list[LabeledInstance]:
    """Short synthetic instances (assembled length stays at sentence_len + 1)."""
    spec = SyntheticSpec(
        n=n,
        target_corr=corr_from_pairs({("joy", "sadness"): -0.5, ("joy", "trust"): 0.5}),
        vocab_size=9,
        sentence_len=sentence_len,
        signal_strength=0.8,
    )
    return gen_synthetic(spec, seed=seed)


def fixture_model(variant: str, dim: int = 8, seed: int = 11, **config_overrides) -> tuple[Model, list[LabeledInstance]]:
    batch = fixture_instances()
    config = ModelConfig(
        variant=variant,
        dim=dim,
        seed=seed,
        window=config_overrides.pop("window", 1),
        **config_overrides,
    )
    model = Model.build(config, batch)
    if model.has_correlation:
        # Finite differences need a generic point: the blended init puts
        # diagonal entries exactly on the soft-target clamp boundary (a kink)
        # whenever an instance has a single positive label.
        jitter = np.random.default_rng(seed + 1).uniform(-0.05, 0.05, size=(8, 8))
        model.params["corr"] += jitter
    return model, batch


def loss_closure(model: Model, batch: list[LabeledInstance]) -> LossAndGrads:
    """Adapt a model and batch to the gradient checker's interface.

    The checker owns the probe arrays; each call installs them as the model's
    live parameters before evaluating.
    """

    def fn(point):
        for name, value in point.items():
            model.params[name] = value
        loss, grads = model.loss_and_grads(batch)
        return loss, {name: grads[name] for name in point}

    return fn


def check_model_gradients(
    model: Model,
    batch: list[LabeledInstance],
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Gradient-check every trainable tensor of ``model`` on ``batch``."""
    point = {name: model.params[name].copy() for name in model.params}
    original = dict(model.params)
    try:
        return grad_check(loss_closure(model, batch), point, epsilon, tolerance)
    finally:
        model.params = original


def check_regularizer_gradients(
    seed: int = 3, n: int = 3, epsilon: float = 1e-5, tolerance: float = 1e-4
) -> GradCheckReport:
    """Gradient-check the unlabeled-data regularizer w.r.t. logits and the
    correlation matrix, treated as free inputs."""
    rng = np.random.default_rng(seed)
    logits = rng.normal(scale=0.8, size=(n, 8))
    corr = np.eye(8) + rng.normal(scale=0.2, size=(8, 8))

    def fn(point):
        loss, d_logits, d_corr = reg_loss_grads(point["logits"], point["corr"])
        return loss, {"logits": d_logits, "corr": d_corr}

    return grad_check(fn, {"logits": logits, "corr": corr}, epsilon, tolerance)
