from __future__ import annotations

import numpy as np

from fedgems.models.classifier import AdamState, Classifier, TrainableModel
from fedgems.models.experiment import OptimizerConfig


def adam_step(model: Classifier, grad: np.ndarray, state: AdamState, cfg: OptimizerConfig) -> tuple[Classifier, AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {model.params.shape}")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * (grad * grad)
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    denom = np.sqrt(v / bc2) + cfg.eps_adam
    params = model.params - (cfg.learning_rate / bc1) * m / denom
    return model.with_params(params), AdamState(m, v, t)


def apply(tm: TrainableModel, grad: np.ndarray, cfg: OptimizerConfig) -> None:
    tm.model, tm.opt = adam_step(tm.model, grad, tm.opt, cfg)
