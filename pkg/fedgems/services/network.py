"""Forward pass and analytic backprop for the two classifier kinds."""
from __future__ import annotations
from dataclasses import dataclass
from typing import Optional

import numpy as np

from fedgems.models.classifier import Classifier
from fedgems.models.dataset import Dataset
from fedgems.services import losses


@dataclass(frozen=True)
class LossSpec:
    """Per-sample mix ``w * CE + (1 - w) * KL(target || softmax(z / T))``.

    A row with ``kd_weight == 1`` is plain cross-entropy; its target row is
    ignored. ``targets`` are probability rows (already normalised).
    """

    labels: np.ndarray
    kd_weight: np.ndarray
    targets: np.ndarray
    temperature: float = 1.0

    @staticmethod
    def ce(labels, class_count: int) -> "LossSpec":
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        n = labels.shape[0]
        return LossSpec(labels, np.ones(n), np.zeros((n, class_count)))

    @staticmethod
    def composite(eps: float, labels, targets, temperature: float = 1.0) -> "LossSpec":
        if not 0.0 <= eps <= 1.0:
            raise ValueError("kd weight must lie in [0, 1]")
        labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        return LossSpec(labels, np.full(labels.shape[0], float(eps)), targets, temperature)

    @staticmethod
    def mixed(labels, kd_weight, targets, temperature: float = 1.0) -> "LossSpec":
        return LossSpec(
            np.asarray(labels, dtype=np.int64),
            np.asarray(kd_weight, dtype=np.float64),
            np.asarray(targets, dtype=np.float64),
            temperature,
        )


def forward(model: Classifier, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    if xb.shape[1] != model.input_dim:
        raise ValueError(f"input dim {xb.shape[1]} does not match model input_dim {model.input_dim}")
    blocks = model.unpack()
    if model.hidden_dim == 0:
        w, b = blocks
        z = xb @ w + b
    else:
        w1, b1, w2, b2 = blocks
        z = np.tanh(xb @ w1 + b1) @ w2 + b2
    return z[0] if single else z


def forward_backward(model: Classifier, x: np.ndarray, spec: LossSpec) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss over the batch, its gradient w.r.t. ``model.params`` and the logits."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    n = xb.shape[0]
    if xb.shape[1] != model.input_dim:
        raise ValueError(f"input dim {xb.shape[1]} does not match model input_dim {model.input_dim}")
    if spec.labels.shape != (n,) or spec.targets.shape != (n, model.class_count):
        raise ValueError("loss spec does not match the batch")

    blocks = model.unpack()
    if model.hidden_dim == 0:
        w, b = blocks
        z = xb @ w + b
    else:
        w1, b1, w2, b2 = blocks
        h = np.tanh(xb @ w1 + b1)
        z = h @ w2 + b2

    t = spec.temperature
    w_ce = spec.kd_weight
    w_kd = 1.0 - w_ce
    p = losses.softmax(z)
    p_t = p if t == 1.0 else losses.softmax(z, t)
    y = np.zeros_like(p)
    y[np.arange(n), spec.labels] = 1.0

    per_sample = w_ce * losses.cross_entropy(z, spec.labels) + w_kd * losses.kl_divergence(spec.targets, p_t)
    loss = float(per_sample.mean())

    gz = (w_ce[:, None] * (p - y) + w_kd[:, None] * (p_t - spec.targets) / t) / n
    if model.hidden_dim == 0:
        grad = np.concatenate([(xb.T @ gz).ravel(), gz.sum(axis=0)])
    else:
        dh = (gz @ w2.T) * (1.0 - h * h)
        grad = np.concatenate([(xb.T @ dh).ravel(), dh.sum(axis=0), (h.T @ gz).ravel(), gz.sum(axis=0)])
    return loss, grad, (z[0] if single else z)


def batch_logits(model: Classifier, x: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
    if batch_size is None or x.shape[0] <= batch_size:
        return forward(model, x)
    return np.concatenate([forward(model, x[i : i + batch_size]) for i in range(0, x.shape[0], batch_size)])


def accuracy(model: Classifier, ds: Dataset) -> float:
    if len(ds) == 0:
        return float("nan")
    pred = losses.predict(forward(model, ds.x))
    return float(np.mean(pred == ds.y))
