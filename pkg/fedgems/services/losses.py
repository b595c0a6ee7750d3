"""Softmax, cross-entropy, KL divergence and entropy in nats.

All functions accept a single vector or a batch (rows are samples) and are
pure; batched calls return one value per row.
"""
from __future__ import annotations

import numpy as np
from scipy.special import log_softmax as _log_softmax, xlogy

from fedgems.errors import CorruptLogitsError


def _check_finite(z: np.ndarray) -> None:
    if not np.all(np.isfinite(z)):
        raise CorruptLogitsError("logits contain NaN or Inf")


def softmax(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    _check_finite(z)
    s = z / temperature
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    _check_finite(z)
    return _log_softmax(z / temperature, axis=-1)


def cross_entropy(z: np.ndarray, label) -> np.ndarray | float:
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(label, dtype=np.int64)
    c = z.shape[-1]
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"label out of range for {c} classes")
    logp = log_softmax(z)
    if z.ndim == 1:
        return float(-logp[int(labels)])
    return -logp[np.arange(z.shape[0]), labels]


def kl_divergence(target: np.ndarray, student: np.ndarray) -> np.ndarray | float:
    """KL(target || student); 0 * ln 0 is taken as 0."""
    t = np.asarray(target, dtype=np.float64)
    s = np.asarray(student, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {s.shape}")
    with np.errstate(divide="ignore"):
        out = np.sum(xlogy(t, t) - xlogy(t, s), axis=-1)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def entropy(p: np.ndarray) -> np.ndarray | float:
    p = np.asarray(p, dtype=np.float64)
    out = -np.sum(xlogy(p, p), axis=-1)
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def predict(z: np.ndarray) -> np.ndarray | int:
    """Argmax with ties going to the lowest class index."""
    z = np.asarray(z)
    out = np.argmax(z, axis=-1)
    return int(out) if out.ndim == 0 else out
