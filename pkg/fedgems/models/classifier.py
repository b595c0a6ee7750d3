from __future__ import annotations
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LINEAR = "linear-softmax"
HIDDEN = "one-hidden-layer"
KINDS = (LINEAR, HIDDEN)


def param_count(input_dim: int, hidden_dim: int, class_count: int) -> int:
    if hidden_dim == 0:
        return input_dim * class_count + class_count
    return input_dim * hidden_dim + hidden_dim + hidden_dim * class_count + class_count


@dataclass
class Classifier:
    """Small classifier over a flat parameter vector.

    Layout of ``params``: ``W (d x C), b (C)`` for the linear kind and
    ``W1 (d x h), b1 (h), W2 (h x C), b2 (C)`` for the one-hidden-layer kind
    (tanh hidden units). Weight matrices are stored row-major.
    """

    kind: str
    input_dim: int
    hidden_dim: int
    class_count: int
    params: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if (self.kind == LINEAR) != (self.hidden_dim == 0):
            raise ValueError("linear-softmax requires hidden_dim == 0; one-hidden-layer requires hidden_dim > 0")
        if self.input_dim < 1 or self.class_count < 2 or self.hidden_dim < 0:
            raise ValueError("invalid classifier dimensions")
        self.params = np.asarray(self.params, dtype=np.float64)
        expected = param_count(self.input_dim, self.hidden_dim, self.class_count)
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got shape {self.params.shape}")

    @staticmethod
    def create(input_dim: int, hidden_dim: int, class_count: int, rng: Optional[np.random.Generator] = None) -> "Classifier":
        rng = rng if rng is not None else np.random.default_rng(0)
        kind = LINEAR if hidden_dim == 0 else HIDDEN
        parts = []
        if hidden_dim == 0:
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=input_dim * class_count))
            parts.append(np.zeros(class_count))
        else:
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=input_dim * hidden_dim))
            parts.append(np.zeros(hidden_dim))
            parts.append(rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=hidden_dim * class_count))
            parts.append(np.zeros(class_count))
        return Classifier(kind, input_dim, hidden_dim, class_count, np.concatenate(parts))

    @property
    def size(self) -> int:
        return int(self.params.shape[0])

    def unpack(self, params: Optional[np.ndarray] = None) -> tuple[np.ndarray, ...]:
        """Views of the weight blocks, in layout order."""
        p = self.params if params is None else params
        d, h, c = self.input_dim, self.hidden_dim, self.class_count
        if h == 0:
            return p[: d * c].reshape(d, c), p[d * c :]
        o = 0
        w1 = p[o : o + d * h].reshape(d, h)
        o += d * h
        b1 = p[o : o + h]
        o += h
        w2 = p[o : o + h * c].reshape(h, c)
        o += h * c
        return w1, b1, w2, p[o:]

    def with_params(self, params: np.ndarray) -> "Classifier":
        return Classifier(self.kind, self.input_dim, self.hidden_dim, self.class_count, params)

    def copy(self) -> "Classifier":
        return self.with_params(self.params.copy())


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def zeros(size: int) -> "AdamState":
        return AdamState(np.zeros(size), np.zeros(size), 0)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


@dataclass
class TrainableModel:
    """A classifier together with the optimizer state it owns."""

    model: Classifier
    opt: AdamState = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.opt is None:
            self.opt = AdamState.zeros(self.model.size)
