from __future__ import annotations
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Labelled samples. ``ids`` are the positions in the originally generated set."""

    x: np.ndarray
    y: np.ndarray
    class_count: int
    ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        x = _frozen(self.x, np.float64)
        y = _frozen(self.y, np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes x={x.shape} y={y.shape}")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError("labels out of range")
        if not np.all(np.isfinite(x)):
            raise ValueError("dataset features must be finite")
        ids = np.arange(y.shape[0]) if self.ids is None else self.ids
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ids", _frozen(ids, np.int64))

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.x.shape[1])

    def subset(self, positions: np.ndarray) -> "Dataset":
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(self.x[positions], self.y[positions], self.class_count, self.ids[positions])

    def label_histogram(self) -> List[int]:
        return np.bincount(self.y, minlength=self.class_count).astype(int).tolist()


@dataclass(frozen=True)
class PartitionPlan:
    client_count: int
    assignment: np.ndarray  # private sample position -> client id
    mode: str
    alpha: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", _frozen(self.assignment, np.int64))

    def client_positions(self, client_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client_id)

    def sizes(self) -> List[int]:
        return np.bincount(self.assignment, minlength=self.client_count).astype(int).tolist()

    def label_table(self, private: Dataset) -> Dict[int, List[int]]:
        return {k: private.subset(self.client_positions(k)).label_histogram() for k in range(self.client_count)}
