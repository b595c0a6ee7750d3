from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, Optional

import numpy as np


class Branch(str, Enum):
    SELF_TRAIN = "SelfTrain"
    SELF_DISTILL = "SelfDistill"
    ENSEMBLE_DISTILL = "EnsembleDistill"
    CE_ONLY_FALLBACK = "CeOnlyFallback"


@dataclass(frozen=True)
class RoutingDecision:
    branch: Branch
    index: int


@dataclass(frozen=True)
class ClientReport:
    client_id: int
    round: int
    indices: np.ndarray
    logits: np.ndarray

    def __post_init__(self) -> None:
        idx = np.array(self.indices, dtype=np.int64, copy=True)
        logits = np.array(self.logits, dtype=np.float64, copy=True)
        if idx.ndim != 1 or (idx.size > 1 and np.any(np.diff(idx) <= 0)):
            raise ValueError("report indices must be sorted ascending and unique")
        if logits.ndim != 2 or logits.shape[0] != idx.shape[0]:
            raise ValueError(f"report has {idx.shape[0]} indices but logits of shape {logits.shape}")
        idx.setflags(write=False)
        logits.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "logits", logits)

    def row(self, index: int) -> Optional[np.ndarray]:
        pos = int(np.searchsorted(self.indices, index))
        if pos < self.indices.shape[0] and self.indices[pos] == index:
            return self.logits[pos]
        return None

    def replaced(self, logits: np.ndarray) -> "ClientReport":
        return ClientReport(self.client_id, self.round, self.indices, logits)


@dataclass(frozen=True)
class AggregationWeights:
    index: int
    weights: Dict[int, float]

    def total(self) -> float:
        return float(sum(self.weights.values()))


class GlobalLogitPool:
    """Server memory of the latest correct logit per public-train index."""

    def __init__(self, capacity: int, class_count: int) -> None:
        self.capacity = capacity
        self.class_count = class_count
        self._entries: Dict[int, np.ndarray] = {}

    def __contains__(self, index: object) -> bool:
        return index in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._entries))

    def get(self, index: int) -> np.ndarray:
        return self._entries[index]

    def store(self, index: int, logits: np.ndarray) -> None:
        if not 0 <= index < self.capacity:
            raise ValueError(f"pool index {index} outside [0, {self.capacity})")
        vec = np.array(logits, dtype=np.float64, copy=True)
        if vec.shape != (self.class_count,):
            raise ValueError(f"pool entries must have length {self.class_count}")
        self._entries[int(index)] = vec

    def items(self) -> Iterator[tuple[int, np.ndarray]]:
        for idx in sorted(self._entries):
            yield idx, self._entries[idx]


@dataclass
class BranchCounts:
    self_train: int = 0
    self_distill: int = 0
    ensemble: int = 0
    fallback: int = 0

    def add(self, branch: Branch) -> None:
        if branch is Branch.SELF_TRAIN:
            self.self_train += 1
        elif branch is Branch.SELF_DISTILL:
            self.self_distill += 1
        elif branch is Branch.ENSEMBLE_DISTILL:
            self.ensemble += 1
        else:
            self.fallback += 1

    def total(self) -> int:
        return self.self_train + self.self_distill + self.ensemble + self.fallback


@dataclass
class ServerRoundResult:
    counts: BranchCounts = field(default_factory=BranchCounts)
    uploads: Dict[int, int] = field(default_factory=dict)  # client id -> uplinked logit rows
    victims: tuple[int, ...] = ()
    mean_loss: float = 0.0
