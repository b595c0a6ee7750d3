from __future__ import annotations
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, List

METRICS_COLUMNS = [
    "round",
    "server_acc",
    "client_acc_mean",
    "client_acc_min",
    "client_acc_max",
    "n_selftrain",
    "n_selfdistill",
    "n_ensemble",
    "n_fallback",
    "kb_up_cum",
    "kb_down_cum",
    "client_acc_public_mean",
    "client_acc_private_mean",
    "client_acc_best",
    "uploaded_logits",
    "attack_kind",
    "attack_victims",
]

LEDGER_COLUMNS = ["round", "direction", "party", "logit_count", "bytes"]


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    server_acc: float
    client_acc_mean: float
    client_acc_min: float
    client_acc_max: float
    n_selftrain: int
    n_selfdistill: int
    n_ensemble: int
    n_fallback: int
    kb_up_cum: float
    kb_down_cum: float
    client_acc_public_mean: float
    client_acc_private_mean: float
    client_acc_best: float
    uploaded_logits: int
    attack_kind: str = "none"
    attack_victims: str = ""

    def as_row(self) -> List[Any]:
        d = asdict(self)
        return [d[c] for c in METRICS_COLUMNS]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CommEvent:
    round: int
    direction: str  # "up" | "down"
    party: int
    logit_count: int
    bytes: int

    def as_row(self) -> List[Any]:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass(frozen=True)
class AttackEvent:
    round: int
    kind: str
    victims: tuple[int, ...]

    def victims_text(self) -> str:
        return ";".join(str(v) for v in self.victims)
