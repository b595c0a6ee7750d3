"""Communication-cost bookkeeping. Only logits are billed; labels and indices are free."""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from fedgems.config import BYTES_PER_SCALAR
from fedgems.models.metrics import CommEvent, RoundMetrics

KB = 1024.0


def cost_per_logit(class_count: int, bytes_per_scalar: int = BYTES_PER_SCALAR) -> float:
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    return class_count * bytes_per_scalar / KB


def full_upload_round_cost(n_public: int, class_count: int, client_count: int, bytes_per_scalar: int = BYTES_PER_SCALAR) -> float:
    if n_public < 1 or class_count < 1 or client_count < 1:
        raise ValueError("all sizes must be >= 1")
    return client_count * n_public * class_count * bytes_per_scalar / KB


@dataclass
class CommLedger:
    class_count: int
    bytes_per_scalar: int = BYTES_PER_SCALAR
    events: List[CommEvent] = field(default_factory=list)
    cumulative_up_kb: float = 0.0
    cumulative_down_kb: float = 0.0

    def append(self, event: CommEvent) -> None:
        self.events.append(event)
        if event.direction == "up":
            self.cumulative_up_kb += event.bytes / KB
        else:
            self.cumulative_down_kb += event.bytes / KB

    def record_round(self, round_no: int, uplink: Mapping[int, int], downlink: Mapping[int, int]) -> "CommLedger":
        """One event per (client, direction), clients in ascending id order."""
        for direction, counts in (("up", uplink), ("down", downlink)):
            for party in sorted(counts):
                count = int(counts[party])
                if count < 0:
                    raise ValueError("logit counts must be nonnegative")
                n_bytes = count * self.class_count * self.bytes_per_scalar
                self.append(CommEvent(round_no, direction, party, count, n_bytes))
        return self

    def totals_through(self, round_no: int) -> tuple[float, float]:
        up = sum(e.bytes for e in self.events if e.round <= round_no and e.direction == "up")
        down = sum(e.bytes for e in self.events if e.round <= round_no and e.direction == "down")
        return up / KB, down / KB

    def uploaded_logits(self, round_no: int) -> int:
        return sum(e.logit_count for e in self.events if e.round == round_no and e.direction == "up")

    @staticmethod
    def replay(class_count: int, events: Sequence[CommEvent], bytes_per_scalar: int = BYTES_PER_SCALAR) -> "CommLedger":
        ledger = CommLedger(class_count, bytes_per_scalar)
        for e in events:
            ledger.append(e)
        return ledger

    def summary(self) -> Dict[str, float]:
        return {
            "kb_up": self.cumulative_up_kb,
            "kb_down": self.cumulative_down_kb,
            "mb_up": self.cumulative_up_kb / KB,
            "mb_down": self.cumulative_down_kb / KB,
        }


def comu_at(ledger: CommLedger, metrics: Sequence[RoundMetrics], target: float, track: str = "server") -> Optional[float]:
    """Cumulative up+down KB at the first round whose tracked accuracy reaches ``target``."""
    if not metrics:
        raise ValueError("metrics must not be empty")
    column = "server_acc" if track == "server" else "client_acc_mean"
    for row in metrics:
        if getattr(row, column) >= target:
            up, down = ledger.totals_through(row.round)
            return up + down
    return None
