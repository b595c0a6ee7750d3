from __future__ import annotations
from typing import Any, List, Optional


class FedGemsError(Exception):
    """Base class for every failure raised by the simulator."""


class ConfigError(FedGemsError):
    def __init__(self, message: str, diagnostics: Optional[List[str]] = None) -> None:
        self.diagnostics = list(diagnostics or [])
        if self.diagnostics:
            message = message + "\n" + "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(message)


class ProtocolError(FedGemsError):
    pass


class DivergedLossError(ProtocolError):
    def __init__(self, round_no: int, batch_no: int, loss: float) -> None:
        self.round_no = round_no
        self.batch_no = batch_no
        self.loss = loss
        super().__init__(f"server loss diverged in round {round_no}, batch {batch_no}: {loss!r}")


class CorruptLogitsError(ValueError):
    pass


class ExperimentAborted(FedGemsError):
    def __init__(self, message: str, partial_metrics: List[Any]) -> None:
        self.partial_metrics = partial_metrics
        super().__init__(message)
