from .export_service import ExportService, MetricsWriter
from .async_worker import Worker, run_all
from .ledger_service import CommLedger

__all__ = [
    "ExportService",
    "MetricsWriter",
    "Worker",
    "run_all",
    "CommLedger",
]
