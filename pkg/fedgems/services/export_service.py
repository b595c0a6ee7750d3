from __future__ import annotations
import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, TextIO

from fedgems.config import CSV_SCHEMA_VERSION
from fedgems.models.dataset import Dataset, PartitionPlan
from fedgems.models.metrics import LEDGER_COLUMNS, METRICS_COLUMNS, AttackEvent, CommEvent, RoundMetrics


def _cell(value: Any) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(round(value, 10))
    return str(value)


def header_comment(kind: str, config_hash: str, seed: int) -> str:
    return f"# fedgems {kind} v{CSV_SCHEMA_VERSION} config_hash={config_hash} seed={seed}"


def read_csv_rows(path: str | Path) -> List[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


class ExportService:
    @staticmethod
    def to_text_file(path: str | Path, lines: Iterable[str]) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            for line in lines:
                f.write(str(line).rstrip() + "\n")
        return p

    @staticmethod
    def to_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence[Any]], comment: Optional[str] = None) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="") as f:
            if comment:
                f.write(comment + "\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return p

    @staticmethod
    def to_json(path: str | Path, data: Mapping[str, Any]) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8", newline="\n") as f:
            json.dump(data, f, indent=2, sort_keys=True, allow_nan=True)
            f.write("\n")
        return p

    @staticmethod
    def ledger_csv(path: str | Path, events: Sequence[CommEvent], comment: Optional[str] = None) -> Path:
        return ExportService.to_csv(path, LEDGER_COLUMNS, (e.as_row() for e in events), comment)

    @staticmethod
    def attacks_csv(path: str | Path, events: Sequence[AttackEvent], comment: Optional[str] = None) -> Path:
        rows = ((e.round, e.kind, e.victims_text()) for e in events)
        return ExportService.to_csv(path, ["round", "kind", "victims"], rows, comment)

    @staticmethod
    def dataset_csv(
        path: str | Path,
        public_train: Dataset,
        public_test: Dataset,
        shards: Sequence[tuple[int, Dataset, Dataset]],
        comment: Optional[str] = None,
    ) -> Path:
        """One row per sample: owner ("public" or client id), split, label, features."""
        d = public_train.input_dim
        columns = ["owner", "split", "label", *[f"x{i}" for i in range(d)]]

        def rows():
            for owner, split, ds in [("public", "train", public_train), ("public", "test", public_test)]:
                for x, y in zip(ds.x, ds.y):
                    yield [owner, split, int(y), *x.tolist()]
            for client_id, train, test in shards:
                for split, ds in (("train", train), ("test", test)):
                    for x, y in zip(ds.x, ds.y):
                        yield [client_id, split, int(y), *x.tolist()]

        return ExportService.to_csv(path, columns, rows(), comment)


class MetricsWriter:
    """Appends RoundMetrics rows as they arrive so an aborted run keeps its prefix."""

    def __init__(self, path: str | Path, comment: Optional[str] = None) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._f: Optional[TextIO] = open(self.path, "w", encoding="utf-8", newline="")
        if comment:
            self._f.write(comment + "\n")
        self._writer = csv.writer(self._f, lineterminator="\n")
        self._writer.writerow(METRICS_COLUMNS)
        self._f.flush()

    def write(self, row: RoundMetrics) -> None:
        if self._f is None:
            raise ValueError("metrics writer is closed")
        self._writer.writerow([_cell(v) for v in row.as_row()])
        self._f.flush()

    def close(self) -> None:
        if self._f is not None:
            self._f.close()
            self._f = None

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()


def partition_summary(plan: PartitionPlan, private: Dataset) -> dict:
    return {
        "mode": plan.mode,
        "alpha": plan.alpha,
        "sizes": plan.sizes(),
        "labels": {str(k): v for k, v in plan.label_table(private).items()},
    }
