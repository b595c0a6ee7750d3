from __future__ import annotations
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from fedgems.db.database import execute, execute_returning_id, executemany, query, query_one
from fedgems.models.experiment import ExperimentConfig
from fedgems.models.metrics import RoundMetrics


@dataclass
class RunRecord:
    id: int
    name: str
    command: str
    config_hash: str
    seed: int
    mode: str
    attack: str
    output_dir: str
    status: str
    rounds_done: int
    final_server_acc: Optional[float]
    final_client_acc_mean: Optional[float]
    kb_up: Optional[float]
    kb_down: Optional[float]
    error: Optional[str]

    @staticmethod
    def from_row(row) -> "RunRecord":
        if row is None:
            raise ValueError("Row is None")
        return RunRecord(
            id=int(row["id"]),
            name=str(row["name"]),
            command=str(row["command"]),
            config_hash=str(row["config_hash"]),
            seed=int(row["seed"]),
            mode=str(row["mode"]),
            attack=str(row["attack"] or "none"),
            output_dir=str(row["output_dir"]),
            status=str(row["status"]),
            rounds_done=int(row["rounds_done"] or 0),
            final_server_acc=row["final_server_acc"],
            final_client_acc_mean=row["final_client_acc_mean"],
            kb_up=row["kb_up"],
            kb_down=row["kb_down"],
            error=row["error"],
        )


def _real(v: float) -> Optional[float]:
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)


# ---------- Runs ----------

def start_run(cfg: ExperimentConfig, command: str, output_dir: str | Path, db_path: Optional[Path] = None) -> int:
    return execute_returning_id(
        """
        INSERT INTO runs (name, command, config_hash, seed, mode, attack, output_dir)
        VALUES (?, ?, ?, ?, ?, ?, ?)
        """,
        (cfg.name, command, cfg.config_hash(), cfg.seed, cfg.protocol.mode, cfg.attack.kind, str(output_dir)),
        db_path=db_path,
    )


def record_rounds(run_id: int, rows: Sequence[RoundMetrics], db_path: Optional[Path] = None) -> None:
    executemany(
        """
        INSERT OR REPLACE INTO round_metrics (run_id, round, server_acc, client_acc_mean, n_selftrain,
            n_selfdistill, n_ensemble, n_fallback, kb_up_cum, kb_down_cum)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """,
        [
            (run_id, r.round, _real(r.server_acc), _real(r.client_acc_mean), r.n_selftrain, r.n_selfdistill,
             r.n_ensemble, r.n_fallback, r.kb_up_cum, r.kb_down_cum)
            for r in rows
        ],
        db_path=db_path,
    )


def finish_run(run_id: int, rows: Sequence[RoundMetrics], error: Optional[str] = None, db_path: Optional[Path] = None) -> None:
    last = rows[-1] if rows else None
    execute(
        """
        UPDATE runs SET status = ?, rounds_done = ?, final_server_acc = ?, final_client_acc_mean = ?,
            kb_up = ?, kb_down = ?, error = ?
        WHERE id = ?
        """,
        (
            "failed" if error else "done",
            len(rows),
            _real(last.server_acc) if last else None,
            _real(last.client_acc_mean) if last else None,
            last.kb_up_cum if last else None,
            last.kb_down_cum if last else None,
            error,
            run_id,
        ),
        db_path=db_path,
    )
    record_rounds(run_id, rows, db_path=db_path)


def get_run(run_id: int, db_path: Optional[Path] = None) -> Optional[RunRecord]:
    row = query_one("SELECT * FROM runs WHERE id = ?", (run_id,), db_path=db_path)
    return RunRecord.from_row(row) if row else None


def list_runs(limit: int = 20, config_hash: str = "", db_path: Optional[Path] = None) -> list[RunRecord]:
    sql = "SELECT * FROM runs WHERE 1=1"
    params: list = []
    if config_hash:
        sql += " AND config_hash = ?"
        params.append(config_hash)
    sql += " ORDER BY id DESC LIMIT ?"
    params.append(limit)
    rows = query(sql, params, db_path=db_path)
    return [RunRecord.from_row(r) for r in rows]


def run_rounds(run_id: int, db_path: Optional[Path] = None) -> list[tuple[int, Optional[float], Optional[float]]]:
    rows = query(
        "SELECT round, server_acc, client_acc_mean FROM round_metrics WHERE run_id = ? ORDER BY round ASC",
        (run_id,),
        db_path=db_path,
    )
    return [(int(r[0]), r[1], r[2]) for r in rows]
