from __future__ import annotations
import sqlite3
from pathlib import Path
from typing import Any, Iterable, Optional

from fedgems import config
from fedgems.config import SCHEMA_PATH, ensure_dirs


def _db_path(db_path: Optional[Path] = None) -> Path:
    return Path(db_path) if db_path is not None else config.DB_PATH


def _connect(db_path: Optional[Path] = None) -> sqlite3.Connection:
    conn = sqlite3.connect(_db_path(db_path), isolation_level=None)
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys = ON")
    return conn


def init_db(db_path: Optional[Path] = None) -> None:
    """Initialize the run registry schema."""
    ensure_dirs()
    _db_path(db_path).parent.mkdir(parents=True, exist_ok=True)
    with _connect(db_path) as conn:
        with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
            conn.executescript(f.read())


def execute(sql: str, params: Iterable[Any] | None = None, db_path: Optional[Path] = None) -> None:
    with _connect(db_path) as conn:
        conn.execute(sql, tuple(params or ()))

def executemany(sql: str, seq_of_params: Iterable[Iterable[Any]], db_path: Optional[Path] = None) -> None:
    with _connect(db_path) as conn:
        conn.executemany(sql, seq_of_params)

def execute_returning_id(sql: str, params: Iterable[Any] | None = None, db_path: Optional[Path] = None) -> int:
    with _connect(db_path) as conn:
        cur = conn.execute(sql, tuple(params or ()))
        return int(cur.lastrowid)

def query(sql: str, params: Iterable[Any] | None = None, db_path: Optional[Path] = None) -> list[sqlite3.Row]:
    with _connect(db_path) as conn:
        cur = conn.execute(sql, tuple(params or ()))
        return list(cur.fetchall())

def query_one(sql: str, params: Iterable[Any] | None = None, db_path: Optional[Path] = None) -> Optional[sqlite3.Row]:
    with _connect(db_path) as conn:
        cur = conn.execute(sql, tuple(params or ()))
        row = cur.fetchone()
        return row
