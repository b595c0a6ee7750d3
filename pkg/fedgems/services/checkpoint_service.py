"""Binary checkpoint of a federation.

Layout (v2, little endian)::

    magic      8s   b"FGEMSCK\\0"
    version    u32
    round      u32
    classes    u32
    cfg hash   32s  raw SHA-256 of the canonical config
    seed       u64
    n_models   u32  server first, then clients by id
    per model:
        kind u8 (0 linear, 1 one-hidden-layer), input_dim u32, hidden_dim u32,
        class_count u32, param_count u64, params f64[], adam_t u64, m f64[], v f64[]
    pool:
        entry_count u64, then per entry: index u64, logits f64[classes]
"""
from __future__ import annotations
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, List

import numpy as np

from fedgems.models.classifier import HIDDEN, LINEAR, AdamState, Classifier, TrainableModel
from fedgems.models.protocol import GlobalLogitPool

MAGIC = b"FGEMSCK\0"
VERSION = 2
_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    round: int
    class_count: int
    config_hash: str
    seed: int
    server: TrainableModel
    clients: List[TrainableModel]
    pool: GlobalLogitPool


def _write_model(out: BinaryIO, tm: TrainableModel) -> None:
    m = tm.model
    out.write(struct.pack("<BIIIQ", 0 if m.kind == LINEAR else 1, m.input_dim, m.hidden_dim, m.class_count, m.size))
    out.write(m.params.astype(_F64).tobytes())
    out.write(struct.pack("<Q", tm.opt.t))
    out.write(tm.opt.m.astype(_F64).tobytes())
    out.write(tm.opt.v.astype(_F64).tobytes())


def _read(buf: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise ValueError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _read_f64(buf: BinaryIO, count: int) -> np.ndarray:
    raw = buf.read(count * 8)
    if len(raw) != count * 8:
        raise ValueError("truncated checkpoint")
    return np.frombuffer(raw, dtype=_F64).astype(np.float64)


def _read_model(buf: BinaryIO) -> TrainableModel:
    kind, d, h, c, count = _read(buf, "<BIIIQ")
    params = _read_f64(buf, count)
    (t,) = _read(buf, "<Q")
    m = _read_f64(buf, count)
    v = _read_f64(buf, count)
    model = Classifier(LINEAR if kind == 0 else HIDDEN, d, h, c, params)
    return TrainableModel(model, AdamState(m, v, int(t)))


def dumps(ckpt: Checkpoint) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<III", VERSION, ckpt.round, ckpt.class_count))
    out.write(bytes.fromhex(ckpt.config_hash) if ckpt.config_hash else bytes(32))
    out.write(struct.pack("<Q", ckpt.seed))
    models = [ckpt.server, *ckpt.clients]
    out.write(struct.pack("<I", len(models)))
    for tm in models:
        _write_model(out, tm)
    out.write(struct.pack("<Q", len(ckpt.pool)))
    for idx, logits in ckpt.pool.items():
        out.write(struct.pack("<Q", idx))
        out.write(np.asarray(logits, dtype=_F64).tobytes())
    return out.getvalue()


def loads(data: bytes, pool_capacity: int | None = None) -> Checkpoint:
    buf = io.BytesIO(data)
    if buf.read(8) != MAGIC:
        raise ValueError("not a fedgems checkpoint")
    version, round_no, classes = _read(buf, "<III")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config_hash = buf.read(32).hex()
    (seed,) = _read(buf, "<Q")
    (n_models,) = _read(buf, "<I")
    models = [_read_model(buf) for _ in range(n_models)]
    (entries,) = _read(buf, "<Q")
    rows = []
    for _ in range(entries):
        (idx,) = _read(buf, "<Q")
        rows.append((int(idx), _read_f64(buf, classes)))
    capacity = pool_capacity if pool_capacity is not None else (max((i for i, _ in rows), default=-1) + 1)
    pool = GlobalLogitPool(capacity, classes)
    for idx, logits in rows:
        pool.store(idx, logits)
    return Checkpoint(int(round_no), int(classes), config_hash, int(seed), models[0], models[1:], pool)


def save(path: str | Path, ckpt: Checkpoint) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(dumps(ckpt))
    return p


def load(path: str | Path, pool_capacity: int | None = None) -> Checkpoint:
    return loads(Path(path).read_bytes(), pool_capacity)
