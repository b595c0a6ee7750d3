from __future__ import annotations
import os
from pathlib import Path
import sys
from platformdirs import user_data_dir
from dotenv import load_dotenv

# Load environment from .env if present
load_dotenv()

APP_NAME = "FedGEMS"
PROJECT_ROOT = Path(__file__).resolve().parents[1]
# In frozen (packaged) mode, write data under the user's profile
if getattr(sys, "frozen", False):
    DATA_DIR = Path(user_data_dir("FedGEMS", "FedGEMS"))
else:
    DATA_DIR = PROJECT_ROOT / "data"
RUNS_DIR = Path(os.getenv("FEDGEMS_RUNS_DIR", "") or (DATA_DIR / "runs"))
DB_PATH = DATA_DIR / "fedgems.db"
SCHEMA_PATH = PROJECT_ROOT / "fedgems" / "db" / "schema.sql"
CONFIGS_DIR = PROJECT_ROOT / "configs"

LOG_LEVEL = os.getenv("FEDGEMS_LOG_LEVEL", "INFO").upper()
DEFAULT_WORKERS = max(1, int(os.getenv("FEDGEMS_WORKERS", "1") or 1))

# 32-bit scalars on the wire: 10 classes * 4 bytes / 1024 = 0.0390625 KB per logit
BYTES_PER_SCALAR = 4

# A converged linear-softmax model on the default 10-class, 16-dim blobs scores
# 55-75% on held-out public data
DEFAULT_BLOB_SPREAD = 2.0

# Clamp for 1/H when a reliable client is (almost) certain
ENTROPY_FLOOR = 1e-6
INVERSE_ENTROPY_CAP = 1e6

CSV_SCHEMA_VERSION = 1


def ensure_dirs() -> None:
    # Always ensure data directory exists
    try:
        DATA_DIR.mkdir(parents=True, exist_ok=True)
        RUNS_DIR.mkdir(parents=True, exist_ok=True)
    except Exception:
        pass
