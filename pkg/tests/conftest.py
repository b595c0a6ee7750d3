from __future__ import annotations

import numpy as np
import pytest

from fedgems import config
from fedgems.models.classifier import Classifier, TrainableModel
from fedgems.models.experiment import ExperimentConfig
from fedgems.models.protocol import ClientReport
from fedgems.services import experiment_service


def tiny_config(**overrides) -> ExperimentConfig:
    base = ExperimentConfig.model_validate({
        "name": "tiny",
        "seed": 11,
        "dataset": {"class_count": 3, "input_dim": 4, "samples_per_class": 40, "spread": 0.8},
        "partition": {"mode": "dirichlet", "alpha": 1.0},
        "client_count": 3,
        "server_model": {"hidden_dim": 6},
        "client_models": [{"hidden_dim": 0}, {"hidden_dim": 3}],
        "optimizer": {"learning_rate": 0.01},
        "protocol": {"rounds": 2, "batch_size": 8},
    })
    return base.updated(**overrides) if overrides else base


def make_reports(rows_per_client, indices, round_no: int = 1):
    """One ClientReport per entry; ``rows_per_client[k]`` is a (len(indices), C) array."""
    return [
        ClientReport(k, round_no, np.asarray(indices), np.asarray(rows, dtype=float))
        for k, rows in enumerate(rows_per_client)
    ]


@pytest.fixture
def cfg() -> ExperimentConfig:
    return tiny_config()


@pytest.fixture
def prepared(cfg):
    return experiment_service.prepare_data(cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def linear_model() -> TrainableModel:
    return TrainableModel(Classifier.create(4, 0, 3, np.random.default_rng(0)))


@pytest.fixture
def registry_db(tmp_path, monkeypatch):
    db = tmp_path / "registry.db"
    monkeypatch.setattr(config, "DB_PATH", db)
    return db
