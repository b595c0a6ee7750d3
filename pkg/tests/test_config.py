import json

import pytest

from fedgems.config import CONFIGS_DIR
from fedgems.errors import ConfigError
from fedgems.models.experiment import ExperimentConfig


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.optimizer.learning_rate == 0.001
    assert cfg.optimizer.kd_weight == 0.75
    assert cfg.optimizer.temperature == 1.0
    assert cfg.protocol.local_epochs == 1
    assert cfg.split.train_test_ratio == (5, 1)
    assert cfg.attack.magnitude == 100.0


@pytest.mark.parametrize("path", sorted(CONFIGS_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_configs_validate(path):
    ExperimentConfig.from_file(path)


def test_invalid_json_reports_position():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text('{\n  "name": "x",\n  "seed": 1,,\n}')
    assert "line 3" in info.value.diagnostics[0]


def test_schema_errors_carry_line_numbers():
    text = '{\n  "name": "x",\n  "protocol": {\n    "rounds": 0\n  }\n}'
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text(text)
    assert any(d.startswith("line 4: protocol.rounds") for d in info.value.diagnostics)


def test_unknown_fields_are_rejected():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text(json.dumps({"rounds": 3}))
    assert "rounds" in str(info.value)


def test_missing_file():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file("/nonexistent/experiment.json")


@pytest.mark.parametrize(
    "data",
    [
        {"attack": {"kind": "ofom"}, "client_count": 2},
        {"attack": {"kind": "lie", "epsilon_fraction": 0.25}, "client_count": 6},
        {"partition": {"mode": "dirichlet"}, "client_count": 1},
        {"client_models": []},
        {"optimizer": {"kd_weight": 1.5}},
        {"attack": {"epsilon_fraction": 1.0}},
    ],
)
def test_inconsistent_configs(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text(json.dumps(data))


def test_client_models_cycle():
    cfg = ExperimentConfig(client_models=[{"hidden_dim": 0}, {"hidden_dim": 4}])
    assert [cfg.client_model(k).hidden_dim for k in range(4)] == [0, 4, 0, 4]


def test_hash_ignores_output_location():
    a = ExperimentConfig(output_dir="/tmp/a", workers=2)
    b = ExperimentConfig(output_dir="/tmp/b")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != a.updated(seed=1).config_hash()
    assert len(a.config_hash()) == 64


def test_updated_uses_dotted_paths_and_revalidates():
    cfg = ExperimentConfig().updated(**{"protocol.mode": "fedgem", "split.public_fraction": 0.3})
    assert cfg.protocol.mode == "fedgem" and cfg.split.public_fraction == 0.3
    with pytest.raises(ValueError):
        cfg.updated(**{"protocol.rounds": 0})


def test_attack_seed_defaults_to_run_seed():
    assert ExperimentConfig(seed=4).attack_seed == 4
    assert ExperimentConfig(seed=4, attack={"seed": 9}).attack_seed == 9
