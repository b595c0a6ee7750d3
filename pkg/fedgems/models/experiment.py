from __future__ import annotations
import hashlib
import json
from pathlib import Path
from typing import Any, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fedgems.config import DEFAULT_BLOB_SPREAD
from fedgems.errors import ConfigError

Mode = Literal["fedgems", "fedgem", "standalone"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSpec(_Strict):
    source: Literal["blobs", "external"] = "blobs"
    path: Optional[str] = None
    class_count: int = Field(default=10, ge=2)
    input_dim: int = Field(default=16, ge=1)
    samples_per_class: int = Field(default=500, ge=1)
    spread: float = Field(default=DEFAULT_BLOB_SPREAD, gt=0)
    # 0 keeps the public label distribution equal to the private one
    public_label_skew: float = Field(default=0.0, ge=0.0, lt=1.0)


class SplitSpec(_Strict):
    public_fraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    train_test_ratio: Tuple[int, int] = (5, 1)

    @field_validator("train_test_ratio")
    @classmethod
    def _positive_ratio(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if v[0] < 1 or v[1] < 1:
            raise ValueError("train_test_ratio entries must be >= 1")
        return v


class PartitionSpec(_Strict):
    mode: Literal["iid", "dirichlet"] = "dirichlet"
    alpha: float = Field(default=0.5, gt=0.0)


class ModelSpec(_Strict):
    # 0 selects the linear-softmax kind
    hidden_dim: int = Field(default=0, ge=0)


class OptimizerConfig(_Strict):
    learning_rate: float = Field(default=0.001, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps_adam: float = Field(default=1e-8, gt=0.0)
    kd_weight: float = Field(default=0.75, ge=0.0, le=1.0)
    temperature: float = Field(default=1.0, gt=0.0)


class ProtocolConfig(_Strict):
    rounds: int = Field(default=10, ge=1)
    mode: Mode = "fedgems"
    self_train_on: bool = True
    self_distill_on: bool = True
    ensemble_distill_on: bool = True
    local_epochs: int = Field(default=1, ge=0)
    batch_size: int = Field(default=32, ge=1)

    @model_validator(mode="after")
    def _one_branch(self) -> "ProtocolConfig":
        if not (self.self_train_on or self.self_distill_on or self.ensemble_distill_on):
            raise ValueError("at least one server branch must be enabled")
        return self


class AttackSpec(_Strict):
    kind: Literal["none", "paf", "lie", "ofom"] = "none"
    epsilon_fraction: float = Field(default=0.25, ge=0.0, lt=1.0)
    magnitude: float = Field(default=100.0, gt=0.0)
    direction: Union[Literal["ones", "random"], int] = "ones"
    seed: Optional[int] = None

    @property
    def active(self) -> bool:
        return self.kind != "none"


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = Field(default=0, ge=0)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    split: SplitSpec = Field(default_factory=SplitSpec)
    partition: PartitionSpec = Field(default_factory=PartitionSpec)
    client_count: int = Field(default=8, ge=1)
    server_model: ModelSpec = Field(default_factory=lambda: ModelSpec(hidden_dim=64))
    # cycled over clients, so heterogeneous fleets are one list away
    client_models: List[ModelSpec] = Field(default_factory=lambda: [ModelSpec(hidden_dim=0)])
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)
    attack: AttackSpec = Field(default_factory=AttackSpec)
    baselines: List[Mode] = Field(default_factory=list)
    export_data: bool = False
    workers: int = Field(default=1, ge=1)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _consistent(self) -> "ExperimentConfig":
        if not self.client_models:
            raise ValueError("client_models must not be empty")
        if self.partition.mode == "dirichlet" and self.client_count < 2:
            raise ValueError("dirichlet partitioning needs client_count >= 2")
        k = self.client_count
        if self.attack.kind == "ofom" and k < 3:
            raise ValueError("ofom poisons two clients per round and needs client_count >= 3")
        if self.attack.kind == "paf" and k < 2:
            raise ValueError("paf needs client_count >= 2")
        if self.attack.kind == "lie":
            count = self.attack.epsilon_fraction * k
            if k < 2 or count < 1 or abs(count - round(count)) > 1e-9:
                raise ValueError("lie needs client_count >= 2 and epsilon_fraction * client_count a whole count >= 1")
        return self

    def client_model(self, client_id: int) -> ModelSpec:
        return self.client_models[client_id % len(self.client_models)]

    @property
    def attack_seed(self) -> int:
        return self.seed if self.attack.seed is None else self.attack.seed

    def canonical_json(self) -> str:
        data = self.model_dump(mode="json", exclude={"output_dir", "workers"})
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def updated(self, **changes: Any) -> "ExperimentConfig":
        """Copy with dotted-path overrides, re-validated, e.g. ``updated(**{"protocol.mode": "fedgem"})``."""
        data = self.model_dump(mode="json")
        for dotted, value in changes.items():
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        return ExperimentConfig.model_validate(data)

    @staticmethod
    def from_text(text: str, source: str = "<config>") -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{source}: invalid JSON", [f"line {e.lineno}, column {e.colno}: {e.msg}"]) from e
        if isinstance(data, dict):
            # provenance written next to a run's embedded config
            data.pop("_meta", None)
        try:
            return ExperimentConfig.model_validate(data)
        except ValidationError as e:
            diagnostics = []
            for err in e.errors():
                path = ".".join(str(p) for p in err["loc"]) or "<root>"
                line = _locate(text, err["loc"])
                where = f"line {line}: " if line else ""
                diagnostics.append(f"{where}{path}: {err['msg']}")
            raise ConfigError(f"{source}: invalid experiment config", diagnostics) from e

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {p}: {e}") from e
        return ExperimentConfig.from_text(text, source=str(p))


def _locate(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """Best-effort line of the last named key along ``loc``."""
    pos = 0
    found = None
    for part in loc:
        if not isinstance(part, str):
            continue
        hit = text.find(f'"{part}"', pos)
        if hit < 0:
            break
        found = pos = hit
    if found is None:
        return None
    return text.count("\n", 0, found) + 1
