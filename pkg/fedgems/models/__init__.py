from .classifier import AdamState, Classifier, TrainableModel
from .dataset import Dataset, PartitionPlan
from .experiment import (
    AttackSpec,
    DatasetSpec,
    ExperimentConfig,
    ModelSpec,
    OptimizerConfig,
    PartitionSpec,
    ProtocolConfig,
    SplitSpec,
)
from .metrics import AttackEvent, CommEvent, RoundMetrics
from .protocol import (
    AggregationWeights,
    Branch,
    BranchCounts,
    ClientReport,
    GlobalLogitPool,
    RoutingDecision,
    ServerRoundResult,
)

__all__ = [
    "AdamState",
    "Classifier",
    "TrainableModel",
    "Dataset",
    "PartitionPlan",
    "AttackSpec",
    "DatasetSpec",
    "ExperimentConfig",
    "ModelSpec",
    "OptimizerConfig",
    "PartitionSpec",
    "ProtocolConfig",
    "SplitSpec",
    "AttackEvent",
    "CommEvent",
    "RoundMetrics",
    "AggregationWeights",
    "Branch",
    "BranchCounts",
    "ClientReport",
    "GlobalLogitPool",
    "RoutingDecision",
    "ServerRoundResult",
]
