"""Graph-attention policy/value networks and the PPO learner."""

from lightpath_lab.agent.observation import (
    GraphObservation,
    ObservationConfig,
    ObservationEncoder,
)
from lightpath_lab.agent.networks import (
    GatConfig,
    GraphSpec,
    GatBackbone,
    PolicyNetwork,
    ValueNetwork,
    MaskedCategorical,
)
from lightpath_lab.agent.ppo import (
    PpoHyperparams,
    TrajectoryBuffer,
    gae,
    lr_schedule,
    PpoLearner,
)
from lightpath_lab.agent.checkpoint import (
    save_checkpoint,
    load_checkpoint,
    AgentPolicy,
    CheckpointConfigError,
    environment_fingerprint,
)

__all__ = [
    "GraphObservation",
    "ObservationConfig",
    "ObservationEncoder",
    "GatConfig",
    "GraphSpec",
    "GatBackbone",
    "PolicyNetwork",
    "ValueNetwork",
    "MaskedCategorical",
    "PpoHyperparams",
    "TrajectoryBuffer",
    "gae",
    "lr_schedule",
    "PpoLearner",
    "save_checkpoint",
    "load_checkpoint",
    "AgentPolicy",
    "CheckpointConfigError",
    "environment_fingerprint",
]
