from .actor_critic import (
    AcConfig,
    ContinuousAcSubagent,
    DiscreteAcSubagent,
    TrainingDivergence,
    make_ac_subagent,
)
from .replay import Batch, ReplayBuffer, absorbing, buffer_push_all
from .tabular import (
    TabularConfig,
    TabularSubagent,
    UnsupportedModeError,
    VISubagent,
    bellman_residual,
    greedy_action,
    tabular_update,
    value_iteration,
)

__all__ = [
    "AcConfig",
    "Batch",
    "ContinuousAcSubagent",
    "DiscreteAcSubagent",
    "ReplayBuffer",
    "TabularConfig",
    "TabularSubagent",
    "TrainingDivergence",
    "UnsupportedModeError",
    "VISubagent",
    "bellman_residual",
    "absorbing",
    "buffer_push_all",
    "greedy_action",
    "make_ac_subagent",
    "tabular_update",
    "value_iteration",
]
