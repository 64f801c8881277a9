"""Deterministic single-process simulator for federated split learning with
multiple depth-level partition points, auxiliary-head collaborative losses,
shell-wise heterogeneous aggregation, baseline protocols, and a
FLOPs/parameter/communication accountant."""

from . import _kernels
from .nn import (ClassifierHead, Dense, MeanPool, Relu, ResidualBlock,
                 SgdConfig, backward, cross_entropy, forward, sgd_step)
from .split import (FullModel, PartitionPlan, SmashedBatch, SplitModel,
                    client_collaborative_loss, ensemble_predict, server_loss,
                    split)
from .federation import (AggregationWeights, ClientProfile, Federation,
                         ModeSpec, ParamSegments, RoundPlan, ShellPayload,
                         ShellUpdate, heteroavg, parse_mode, run_round,
                         sample_clients)
from .harness import ExperimentConfig, evaluate, run_experiment

__version__ = "0.1.0"


def backend() -> str:
    """Name of the active kernel backend ("compiled" or "numpy")."""
    return _kernels.active_name()
