"""Sigma point belief propagation for pairwise factor graphs."""

__version__ = "0.1.0"

from .engine import (
    CompositeLayout,
    CompositeObservation,
    compose_prior,
    composite_observation,
    extrinsic_message,
    run,
    run_iteration,
    update_belief,
)
from .factor_graph import (
    Edge,
    Graph,
    MessageStore,
    NodeSpec,
    PairFn,
    Schedule,
    SymmetrizeMode,
    Variant,
    build_graph,
    init_messages,
    symmetrize_observation,
)
from .gaussian import GaussianBelief, IndexRange, block_diag, extract_marginal, psd_sqrt
from .sigma_points import (
    SigmaPointSet,
    UTParams,
    default_params,
    generate,
    sp_measurement_update,
    unscented_transform,
)

__all__ = [
    "CompositeLayout",
    "CompositeObservation",
    "Edge",
    "GaussianBelief",
    "Graph",
    "IndexRange",
    "MessageStore",
    "NodeSpec",
    "PairFn",
    "Schedule",
    "SigmaPointSet",
    "SymmetrizeMode",
    "UTParams",
    "Variant",
    "block_diag",
    "build_graph",
    "compose_prior",
    "composite_observation",
    "default_params",
    "extract_marginal",
    "extrinsic_message",
    "generate",
    "init_messages",
    "psd_sqrt",
    "run",
    "run_iteration",
    "sp_measurement_update",
    "symmetrize_observation",
    "unscented_transform",
    "update_belief",
]
