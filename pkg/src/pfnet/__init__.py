"""Positive factor networks.

Systems of coupled non-negative matrix factorizations over a DAG of
variables, solved jointly by multiplicative updates with local-copy
averaging.  See the kernels, graph, engine, builders, datagen, io_viz,
and experiments modules.
"""

from .engine import InferenceConfig, ObservationOverride, RunTrace, run, total_cost
from .graph import (
    HIDDEN,
    OBSERVED,
    FactorEquation,
    FactorNetwork,
    NetworkError,
    ParamBlock,
    SegmentRef,
    VariableNode,
)
from .kernels import (
    DEFAULT_EPS,
    NormalizationPolicy,
    SparsenessSchedule,
    kl_divergence,
    left_update,
    left_update_eps,
    reconstruction_rmse,
    right_update,
    right_update_eps,
    rmse,
    smoothing_matrix,
)

__all__ = [
    "DEFAULT_EPS",
    "HIDDEN",
    "OBSERVED",
    "FactorEquation",
    "FactorNetwork",
    "InferenceConfig",
    "NetworkError",
    "NormalizationPolicy",
    "ObservationOverride",
    "ParamBlock",
    "RunTrace",
    "SegmentRef",
    "SparsenessSchedule",
    "VariableNode",
    "kl_divergence",
    "left_update",
    "left_update_eps",
    "reconstruction_rmse",
    "right_update",
    "right_update_eps",
    "rmse",
    "run",
    "smoothing_matrix",
    "total_cost",
]

__version__ = "0.1.0"
