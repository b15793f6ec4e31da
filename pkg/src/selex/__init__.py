"""Constrained conditional maximum likelihood for rank-selected normal means."""

from .estimator import (
    CcmleResult,
    MaxIterationsExceeded,
    MonotoneCone,
    ObservedSample,
    OptimizerSettings,
    RootBracketFailure,
    ccmle,
    ccmle_p2,
    conditional_log_likelihood,
    project_monotone,
    taylor_start,
)
from .experiments import (
    BootstrapConfig,
    ExperimentRecord,
    IntervalSet,
    MseConfig,
    export_results,
    run_bootstrap_ci,
    run_mse,
    score_draw,
)
from .kernels import (
    ConvergenceFailure,
    QuadratureSpec,
    integrate,
    inverse_mills,
    std_normal_cdf,
    std_normal_pdf,
)
from .ordering import (
    MeanConfig,
    OrderingProb,
    UnderflowWarning,
    grad_log_ordering_probability,
    mc_ordering_probability,
    ordering_probability,
)

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig",
    "CcmleResult",
    "ConvergenceFailure",
    "ExperimentRecord",
    "IntervalSet",
    "MaxIterationsExceeded",
    "MeanConfig",
    "MonotoneCone",
    "MseConfig",
    "ObservedSample",
    "OptimizerSettings",
    "OrderingProb",
    "QuadratureSpec",
    "RootBracketFailure",
    "UnderflowWarning",
    "ccmle",
    "ccmle_p2",
    "conditional_log_likelihood",
    "export_results",
    "grad_log_ordering_probability",
    "integrate",
    "inverse_mills",
    "mc_ordering_probability",
    "ordering_probability",
    "project_monotone",
    "run_bootstrap_ci",
    "run_mse",
    "score_draw",
    "std_normal_cdf",
    "std_normal_pdf",
    "taylor_start",
]
