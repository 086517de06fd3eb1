"""Federated conditional stochastic optimization: FCSG, FCSG-M and Acc-FCSG-M."""

__version__ = "0.1.0"

from .algorithms import AlgorithmTag, WorkerState  # noqa: E402
from .estimator import (  # noqa: E402
    GradEstimate,
    biased_grad_estimate,
    empirical_inner_mean,
    empirical_objective,
    minibatch_grad_estimate,
)
from .federation import FederationConfig, run, run_from_metadata, server_sync  # noqa: E402
from .metrics import Trace, average_precision, grad_norm_metric, read_trace, write_trace  # noqa: E402
from .objectives import (  # noqa: E402
    InnerBatch,
    OuterSample,
    SmoothnessConstants,
    TaskSpec,
    make_task,
)
from .rng import Purpose, rng_stream  # noqa: E402
from .schedules import acc_schedule, fcsg_m_schedule, fcsg_schedule  # noqa: E402

__all__ = [
    "AlgorithmTag",
    "WorkerState",
    "GradEstimate",
    "biased_grad_estimate",
    "empirical_inner_mean",
    "empirical_objective",
    "minibatch_grad_estimate",
    "FederationConfig",
    "run",
    "run_from_metadata",
    "server_sync",
    "Trace",
    "average_precision",
    "grad_norm_metric",
    "read_trace",
    "write_trace",
    "InnerBatch",
    "OuterSample",
    "SmoothnessConstants",
    "TaskSpec",
    "make_task",
    "Purpose",
    "rng_stream",
    "acc_schedule",
    "fcsg_schedule",
    "fcsg_m_schedule",
]
