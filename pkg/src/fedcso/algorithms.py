"""Per-worker update rules for FCSG, FCSG-M and Acc-FCSG-M.

Every local step follows the same order: move the model with the current
estimator (x <- x - alpha u), then draw b outer samples with m inner samples
each at the new point and refresh u.  The three algorithms differ only in
the refresh:

* FCSG:        u <- est(x_new)
* FCSG-M:      u <- (1 - beta) u + beta est(x_new)
* Acc-FCSG-M:  u <- est(x_new) + (1 - beta) (u - est(x_old)), both
               estimates sharing the same draws.

On synchronisation steps the server performs the move (see
``federation.server_sync``) and the worker then only refreshes u.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InternalStateError, InvalidArgumentError
from .estimator import minibatch_grad_estimate
from .objectives import ConditionalObjective
from .rng import Purpose, rng_stream

__all__ = [
    "AlgorithmTag",
    "WorkerState",
    "draw_pairs",
    "init_estimator",
    "move",
    "refresh_estimator",
    "fcsg_local_step",
    "fcsg_m_local_step",
    "acc_fcsg_m_local_step",
    "local_step",
]


class AlgorithmTag(str, enum.Enum):
    FCSG = "fcsg"
    FCSG_M = "fcsg-m"
    ACC_FCSG_M = "acc-fcsg-m"

    @property
    def averages_estimator(self) -> bool:
        return self is not AlgorithmTag.FCSG

    @property
    def uses_beta(self) -> bool:
        return self is not AlgorithmTag.FCSG


@dataclass
class WorkerState:
    """Mutable state of one worker; owned by a single execution context at a time."""

    worker_id: int
    x: np.ndarray
    u: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    seed: int = 0
    outer_draws: int = 0
    inner_draws: int = 0


def draw_pairs(task: ConditionalObjective, worker: WorkerState, count: int, m: int, t: int):
    """Draw ``count`` outer samples and an inner batch of size m for each.

    Outer and inner draws come from the (seed, worker, t) streams of their
    own purpose, so the result does not depend on anything drawn elsewhere.
    """
    if count < 1 or m < 1:
        raise InvalidArgumentError(f"batch sizes must be >= 1, got b={count}, m={m}")
    outer_rng = rng_stream(worker.seed, worker.worker_id, t, Purpose.OUTER)
    inner_rng = rng_stream(worker.seed, worker.worker_id, t, Purpose.INNER)
    pairs = []
    for _ in range(count):
        xi = task.sample_outer(worker.worker_id, outer_rng)
        pairs.append((xi, task.sample_inner(xi, m, inner_rng)))
    worker.outer_draws += count
    worker.inner_draws += count * m
    return pairs


def init_estimator(worker: WorkerState, task: ConditionalObjective, B: int, m: int, keep_prev: bool = False) -> WorkerState:
    """Set u to the B-sample estimate at the initial point (draws keyed at t = 0)."""
    if B < 1:
        raise InvalidArgumentError(f"initial batch size B must be >= 1, got {B}")
    pairs = draw_pairs(task, worker, B, m, 0)
    worker.u = minibatch_grad_estimate(task, worker.x, pairs).vector
    worker.x_prev = worker.x.copy() if keep_prev else None
    return worker


def move(worker: WorkerState, alpha: float) -> WorkerState:
    """x <- x - alpha u, remembering the old x."""
    if worker.u is None:
        raise InternalStateError(f"worker {worker.worker_id} has no estimator; call init_estimator first")
    worker.x_prev = worker.x
    worker.x = worker.x - alpha * worker.u
    return worker


def refresh_estimator(
    worker: WorkerState, task: ConditionalObjective, tag: AlgorithmTag, beta: float, b: int, m: int, t: int
) -> WorkerState:
    """Form u_{t+1} at the current x from fresh draws keyed at step t."""
    tag = AlgorithmTag(tag)
    if tag is AlgorithmTag.ACC_FCSG_M and worker.x_prev is None:
        raise InternalStateError("Acc-FCSG-M step needs the previous iterate")
    pairs = draw_pairs(task, worker, b, m, t)
    fresh = minibatch_grad_estimate(task, worker.x, pairs).vector
    if tag is AlgorithmTag.FCSG:
        worker.u = fresh
    elif tag is AlgorithmTag.FCSG_M:
        worker.u = (1.0 - beta) * worker.u + beta * fresh
    else:
        old = minibatch_grad_estimate(task, worker.x_prev, pairs).vector
        worker.u = fresh + (1.0 - beta) * (worker.u - old)
    return worker


def fcsg_local_step(worker, task, alpha: float, b: int, m: int, t: int) -> WorkerState:
    move(worker, alpha)
    return refresh_estimator(worker, task, AlgorithmTag.FCSG, 1.0, b, m, t)


def fcsg_m_local_step(worker, task, alpha: float, beta: float, b: int, m: int, t: int) -> WorkerState:
    move(worker, alpha)
    return refresh_estimator(worker, task, AlgorithmTag.FCSG_M, beta, b, m, t)


def acc_fcsg_m_local_step(worker, task, alpha: float, beta: float, b: int, m: int, t: int) -> WorkerState:
    if worker.x_prev is None:
        raise InternalStateError("Acc-FCSG-M step needs the previous iterate")
    move(worker, alpha)
    return refresh_estimator(worker, task, AlgorithmTag.ACC_FCSG_M, beta, b, m, t)


def local_step(worker, task, tag: AlgorithmTag, alpha: float, beta: float, b: int, m: int, t: int) -> WorkerState:
    """Dispatch to the local step of ``tag``."""
    tag = AlgorithmTag(tag)
    if tag is AlgorithmTag.FCSG:
        return fcsg_local_step(worker, task, alpha, b, m, t)
    if tag is AlgorithmTag.FCSG_M:
        return fcsg_m_local_step(worker, task, alpha, beta, b, m, t)
    return acc_fcsg_m_local_step(worker, task, alpha, beta, b, m, t)
