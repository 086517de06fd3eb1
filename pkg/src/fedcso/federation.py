"""Simulated federation: N workers, T steps, a server sync every q steps.

Workers may run their local phases on a thread pool.  Results are identical
to a serial run because every draw comes from a stream keyed by
(seed, worker, step, purpose) and every aggregate is summed in worker order.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from .algorithms import AlgorithmTag, WorkerState, init_estimator, local_step, move, refresh_estimator
from .errors import ConfigError, ConfigWarning, InvalidArgumentError
from .metrics import MC_INNER, MC_OUTER, MetricsRow, Trace, consensus_error, grad_norm_metric
from .objectives import ConditionalObjective, TaskSpec, make_task
from .rng import MAX_SEED, SERVER, Purpose, rng_stream

__all__ = ["FederationConfig", "ServerState", "server_sync", "worker_mean", "run", "run_from_metadata"]


@dataclass(frozen=True)
class FederationConfig:
    """Everything that determines a run, bit for bit."""

    task: TaskSpec
    algorithm: AlgorithmTag = AlgorithmTag.FCSG
    n_workers: int = 1
    steps: int = 100
    local_steps: int = 1
    lr: float = 0.01
    momentum: float | None = None
    outer_batch: int = 1
    inner_batch: int = 1
    init_batch: int = 1
    seed: int = 0
    heterogeneous: bool = False
    record_every_step: bool = False
    eval_outer: int = MC_OUTER
    eval_inner: int = MC_INNER
    schedule: Mapping[str, Any] | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", AlgorithmTag(self.algorithm))

    def validate(self) -> "FederationConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_workers >= 1, "n_workers must be >= 1")
        need(self.steps >= 1, "steps must be >= 1")
        need(1 <= self.local_steps <= self.steps, "local_steps must satisfy 1 <= q <= T")
        need(self.outer_batch >= 1 and self.inner_batch >= 1 and self.init_batch >= 1, "batch sizes must be >= 1")
        need(self.lr > 0 and math.isfinite(self.lr), "lr must be positive")
        need(0 <= self.seed <= MAX_SEED, "seed must fit in 64 unsigned bits")
        need(self.eval_outer >= 1 and self.eval_inner >= 1, "evaluation sizes must be >= 1")
        if self.algorithm.uses_beta:
            need(self.momentum is not None, f"{self.algorithm.value} needs a momentum weight")
            need(0.0 <= self.momentum <= 1.0, "momentum must lie in [0, 1]")
            if self.momentum == 0.0:
                warnings.warn("momentum 0 freezes the estimator; outside the analysed regime", ConfigWarning, stacklevel=2)
        else:
            need(self.momentum is None, "fcsg does not take a momentum weight")
        return self

    @property
    def beta(self) -> float:
        return 1.0 if self.momentum is None else float(self.momentum)

    def to_dict(self) -> dict:
        return {
            "task": self.task.to_dict(),
            "algorithm": self.algorithm.value,
            "n_workers": self.n_workers,
            "steps": self.steps,
            "local_steps": self.local_steps,
            "lr": self.lr,
            "momentum": self.momentum,
            "outer_batch": self.outer_batch,
            "inner_batch": self.inner_batch,
            "init_batch": self.init_batch,
            "seed": self.seed,
            "heterogeneous": self.heterogeneous,
            "record_every_step": self.record_every_step,
            "eval_outer": self.eval_outer,
            "eval_inner": self.eval_inner,
            "schedule": None if self.schedule is None else dict(self.schedule),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FederationConfig":
        d = dict(d)
        d["task"] = TaskSpec.from_dict(d["task"])
        return cls(**d)

    def replace(self, **changes) -> "FederationConfig":
        return replace(self, **changes)


@dataclass
class ServerState:
    x_bar: np.ndarray
    u_bar: np.ndarray | None = None


def worker_mean(vectors) -> np.ndarray:
    """Mean over workers, summed sequentially in worker-index order."""
    stack = np.stack(list(vectors))
    return np.add.reduce(stack, axis=0) / stack.shape[0]


def server_sync(workers: list[WorkerState], algorithm: AlgorithmTag, alpha: float) -> ServerState:
    """Server update: average the post-step models (and estimators) and broadcast.

    Each worker first applies x <- x - alpha u with its own u; the mean of the
    results becomes every worker's x.  FCSG-M and Acc-FCSG-M also replace every
    u by the worker average.
    """
    if not workers:
        raise InvalidArgumentError("server_sync needs at least one worker")
    algorithm = AlgorithmTag(algorithm)
    for w in workers:
        move(w, alpha)
    x_bar = worker_mean(w.x for w in workers)
    u_bar = worker_mean(w.u for w in workers) if algorithm.averages_estimator else None
    for w in workers:
        w.x = x_bar.copy()
        if u_bar is not None:
            w.u = u_bar.copy()
    return ServerState(x_bar, u_bar)


class _Pool:
    """Serial or threaded map over workers, preserving order."""

    def __init__(self, threads: int):
        self._ex = ThreadPoolExecutor(threads) if threads > 1 else None

    def map(self, fn, items):
        if self._ex is None:
            return [fn(i) for i in items]
        return list(self._ex.map(fn, items))

    def close(self):
        if self._ex is not None:
            self._ex.shutdown()


def run(
    config: FederationConfig,
    *,
    threads: int = 1,
    task: ConditionalObjective | None = None,
    keep_iterates: bool = False,
    observer: Callable[[int, list[WorkerState]], None] | None = None,
) -> Trace:
    """Run the configured algorithm and return its trace.

    Rows are recorded after every server sync (and after every step when
    ``record_every_step``).  ``trace.output_x`` is the averaged model at a step
    drawn uniformly from 1..T with the output-pick stream.  ``task`` may be
    passed to reuse an already-built task object; it must match
    ``config.task``.  ``observer(t, workers)`` is called after every step and
    must not modify the workers.
    """
    cfg = config.validate()
    if task is None:
        task = make_task(cfg.task, cfg.n_workers, cfg.heterogeneous, cfg.seed)
    elif task.n_workers != cfg.n_workers:
        raise ConfigError(f"task built for {task.n_workers} workers, config has {cfg.n_workers}")
    tag, alpha, beta = cfg.algorithm, cfg.lr, cfg.beta
    b, m, q, N = cfg.outer_batch, cfg.inner_batch, cfg.local_steps, cfg.n_workers

    x0 = task.initial_point(rng_stream(cfg.seed, SERVER, 0, Purpose.INIT))
    workers = [WorkerState(n, x0.copy(), seed=cfg.seed) for n in range(N)]
    pool = _Pool(min(threads, N))
    keep_prev = tag is AlgorithmTag.ACC_FCSG_M

    def evaluate(x_bar, t):
        return (
            grad_norm_metric(task, x_bar, cfg.seed, t, cfg.eval_outer, cfg.eval_inner),
            task.loss(x_bar),
            task.test_metric(x_bar),
        )

    try:
        pool.map(lambda w: init_estimator(w, task, cfg.init_batch, m, keep_prev), workers)
        g0, loss0, metric0 = evaluate(x0, 0)

        rows: list[MetricsRow] = []
        x_bars = []
        rounds = 0
        for t in range(1, cfg.steps + 1):
            if t % q == 0:
                server = server_sync(workers, tag, alpha)
                rounds += 1
                x_bar = server.x_bar
                cx = consensus_error([w.x for w in workers], x_bar)
                cu = consensus_error([w.u for w in workers], server.u_bar) if server.u_bar is not None else math.nan
                pool.map(lambda w: refresh_estimator(w, task, tag, beta, b, m, t), workers)
                record = True
            else:
                pool.map(lambda w: local_step(w, task, tag, alpha, beta, b, m, t), workers)
                x_bar = worker_mean(w.x for w in workers)
                cx = consensus_error([w.x for w in workers], x_bar)
                cu = consensus_error([w.u for w in workers], worker_mean(w.u for w in workers)) if tag.averages_estimator else math.nan
                record = cfg.record_every_step
            x_bars.append(x_bar)
            if observer is not None:
                observer(t, workers)
            if record:
                g, loss, metric = evaluate(x_bar, t)
                used = sum(w.inner_draws for w in workers)
                rows.append(MetricsRow(t, rounds, g, loss, cx, cu, metric, used, cfg.seed))
    finally:
        pool.close()

    pick = int(rng_stream(cfg.seed, SERVER, 0, Purpose.OUTPUT_PICK).integers(cfg.steps))
    meta = {
        "config": cfg.to_dict(),
        "version": __version__,
        "sync_count": rounds,
        "initial_grad_norm_sq": g0,
        "initial_loss": loss0,
        "initial_test_metric": metric0,
        "output_t": pick + 1,
        "samples_used": sum(w.inner_draws for w in workers),
        "outer_samples_used": sum(w.outer_draws for w in workers),
    }
    trace = Trace(rows, meta, final_x=x_bars[-1].copy(), output_x=x_bars[pick].copy())
    if keep_iterates:
        trace.iterates = np.stack(x_bars)
    return trace


def run_from_metadata(meta: Mapping[str, Any], **kwargs) -> Trace:
    """Re-run a trace from its sidecar metadata."""
    return run(FederationConfig.from_dict(meta["config"]), **kwargs)
