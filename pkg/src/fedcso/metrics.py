"""Metrics, traces and their on-disk format.

A trace is a CSV with the header

    t,round,grad_norm_sq,loss,consensus_x,consensus_u,test_metric,samples_used,seed

(floats written with 17 significant digits, NaN as ``nan``) plus a sidecar
``<path>.meta.json`` holding everything needed to re-run it.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .estimator import ordered_mean
from .objectives import ConditionalObjective
from .rng import SERVER, Purpose, rng_stream

__all__ = [
    "MetricsRow",
    "Trace",
    "TRACE_HEADER",
    "grad_norm_metric",
    "monte_carlo_gradient",
    "average_precision",
    "consensus_error",
    "bias_study",
    "write_trace",
    "read_trace",
]

TRACE_HEADER = ("t", "round", "grad_norm_sq", "loss", "consensus_x", "consensus_u", "test_metric", "samples_used", "seed")
_INT_FIELDS = {"t", "round", "samples_used", "seed"}

MC_OUTER = 10_000
MC_INNER = 10_000


@dataclass(frozen=True)
class MetricsRow:
    t: int
    round: int
    grad_norm_sq: float
    loss: float
    consensus_x: float
    consensus_u: float
    test_metric: float
    samples_used: int
    seed: int


@dataclass
class Trace:
    rows: list[MetricsRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    final_x: np.ndarray | None = None
    output_x: np.ndarray | None = None
    iterates: np.ndarray | None = field(default=None, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def monte_carlo_gradient(task: ConditionalObjective, x: np.ndarray, n_outer: int, m: int, rng) -> np.ndarray:
    """Generic Monte-Carlo estimate of grad F: mean of n_outer biased estimates with m inner draws each."""
    from .estimator import minibatch_grad_estimate

    pairs = []
    for k in range(n_outer):
        xi = task.sample_outer(k % task.n_workers, rng)
        pairs.append((xi, task.sample_inner(xi, m, rng)))
    return minibatch_grad_estimate(task, x, pairs).vector


def grad_norm_metric(
    task: ConditionalObjective, x_bar: np.ndarray, seed: int = 0, t: int = 0, n_outer: int = MC_OUTER, m: int = MC_INNER
) -> float:
    """||grad F(x_bar)||^2, exact when the task has an oracle.

    Otherwise a Monte-Carlo estimate from an evaluation stream that is
    disjoint from every training stream.
    """
    if task.has_oracle:
        g = task.exact_gradient(x_bar)
    else:
        rng = rng_stream(seed, SERVER, t, Purpose.EVAL)
        fast = getattr(task, "monte_carlo_gradient", None)
        g = fast(x_bar, n_outer, m, rng) if fast is not None else monte_carlo_gradient(task, x_bar, n_outer, m, rng)
    return float(g @ g)


def average_precision(scores: Sequence[float], labels: Sequence) -> float:
    """Average precision of a ranking by descending score.

    Positives are labels > 0 (so +1/-1 and 1/0 both work).  Ties keep input
    order.  Raises if there is no positive.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels, dtype=np.float64) > 0
    if scores.shape != pos.shape:
        raise InvalidArgumentError("scores and labels must have the same length")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise InvalidArgumentError("average precision needs at least one positive label")
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return float(precision.mean())


def consensus_error(vectors: Sequence[np.ndarray], center: np.ndarray) -> float:
    """(1/N) sum_n ||v_n - center||^2."""
    return float(sum(float((v - center) @ (v - center)) for v in vectors) / len(vectors))


def bias_study(task: ConditionalObjective, x: np.ndarray, m_list: Sequence[int], trials: int, seed: int = 0) -> list[tuple[int, float]]:
    """Monte-Carlo squared bias ||E[estimate] - grad F(x)||^2 for each m.

    Each trial's estimate is paired with the exact conditional gradient for
    the same outer sample, which has the same expectation as grad F but
    cancels most of the outer-sampling noise.  Needs a task whose inner map
    is affine in eta (``inner_mean_record``).
    """
    from .estimator import _conditional_grad

    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    out = []
    for m in m_list:
        if m < 1:
            raise InvalidArgumentError(f"m must be >= 1, got {m}")
        rng = rng_stream(seed, SERVER, int(m), Purpose.EVAL)
        diffs = np.empty((trials, task.dim))
        for k in range(trials):
            xi = task.sample_outer(k % task.n_workers, rng)
            batch = task.sample_inner(xi, m, rng)
            diffs[k] = _conditional_grad(task, x, xi, batch) - _conditional_grad(task, x, xi, task.inner_mean_record(xi))
        mean = ordered_mean(diffs)
        out.append((int(m), float(mean @ mean)))
    return out


def _fmt(name: str, value) -> str:
    if name in _INT_FIELDS:
        return str(int(value))
    return format(float(value), ".17g")


def write_trace(trace: Trace, path) -> None:
    """Write the CSV at ``path`` and its metadata at ``path + '.meta.json'``.

    Both files are written to temporaries and renamed, CSV first, so a
    present sidecar marks a complete trace.
    """
    path = Path(path)
    meta_path = Path(str(path) + ".meta.json")
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in trace.rows:
                w.writerow([_fmt(k, getattr(row, k)) for k in TRACE_HEADER])
        os.replace(tmp, path)
        meta = dict(trace.metadata)
        if trace.final_x is not None:
            meta["final_x"] = [float(v) for v in trace.final_x]
        if trace.output_x is not None:
            meta["output_x"] = [float(v) for v in trace.output_x]
        tmp_meta = meta_path.with_name(meta_path.name + ".tmp")
        with open(tmp_meta, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        os.replace(tmp_meta, meta_path)
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_trace(path) -> Trace:
    """Inverse of :func:`write_trace`."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != TRACE_HEADER:
                raise InvalidArgumentError(f"{path}: unexpected header {header}")
            rows = []
            for rec in reader:
                vals = {k: (int(v) if k in _INT_FIELDS else float(v)) for k, v in zip(header, rec)}
                rows.append(MetricsRow(**vals))
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    except OSError as exc:
        raise OSError(f"cannot read trace {path}: {exc}") from exc
    final_x = meta.pop("final_x", None)
    output_x = meta.pop("output_x", None)
    return Trace(
        rows,
        meta,
        None if final_x is None else np.array(final_x),
        None if output_x is None else np.array(output_x),
    )

