"""Biased conditional stochastic gradient estimator.

For one outer sample xi and an inner batch {eta_j}, the estimator is the
exact gradient of the empirical objective f_xi(1/m sum_j g_eta_j(x, xi)):

    (1/m sum_j J_j)^T  grad f_xi(1/m sum_j g_j)

It is biased for grad F with squared bias O(1/m).  Nothing in this module
draws random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .objectives import ConditionalObjective, InnerBatch, OuterSample

__all__ = [
    "GradEstimate",
    "ordered_mean",
    "empirical_inner_mean",
    "biased_grad_estimate",
    "minibatch_grad_estimate",
    "empirical_objective",
]


@dataclass(frozen=True)
class GradEstimate:
    vector: np.ndarray
    outer_batch: int
    inner_batch: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise FloatingPointError("gradient estimate has non-finite entries")


def ordered_mean(stack: np.ndarray) -> np.ndarray:
    """Mean over axis 0, accumulated row by row as an offset from row 0.

    The row order is fixed, so the result is bit-reproducible, and a
    constant stack returns its row exactly.
    """
    first = stack[0]
    if stack.shape[0] == 1:
        return first.copy()
    return first + np.add.reduce(stack[1:] - first, axis=0) / stack.shape[0]


def empirical_inner_mean(task: ConditionalObjective, x: np.ndarray, xi: OuterSample, batch: InnerBatch):
    """Mean inner value ``(d',)`` and mean Jacobian ``(d', d)`` over ``batch``."""
    if batch is None or len(batch) == 0:
        raise InvalidArgumentError("inner batch must be nonempty")
    values, jac = task.inner_value_jacobian(x, xi, batch)
    return ordered_mean(values), ordered_mean(jac)


def _conditional_grad(task, x, xi, batch) -> np.ndarray:
    gbar, jbar = empirical_inner_mean(task, x, xi, batch)
    _, dfdy = task.outer_value_grad(gbar, xi)
    return jbar.T @ dfdy


def biased_grad_estimate(task: ConditionalObjective, x: np.ndarray, xi: OuterSample, batch: InnerBatch) -> GradEstimate:
    """Chain-rule gradient of the empirical objective, plus any regularizer gradient."""
    g = _conditional_grad(task, x, xi, batch)
    if task.has_regularizer:
        g = g + task.regularizer_value_grad(x)[1]
    return GradEstimate(g, 1, len(batch))


def minibatch_grad_estimate(
    task: ConditionalObjective, x: np.ndarray, pairs: Sequence[tuple[OuterSample, InnerBatch]]
) -> GradEstimate:
    """Average of :func:`biased_grad_estimate` over ``b`` (outer, inner batch) pairs."""
    if len(pairs) == 0:
        raise InvalidArgumentError("need at least one (outer sample, inner batch) pair")
    grads = np.stack([_conditional_grad(task, x, xi, batch) for xi, batch in pairs])
    g = ordered_mean(grads)
    if task.has_regularizer:
        g = g + task.regularizer_value_grad(x)[1]
    return GradEstimate(g, len(pairs), len(pairs[0][1]))


def empirical_objective(task: ConditionalObjective, x: np.ndarray, xi: OuterSample, batch: InnerBatch) -> float:
    """f_xi(mean_j g_j(x, xi)) plus the regularizer value when the task has one."""
    gbar, _ = empirical_inner_mean(task, x, xi, batch)
    value, _ = task.outer_value_grad(gbar, xi)
    if task.has_regularizer:
        value += task.regularizer_value_grad(x)[0]
    return float(value)
