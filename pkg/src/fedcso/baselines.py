"""Cross-entropy reference task for the AUPRC comparison.

Logistic loss is an ordinary single-level objective, which is the special
case g(x, xi) = x of a conditional objective.  Running FCSG on it is plain
local SGD with periodic model averaging (FedAvg).
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .objectives import AuprcTask, ConditionalObjective, InnerBatch, OuterSample

__all__ = ["CrossEntropyTask"]


class CrossEntropyTask(ConditionalObjective):
    """Logistic loss on the shards of an :class:`AuprcTask`, same data and test set."""

    kind = "cross-entropy"

    def __init__(self, source: AuprcTask):
        super().__init__(source.dim, source.dim, source.n_workers, source.constants)
        self.source = source
        self._identity = np.eye(source.dim)
        self._identity.setflags(write=False)

    def sample_outer(self, worker, rng):
        self._check_worker(worker)
        z, y = self.source.shards[worker]
        i = int(rng.integers(z.shape[0]))
        return OuterSample(worker, z[i], label=float(y[i]), index=i)

    def _draw_inner(self, xi, m, rng):
        # identity inner map: the records carry no information
        return InnerBatch(np.zeros((m, 1)))

    def inner_value_jacobian(self, x, xi, batch):
        self._check_x(x)
        m = batch.m
        return np.broadcast_to(x, (m, self.dim)), np.broadcast_to(self._identity, (m, self.dim, self.dim))

    def outer_value_grad(self, y, xi):
        self._check_y(y)
        margin = xi.label * float(xi.point @ y)
        return float(np.logaddexp(0.0, -margin)), -xi.label * expit(-margin) * xi.point

    @property
    def has_oracle(self):
        return True

    def exact_gradient(self, x):
        total = np.zeros(self.dim)
        for z, y in self.source.shards:
            w = -y * expit(-y * (z @ x))
            total += (w[:, None] * z).mean(axis=0)
        return total / self.n_workers

    def objective(self, x):
        return float(np.mean([np.mean(np.logaddexp(0.0, -y * (z @ x))) for z, y in self.source.shards]))

    def test_metric(self, x):
        return self.source.test_metric(x)

    def initial_point(self, rng):
        return self.source.initial_point(rng)
