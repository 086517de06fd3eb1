"""Conditional stochastic objectives.

A federated conditional objective is

    F(x) = 1/N sum_n E_xi f^n_xi( E_{eta|xi} g^n_eta(x, xi) )

where the inner samples eta are drawn from a law that depends on the outer
sample xi.  Each task here exposes the two sampling routines, the inner map
with its Jacobian and the outer map with its gradient.  Tasks whose full
gradient is available in closed form (or by exhaustive summation) also expose
``exact_gradient``.

Four task kinds are provided:

``quadratic``
    Analytic verification task.  xi is a scalar multiplier with mean one,
    inner samples zeta ~ N(xi, sigma2^2), g = zeta * M x and
    f_xi(y) = 1/2 ||y - xi c_n||^2.  Then F(x) = (1 + sigma1^2)/2 ||Mx - c||^2
    and the biased estimator has bias exactly (sigma2^2 / m) M^T M x.
``invlogreg``
    Invariant logistic regression: g = eta^T x with eta ~ N(a, sigma2^2 I),
    logistic outer loss and a bounded nonconvex regularizer.
``maml-toy``
    One-step MAML on quadratic task losses, so the meta-gradient is analytic.
``auprc``
    Ratio-of-means surrogate of average precision with a squared-hinge
    pairwise loss on a synthetic imbalanced dataset.

Every task object is immutable after construction.  Randomness only enters
through the ``rng`` arguments.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.special import expit

from .errors import DenominatorClampWarning, InvalidArgumentError, UnsupportedTaskError
from .rng import SERVER, Purpose, rng_stream

__all__ = [
    "TASK_KINDS",
    "SmoothnessConstants",
    "TaskSpec",
    "OuterSample",
    "InnerBatch",
    "ConditionalObjective",
    "QuadraticTask",
    "InvariantLogisticTask",
    "MamlToyTask",
    "AuprcTask",
    "make_task",
    "AUPRC_EPS",
]

TASK_KINDS = ("quadratic", "invlogreg", "maml-toy", "auprc")

AUPRC_EPS = 1e-8


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SmoothnessConstants:
    """Smoothness and Lipschitz constants of one task.

    ``S_F`` is derived as ``S_g * L_f + S_f * L_g**2``, the smoothness of
    the composed objective.  The values shipped with each task are documented
    reference estimates, not certified bounds.
    """

    S_f: float = 1.0
    S_g: float = 0.0
    L_f: float = 1.0
    L_g: float = 1.0
    sigma_g: float = 0.0
    S_F: float = field(init=False)

    def __post_init__(self):
        for name in ("S_f", "S_g", "L_f", "L_g", "sigma_g"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")
        object.__setattr__(self, "S_F", self.S_g * self.L_f + self.S_f * self.L_g**2)

    def to_dict(self) -> dict:
        return {"s_f": self.S_f, "s_g": self.S_g, "l_f": self.L_f, "l_g": self.L_g, "sigma_g": self.sigma_g}

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "SmoothnessConstants":
        return cls(S_f=d["s_f"], S_g=d["s_g"], L_f=d["l_f"], L_g=d["l_g"], sigma_g=d.get("sigma_g", 0.0))


# Per-kind parameter defaults.  Keys double as the config-file contract.
DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "quadratic": {
        "inner_dim": None,  # defaults to dim
        "sigma1": 0.5,
        "sigma2": 1.0,
        "target_scale": 0.0,
        "hetero_scale": 1.0,
    },
    "invlogreg": {
        "sigma1": 1.0,
        "sigma2": 1.0,
        "lambda_reg": 0.001,
        "gamma_reg": 10.0,
        "eval_size": 50000,
        "hetero_scale": 0.5,
    },
    "maml-toy": {
        "n_tasks": 10,
        "meta_lr": 0.5,
        "support_noise": 1.0,
        "query_noise": 1.0,
        "hetero_scale": 1.0,
    },
    "auprc": {
        "n_points": 2000,
        "pos_fraction": 0.1,
        "margin": 1.0,
        "separation": 1.5,
        "eval_points": 2000,
    },
}


@dataclass(frozen=True)
class TaskSpec:
    """Declarative description of a task; turned into an object by :func:`make_task`."""

    kind: str
    dim: int = 10
    params: Mapping[str, Any] = field(default_factory=dict)
    constants: SmoothnessConstants | None = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise InvalidArgumentError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if self.dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise InvalidArgumentError(f"unknown {self.kind} parameters: {sorted(unknown)}")
        if self.inner_dim < 1:
            raise InvalidArgumentError("inner_dim must be >= 1")

    def param(self, name: str):
        return self.params.get(name, DEFAULT_PARAMS[self.kind][name])

    @property
    def inner_dim(self) -> int:
        if self.kind == "invlogreg":
            return 1
        if self.kind == "maml-toy":
            return self.dim
        if self.kind == "auprc":
            return 2
        d = self.param("inner_dim")
        return self.dim if d is None else int(d)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "params": dict(self.params)}
        if self.constants is not None:
            out["constants"] = self.constants.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TaskSpec":
        const = d.get("constants")
        return cls(
            kind=d["kind"],
            dim=int(d.get("dim", 10)),
            params=dict(d.get("params", {})),
            constants=None if const is None else SmoothnessConstants.from_dict(const),
        )


@dataclass(frozen=True)
class OuterSample:
    """One outer draw xi on a given worker.

    ``point`` is the task payload (scalar multiplier, feature vector, query
    point or positive example).  ``label`` is +1/-1 when the task has one and
    ``index`` identifies a task id or dataset row when relevant.
    """

    worker: int
    point: np.ndarray
    label: float | None = None
    index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(self.point))
        if self.label is not None and self.label not in (-1.0, 1.0):
            raise InvalidArgumentError(f"labels must be +1 or -1, got {self.label}")


@dataclass(frozen=True)
class InnerBatch:
    """m inner records drawn from P(eta | xi), stacked along axis 0."""

    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        s = _frozen(self.samples)
        if s.ndim < 1 or s.shape[0] < 1:
            raise InvalidArgumentError("an inner batch needs at least one sample")
        object.__setattr__(self, "samples", s)
        if self.labels is not None:
            lab = _frozen(self.labels)
            if lab.shape != (s.shape[0],):
                raise InvalidArgumentError("labels must have one entry per sample")
            object.__setattr__(self, "labels", lab)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.m

    def record(self, j: int) -> "InnerBatch":
        """The j-th record as a batch of one."""
        return InnerBatch(self.samples[j : j + 1], None if self.labels is None else self.labels[j : j + 1])


class ConditionalObjective(ABC):
    """Base class for a federated conditional stochastic objective."""

    kind: str = ""

    def __init__(self, dim: int, inner_dim: int, n_workers: int, constants: SmoothnessConstants):
        if n_workers < 1:
            raise InvalidArgumentError("n_workers must be >= 1")
        self.dim = int(dim)
        self.inner_dim = int(inner_dim)
        self.n_workers = int(n_workers)
        self.constants = constants

    # sampling ---------------------------------------------------------------

    @abstractmethod
    def sample_outer(self, worker: int, rng: np.random.Generator) -> OuterSample: ...

    def sample_inner(self, xi: OuterSample, m: int, rng: np.random.Generator) -> InnerBatch:
        if m < 1:
            raise InvalidArgumentError(f"inner batch size must be >= 1, got {m}")
        return self._draw_inner(xi, int(m), rng)

    @abstractmethod
    def _draw_inner(self, xi: OuterSample, m: int, rng: np.random.Generator) -> InnerBatch: ...

    # maps -------------------------------------------------------------------

    @abstractmethod
    def inner_value_jacobian(self, x: np.ndarray, xi: OuterSample, batch: InnerBatch) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(m, d')`` and Jacobians ``(m, d', d)`` of g for every record in ``batch``."""

    @abstractmethod
    def outer_value_grad(self, y: np.ndarray, xi: OuterSample) -> tuple[float, np.ndarray]: ...

    def regularizer_value_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Deterministic additive term of the objective; zero unless a task defines one."""
        self._check_x(x)
        return 0.0, np.zeros(self.dim)

    @property
    def has_regularizer(self) -> bool:
        return False

    # oracles ----------------------------------------------------------------

    @property
    def has_oracle(self) -> bool:
        return False

    def exact_gradient(self, x: np.ndarray) -> np.ndarray:
        raise UnsupportedTaskError(f"{self.kind} has no exact gradient oracle")

    def objective(self, x: np.ndarray) -> float:
        raise UnsupportedTaskError(f"{self.kind} has no exact objective")

    def inner_mean_record(self, xi: OuterSample) -> InnerBatch:
        """A one-record batch whose value and Jacobian equal the conditional means.

        Only defined for tasks where g is affine in eta.
        """
        raise UnsupportedTaskError(f"{self.kind} has no conditional-mean record")

    def loss(self, x: np.ndarray) -> float:
        return self.objective(x)

    def test_metric(self, x: np.ndarray) -> float:
        return math.nan

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)

    # helpers ----------------------------------------------------------------

    def _check_x(self, x: np.ndarray) -> None:
        if np.shape(x) != (self.dim,):
            raise InvalidArgumentError(f"x must have shape ({self.dim},), got {np.shape(x)}")

    def _check_y(self, y: np.ndarray) -> None:
        if np.shape(y) != (self.inner_dim,):
            raise InvalidArgumentError(f"y must have shape ({self.inner_dim},), got {np.shape(y)}")

    def _check_worker(self, worker: int) -> None:
        if not 0 <= worker < self.n_workers:
            raise InvalidArgumentError(f"worker {worker} out of range for {self.n_workers} workers")


class QuadraticTask(ConditionalObjective):
    """Analytic task with closed-form gradient and closed-form estimator bias.

    Parameters
    ----------
    matrix : (d', d) array
        Linear map M inside the inner function.
    targets : (N, d') array
        Per-worker target c_n (identical rows unless heterogeneous).
    sigma1, sigma2 : float
        Standard deviations of the outer multiplier and of the inner draws.
    """

    kind = "quadratic"

    def __init__(self, matrix, targets, sigma1: float = 0.5, sigma2: float = 1.0, constants=None):
        matrix = _frozen(matrix)
        targets = _frozen(np.atleast_2d(targets))
        if matrix.ndim != 2 or targets.shape[1] != matrix.shape[0]:
            raise InvalidArgumentError("targets must have one row of length d' per worker")
        if constants is None:
            norm = float(np.linalg.norm(matrix, 2))
            constants = SmoothnessConstants(
                S_f=1.0, S_g=0.0, L_f=1.0, L_g=math.sqrt(1 + sigma1**2 + sigma2**2) * norm, sigma_g=sigma2 * norm
            )
        super().__init__(matrix.shape[1], matrix.shape[0], targets.shape[0], constants)
        self.matrix = matrix
        self.targets = targets
        self.sigma1 = float(sigma1)
        self.sigma2 = float(sigma2)

    def sample_outer(self, worker, rng):
        self._check_worker(worker)
        return OuterSample(worker, np.array([1.0 + self.sigma1 * rng.standard_normal()]))

    def _draw_inner(self, xi, m, rng):
        return InnerBatch(xi.point[0] + self.sigma2 * rng.standard_normal((m, 1)))

    def inner_value_jacobian(self, x, xi, batch):
        self._check_x(x)
        zeta = batch.samples[:, 0]
        values = zeta[:, None] * (self.matrix @ x)[None, :]
        jac = zeta[:, None, None] * self.matrix[None, :, :]
        return values, jac

    def outer_value_grad(self, y, xi):
        self._check_y(y)
        r = y - xi.point[0] * self.targets[xi.worker]
        return 0.5 * float(r @ r), r

    @property
    def has_oracle(self):
        return True

    def exact_gradient(self, x):
        self._check_x(x)
        scale = 1.0 + self.sigma1**2
        mx = self.matrix @ x
        g = np.zeros(self.dim)
        for c in self.targets:
            g += scale * (self.matrix.T @ (mx - c))
        return g / self.n_workers

    def objective(self, x):
        self._check_x(x)
        r = (self.matrix @ x)[None, :] - self.targets
        return float(0.5 * (1.0 + self.sigma1**2) * np.mean(np.sum(r * r, axis=1)))

    def estimator_bias(self, x, m: int) -> np.ndarray:
        """Closed-form E[estimate] - grad F at x for inner batch size m."""
        return (self.sigma2**2 / m) * (self.matrix.T @ (self.matrix @ x))

    def inner_mean_record(self, xi):
        return InnerBatch(np.array([[xi.point[0]]]))


class InvariantLogisticTask(ConditionalObjective):
    """Invariant logistic regression with a nonconvex regularizer.

    Outer sample xi = (a, b) with a ~ N(0, sigma1^2 I) and b = sign(a^T x*_n);
    inner samples eta ~ N(a, sigma2^2 I); g = eta^T x; f = log(1 + exp(-b y)).
    The regularizer lambda * sum gamma x_i^2 / (1 + gamma x_i^2) is kept out of
    f and added by the estimator.
    """

    kind = "invlogreg"

    def __init__(
        self,
        x_star,
        sigma1: float = 1.0,
        sigma2: float = 1.0,
        lambda_reg: float = 0.001,
        gamma_reg: float = 10.0,
        eval_set: tuple[np.ndarray, np.ndarray] | None = None,
        constants=None,
    ):
        x_star = _frozen(np.atleast_2d(x_star))
        d = x_star.shape[1]
        if constants is None:
            constants = SmoothnessConstants(
                S_f=0.25, S_g=0.0, L_f=1.0, L_g=math.sqrt(d * (sigma1**2 + sigma2**2)), sigma_g=sigma2
            )
        super().__init__(d, 1, x_star.shape[0], constants)
        self.x_star = x_star
        self.sigma1 = float(sigma1)
        self.sigma2 = float(sigma2)
        self.lambda_reg = float(lambda_reg)
        self.gamma_reg = float(gamma_reg)
        if eval_set is not None:
            eval_set = (_frozen(eval_set[0]), _frozen(eval_set[1]))
        self.eval_set = eval_set

    @staticmethod
    def _label(a: np.ndarray, x_star: np.ndarray):
        return np.where(a @ x_star >= 0, 1.0, -1.0)

    def sample_outer(self, worker, rng):
        self._check_worker(worker)
        a = self.sigma1 * rng.standard_normal(self.dim)
        return OuterSample(worker, a, label=float(self._label(a, self.x_star[worker])))

    def _draw_inner(self, xi, m, rng):
        return InnerBatch(xi.point[None, :] + self.sigma2 * rng.standard_normal((m, self.dim)))

    def inner_value_jacobian(self, x, xi, batch):
        self._check_x(x)
        eta = batch.samples
        return (eta @ x)[:, None], eta[:, None, :]

    def outer_value_grad(self, y, xi):
        self._check_y(y)
        z = -xi.label * y[0]
        return float(np.logaddexp(0.0, z)), np.array([-xi.label * expit(z)])

    @property
    def has_regularizer(self):
        return self.lambda_reg != 0.0

    def regularizer_value_grad(self, x):
        self._check_x(x)
        lam, gam = self.lambda_reg, self.gamma_reg
        gx2 = gam * x * x
        value = lam * float(np.sum(gx2 / (1.0 + gx2)))
        grad = lam * 2.0 * gam * x / (1.0 + gx2) ** 2
        return value, grad

    def inner_mean_record(self, xi):
        return InnerBatch(xi.point[None, :])

    def monte_carlo_gradient(self, x, n_outer: int, m: int, rng) -> np.ndarray:
        """Monte-Carlo estimate of grad F from n_outer outer and m inner draws each.

        g is linear in eta, so the estimator depends on the inner batch only
        through its mean, which is drawn directly from its exact law
        N(a, sigma2^2 / m I).
        """
        self._check_x(x)
        workers = np.arange(n_outer) % self.n_workers
        a = self.sigma1 * rng.standard_normal((n_outer, self.dim))
        b = np.where(np.einsum("ij,ij->i", a, self.x_star[workers]) >= 0, 1.0, -1.0)
        eta_bar = a + (self.sigma2 / math.sqrt(m)) * rng.standard_normal((n_outer, self.dim))
        dfdy = -b * expit(-b * (eta_bar @ x))
        grad = (dfdy[:, None] * eta_bar).mean(axis=0)
        return grad + self.regularizer_value_grad(x)[1]

    def loss(self, x):
        """Objective on the held-out outer samples (inner mean a^T x is exact)."""
        a, b = self._require_eval()
        return float(np.mean(np.logaddexp(0.0, -b * (a @ x)))) + self.regularizer_value_grad(x)[0]

    def test_metric(self, x):
        a, b = self._require_eval()
        return float(np.mean(np.where(a @ x >= 0, 1.0, -1.0) == b))

    def _require_eval(self):
        if self.eval_set is None:
            raise UnsupportedTaskError("task was built without a held-out evaluation set")
        return self.eval_set


class MamlToyTask(ConditionalObjective):
    """One-step MAML on quadratic losses L_i(x; p) = 1/2 ||x - p||^2.

    Outer sample xi = (task i, query point a ~ N(theta_i, query_noise^2 I)),
    inner samples are support points b ~ N(theta_i, support_noise^2 I),
    g = x - meta_lr * (x - b) and f_xi(y) = 1/2 ||y - a||^2.  With these
    choices grad F^n(x) = (1 - meta_lr)^2 (x - mean_i theta_i).
    """

    kind = "maml-toy"

    def __init__(self, task_means, meta_lr: float = 0.5, support_noise: float = 1.0, query_noise: float = 1.0, constants=None):
        task_means = _frozen(task_means)
        if task_means.ndim == 2:
            task_means = _frozen(task_means[None])
        if task_means.ndim != 3:
            raise InvalidArgumentError("task_means must be (n_tasks, d) or (N, n_tasks, d)")
        if constants is None:
            constants = SmoothnessConstants(S_f=1.0, S_g=0.0, L_f=1.0, L_g=abs(1.0 - meta_lr), sigma_g=meta_lr * support_noise)
        d = task_means.shape[2]
        super().__init__(d, d, task_means.shape[0], constants)
        self.task_means = task_means
        self.meta_lr = float(meta_lr)
        self.support_noise = float(support_noise)
        self.query_noise = float(query_noise)

    def sample_outer(self, worker, rng):
        self._check_worker(worker)
        i = int(rng.integers(self.task_means.shape[1]))
        theta = self.task_means[worker, i]
        return OuterSample(worker, theta + self.query_noise * rng.standard_normal(self.dim), index=i)

    def _draw_inner(self, xi, m, rng):
        theta = self.task_means[xi.worker, xi.index]
        return InnerBatch(theta[None, :] + self.support_noise * rng.standard_normal((m, self.dim)))

    def inner_value_jacobian(self, x, xi, batch):
        self._check_x(x)
        values = x[None, :] - self.meta_lr * (x[None, :] - batch.samples)
        jac = np.broadcast_to((1.0 - self.meta_lr) * np.eye(self.dim), (batch.m, self.dim, self.dim))
        return values, jac

    def outer_value_grad(self, y, xi):
        self._check_y(y)
        r = y - xi.point
        return 0.5 * float(r @ r), r

    @property
    def has_oracle(self):
        return True

    def minimizer(self) -> np.ndarray:
        return self.task_means.mean(axis=(0, 1))

    def exact_gradient(self, x):
        self._check_x(x)
        k = (1.0 - self.meta_lr) ** 2
        return k * (x - self.minimizer())

    def objective(self, x):
        self._check_x(x)
        r = x[None, None, :] - self.task_means
        k = (1.0 - self.meta_lr) ** 2
        return float(0.5 * k * np.mean(np.sum(r * r, axis=2)) + 0.5 * self.dim * self.query_noise**2)

    def inner_mean_record(self, xi):
        return InnerBatch(self.task_means[xi.worker, xi.index][None, :])


class AuprcTask(ConditionalObjective):
    """Average-precision surrogate on a finite, per-worker dataset.

    Outer samples are positives z+ of the worker shard; inner samples are
    points (z, y) drawn uniformly from the whole shard.  With the squared
    hinge l = max(s - x^T z+ + x^T z, 0)^2 the inner map is
    g = (1[y = 1] l, l) and f(u) = -u_1 / u_2 is minimised.
    """

    kind = "auprc"

    def __init__(self, shards, margin: float = 1.0, eval_set=None, constants=None):
        if not shards:
            raise InvalidArgumentError("need at least one worker shard")
        frozen = []
        for z, y in shards:
            z, y = _frozen(z), _frozen(y)
            if z.ndim != 2 or y.shape != (z.shape[0],):
                raise InvalidArgumentError("each shard is (features (n, d), labels (n,))")
            if not np.all(np.isin(y, (-1.0, 1.0))):
                raise InvalidArgumentError("labels must be +1 or -1")
            if not np.any(y > 0):
                raise InvalidArgumentError("every shard needs at least one positive example")
            frozen.append((z, y))
        d = frozen[0][0].shape[1]
        if constants is None:
            radius = max(float(np.max(np.linalg.norm(z, axis=1))) for z, _ in frozen)
            constants = SmoothnessConstants(S_f=2.0, S_g=8.0 * radius**2, L_f=1.0, L_g=4.0 * radius, sigma_g=1.0)
        super().__init__(d, 2, len(frozen), constants)
        self.shards = tuple(frozen)
        self.positives = tuple(np.flatnonzero(y > 0) for _, y in frozen)
        self.margin = float(margin)
        if eval_set is not None:
            eval_set = (_frozen(eval_set[0]), _frozen(eval_set[1]))
        self.eval_set = eval_set

    def sample_outer(self, worker, rng):
        self._check_worker(worker)
        pos = self.positives[worker]
        i = int(pos[rng.integers(len(pos))])
        return OuterSample(worker, self.shards[worker][0][i], label=1.0, index=i)

    def _draw_inner(self, xi, m, rng):
        z, y = self.shards[xi.worker]
        idx = rng.integers(z.shape[0], size=m)
        return InnerBatch(z[idx], y[idx])

    def inner_value_jacobian(self, x, xi, batch):
        self._check_x(x)
        z = batch.samples
        clamp = np.maximum(self.margin - xi.point @ x + z @ x, 0.0)
        ell = clamp * clamp
        dell = (2.0 * clamp)[:, None] * (z - xi.point[None, :])
        pos = (batch.labels > 0).astype(np.float64)
        values = np.stack([pos * ell, ell], axis=1)
        jac = np.stack([pos[:, None] * dell, dell], axis=1)
        return values, jac

    def outer_value_grad(self, y, xi):
        self._check_y(y)
        u1, u2 = float(y[0]), float(y[1])
        if u2 <= AUPRC_EPS:
            warnings.warn(f"AP surrogate denominator {u2:.3g} clamped to {AUPRC_EPS}", DenominatorClampWarning, stacklevel=2)
            return -u1 / AUPRC_EPS, np.array([-1.0 / AUPRC_EPS, 0.0])
        return -u1 / u2, np.array([-1.0 / u2, u1 / (u2 * u2)])

    @property
    def has_oracle(self):
        return True

    def _worker_terms(self, x, worker):
        """Per-positive (u1, u2, J1, J2) means over the whole shard."""
        z, y = self.shards[worker]
        h = z @ x
        pos = self.positives[worker]
        c = np.maximum(self.margin - h[pos][:, None] + h[None, :], 0.0)  # (P, n)
        ell = c * c
        ind = (y > 0).astype(np.float64)
        n = z.shape[0]
        u1 = (ell * ind).sum(axis=1) / n
        u2 = ell.sum(axis=1) / n
        # d ell_pz / dx = 2 c_pz (z - z_p)
        w2 = 2.0 * c
        w1 = w2 * ind
        j1 = (w1 @ z - w1.sum(axis=1)[:, None] * z[pos]) / n
        j2 = (w2 @ z - w2.sum(axis=1)[:, None] * z[pos]) / n
        return u1, u2, j1, j2

    def exact_gradient(self, x):
        self._check_x(x)
        total = np.zeros(self.dim)
        for n in range(self.n_workers):
            u1, u2, j1, j2 = self._worker_terms(x, n)
            den = np.maximum(u2, AUPRC_EPS)
            d2 = np.where(u2 > AUPRC_EPS, u1 / (den * den), 0.0)
            grads = -j1 / den[:, None] + d2[:, None] * j2
            total += grads.mean(axis=0)
        return total / self.n_workers

    def objective(self, x):
        self._check_x(x)
        total = 0.0
        for n in range(self.n_workers):
            u1, u2, _, _ = self._worker_terms(x, n)
            total += float(np.mean(-u1 / np.maximum(u2, AUPRC_EPS)))
        return total / self.n_workers

    def test_metric(self, x):
        from .metrics import average_precision

        if self.eval_set is None:
            raise UnsupportedTaskError("task was built without a held-out evaluation set")
        z, y = self.eval_set
        return average_precision(z @ x, y)

    def initial_point(self, rng):
        return 0.1 * rng.standard_normal(self.dim)


def synthetic_imbalanced(n_points: int, direction: np.ndarray, pos_fraction: float, separation: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian two-class data with a fixed positive fraction.

    Positives are centred at ``separation * direction``, negatives at the
    origin; both have identity covariance.  Labels are +1/-1.
    """
    dim = direction.shape[0]
    n_pos = max(1, int(round(pos_fraction * n_points)))
    z = rng.standard_normal((n_points, dim))
    y = -np.ones(n_points)
    y[:n_pos] = 1.0
    z[:n_pos] += separation * direction
    perm = rng.permutation(n_points)
    return z[perm], y[perm]


def _stratified_shards(z, y, n_workers, rng, heterogeneous: bool):
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y <= 0)
    if len(pos) < n_workers:
        raise InvalidArgumentError(f"{len(pos)} positives cannot cover {n_workers} workers")
    pos = rng.permutation(pos)
    if heterogeneous:
        # contiguous split along the first feature skews each shard's negatives
        neg = neg[np.argsort(z[neg, 0], kind="stable")]
    else:
        neg = rng.permutation(neg)
    shards = []
    for p, q in zip(np.array_split(pos, n_workers), np.array_split(neg, n_workers)):
        idx = np.sort(np.concatenate([p, q]))
        shards.append((z[idx], y[idx]))
    return shards


def make_task(spec: TaskSpec, n_workers: int = 1, heterogeneous: bool = False, seed: int = 0) -> ConditionalObjective:
    """Build a task object, generating its random constituents from ``seed``."""
    if n_workers < 1:
        raise InvalidArgumentError("n_workers must be >= 1")
    rng = rng_stream(seed, SERVER, 0, Purpose.TASK)
    d, p = spec.dim, spec.param
    if spec.kind == "quadratic":
        dp = spec.inner_dim
        matrix = np.eye(d) if dp == d else rng.standard_normal((dp, d)) / math.sqrt(d)
        base = p("target_scale") * rng.standard_normal(dp)
        if heterogeneous:
            targets = base[None, :] + p("hetero_scale") * rng.standard_normal((n_workers, dp))
        else:
            targets = np.tile(base, (n_workers, 1))
        return QuadraticTask(matrix, targets, p("sigma1"), p("sigma2"), spec.constants)
    if spec.kind == "invlogreg":
        x_star = np.ones(d) / math.sqrt(d)
        if heterogeneous:
            stars = x_star[None, :] + p("hetero_scale") * rng.standard_normal((n_workers, d))
        else:
            stars = np.tile(x_star, (n_workers, 1))
        eval_set = None
        size = int(p("eval_size"))
        if size > 0:
            a = p("sigma1") * rng.standard_normal((size, d))
            owner = np.arange(size) % n_workers
            b = np.where(np.einsum("ij,ij->i", a, stars[owner]) >= 0, 1.0, -1.0)
            eval_set = (a, b)
        return InvariantLogisticTask(stars, p("sigma1"), p("sigma2"), p("lambda_reg"), p("gamma_reg"), eval_set, spec.constants)
    if spec.kind == "maml-toy":
        k = int(p("n_tasks"))
        if heterogeneous:
            shift = p("hetero_scale") * rng.standard_normal((n_workers, 1, d))
            means = rng.standard_normal((n_workers, k, d)) + shift
        else:
            means = np.tile(rng.standard_normal((k, d)), (n_workers, 1, 1))
        return MamlToyTask(means, p("meta_lr"), p("support_noise"), p("query_noise"), spec.constants)
    # auprc
    frac, sep = float(p("pos_fraction")), float(p("separation"))
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    z, y = synthetic_imbalanced(int(p("n_points")), direction, frac, sep, rng)
    shards = _stratified_shards(z, y, n_workers, rng, heterogeneous)
    eval_set = None
    if int(p("eval_points")) > 0:
        eval_rng = rng_stream(seed, SERVER, 1, Purpose.TASK)
        eval_set = synthetic_imbalanced(int(p("eval_points")), direction, frac, sep, eval_rng)
    return AuprcTask(shards, p("margin"), eval_set, spec.constants)
