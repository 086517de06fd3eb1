"""Theory-prescribed hyperparameters for FCSG, FCSG-M and Acc-FCSG-M.

FCSG / FCSG-M:  alpha = sqrt(N/T) / (6 S_F),  q = (T / N^3)^(1/4),
                beta (FCSG-M only) = 5 S_F alpha.
Acc-FCSG-M:     q = (T / N^2)^(1/3),  alpha = 1 / (12 q S_F),
                c = 30 S_F^2 / (b N),  beta = c alpha^2,  B = T^(1/3) / N^(2/3).

q and B round to the nearest integer with a floor of 1.  The step size is
then kept within the stepsize condition alpha <= 1/(k q S_F) of the matching
convergence theorem (k = 6 for FCSG/FCSG-M, 12 for Acc-FCSG-M).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

from .errors import InvalidArgumentError, ScheduleClampWarning

__all__ = ["ScheduleResult", "fcsg_schedule", "fcsg_m_schedule", "acc_schedule", "schedule_for"]


@dataclass(frozen=True)
class ScheduleResult:
    alpha: float
    q: int
    beta: float | None = None
    B: int | None = None
    c: float | None = None
    q_raw: float | None = None
    B_raw: float | None = None
    rule: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _check(N, T, S_F, b=1):
    if N < 1 or T < 1 or b < 1:
        raise InvalidArgumentError(f"N, T, b must be >= 1, got N={N}, T={T}, b={b}")
    if not S_F > 0:
        raise InvalidArgumentError(f"S_F must be positive, got {S_F}")


def _clamp_beta(beta: float) -> float:
    if beta > 1.0:
        warnings.warn(f"prescribed beta {beta:.4g} exceeds 1; clamped", ScheduleClampWarning, stacklevel=3)
        return 1.0
    return beta


def fcsg_schedule(N: int, T: int, S_F: float = 1.0) -> ScheduleResult:
    _check(N, T, S_F)
    q_raw = (T / N**3) ** 0.25
    if q_raw < 1:
        warnings.warn(f"T={T} < N^3={N**3} gives q={q_raw:.3g}; using q=1", ScheduleClampWarning, stacklevel=2)
        q = 1
    else:
        q = _round_half_up(q_raw)
    alpha = math.sqrt(N / T) / (6.0 * S_F)
    bound = 1.0 / (6.0 * q * S_F)
    if alpha > bound:
        warnings.warn(f"alpha {alpha:.4g} exceeds 1/(6 q S_F) = {bound:.4g}; capped", ScheduleClampWarning, stacklevel=2)
        alpha = bound
    return ScheduleResult(alpha=alpha, q=q, q_raw=q_raw, rule="fcsg")


def fcsg_m_schedule(N: int, T: int, S_F: float = 1.0) -> ScheduleResult:
    """FCSG's alpha and q with beta = 5 S_F alpha."""
    base = fcsg_schedule(N, T, S_F)
    beta = _clamp_beta(5.0 * S_F * base.alpha)
    return ScheduleResult(alpha=base.alpha, q=base.q, beta=beta, q_raw=base.q_raw, rule="fcsg-m")


def acc_schedule(N: int, T: int, b: int = 1, S_F: float = 1.0) -> ScheduleResult:
    _check(N, T, S_F, b)
    q_raw = (T / N**2) ** (1.0 / 3.0)
    q = max(1, _round_half_up(q_raw))
    alpha = 1.0 / (12.0 * q * S_F)
    c = 30.0 * S_F**2 / (b * N)
    beta = _clamp_beta(c * alpha**2)
    B_raw = T ** (1.0 / 3.0) / N ** (2.0 / 3.0)
    B = max(1, _round_half_up(B_raw))
    return ScheduleResult(alpha=alpha, q=q, beta=beta, B=B, c=c, q_raw=q_raw, B_raw=B_raw, rule="acc-fcsg-m")


def schedule_for(algorithm: str, N: int, T: int, b: int = 1, S_F: float = 1.0) -> ScheduleResult:
    """Schedule matching an algorithm tag value (``fcsg``, ``fcsg-m`` or ``acc-fcsg-m``)."""
    algorithm = getattr(algorithm, "value", algorithm)
    if algorithm == "fcsg":
        return fcsg_schedule(N, T, S_F)
    if algorithm == "fcsg-m":
        return fcsg_m_schedule(N, T, S_F)
    if algorithm == "acc-fcsg-m":
        return acc_schedule(N, T, b, S_F)
    raise InvalidArgumentError(f"unknown algorithm {algorithm!r}")
