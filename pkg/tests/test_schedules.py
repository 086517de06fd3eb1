import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedcso.errors import InvalidArgumentError, ScheduleClampWarning
from fedcso.schedules import _clamp_beta, acc_schedule, fcsg_m_schedule, fcsg_schedule, schedule_for


def test_fcsg_reference_point():
    s = fcsg_schedule(16, 65536, 1.0)
    assert s.q == 2
    assert s.alpha == pytest.approx(1 / 384, rel=1e-15)


def test_fcsg_unit_case():
    s = fcsg_schedule(1, 1, 1.0)
    assert s.q == 1 and s.alpha == pytest.approx(1 / 6)


def test_fcsg_single_worker_q():
    assert fcsg_schedule(1, 10_000).q == 10


def test_fcsg_small_T_clamps_q_with_warning():
    with pytest.warns(ScheduleClampWarning):
        s = fcsg_schedule(8, 100)
    assert s.q == 1


def test_fcsg_m_beta():
    s = fcsg_m_schedule(16, 65536, 1.0)
    assert s.beta == pytest.approx(5 / 384) and s.q == 2


def test_beta_never_needs_clamping_and_clamp_warns():
    # 5 S_F alpha <= 5/6 and c alpha^2 <= 30/144 whatever the inputs
    assert fcsg_m_schedule(1, 1, 1.0).beta == pytest.approx(5 / 6)
    with pytest.warns(ScheduleClampWarning):
        assert _clamp_beta(1.5) == 1.0


def test_acc_reference_point():
    s = acc_schedule(2, 2048, 1, 1.0)
    assert (s.q, s.B) == (8, 8)
    assert s.alpha == pytest.approx(1 / 96, rel=1e-15)
    assert s.c == 15.0
    assert s.beta == pytest.approx(15 / 9216, rel=1e-14)


def test_acc_unit_case():
    s = acc_schedule(1, 1, 1, 1.0)
    assert (s.q, s.B) == (1, 1)
    assert s.alpha == pytest.approx(1 / 12) and s.c == 30.0
    assert s.beta == pytest.approx(30 / 144)


def test_alpha_inverse_in_smoothness():
    a, b = acc_schedule(4, 5000, 1, 1.0), acc_schedule(4, 5000, 1, 2.0)
    assert a.q == b.q and b.alpha == pytest.approx(a.alpha / 2)


def test_bad_inputs():
    with pytest.raises(InvalidArgumentError):
        fcsg_schedule(0, 10)
    with pytest.raises(InvalidArgumentError):
        acc_schedule(1, 10, 1, 0.0)
    with pytest.raises(InvalidArgumentError):
        schedule_for("sgd", 1, 10)


def test_dispatch():
    assert schedule_for("acc-fcsg-m", 2, 2048) == acc_schedule(2, 2048)
    assert schedule_for("fcsg-m", 2, 2048) == fcsg_m_schedule(2, 2048)


@settings(max_examples=200, deadline=None)
@given(N=st.integers(1, 64), T=st.integers(1, 10**7), S_F=st.floats(0.01, 100), b=st.integers(1, 16))
def test_schedule_invariants(N, T, S_F, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScheduleClampWarning)
        f = fcsg_m_schedule(N, T, S_F)
        a = acc_schedule(N, T, b, S_F)
    assert f.q >= 1 and a.q >= 1 and a.B >= 1
    assert 0 < f.alpha <= 1 / (6 * f.q * S_F) * (1 + 1e-12)
    assert 0 < a.alpha <= 1 / (12 * a.q * S_F) * (1 + 1e-12)
    assert 0 < f.beta <= 1 and 0 < a.beta <= 1
    assert f.q == max(1, math.floor((T / N**3) ** 0.25 + 0.5))
