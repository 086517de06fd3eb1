import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedcso.errors import DenominatorClampWarning, InvalidArgumentError, UnsupportedTaskError
from fedcso.objectives import (
    AuprcTask,
    InnerBatch,
    InvariantLogisticTask,
    MamlToyTask,
    OuterSample,
    QuadraticTask,
    SmoothnessConstants,
    TaskSpec,
    make_task,
)

from conftest import SMALL, central_diff, rel_err


def rng(k=0):
    return np.random.default_rng(k)


# -- value types --------------------------------------------------------------


def test_smoothness_composition_is_exact():
    c = SmoothnessConstants(S_f=0.3, S_g=2.0, L_f=1.5, L_g=0.7)
    assert c.S_F == 2.0 * 1.5 + 0.3 * 0.7**2
    assert SmoothnessConstants.from_dict(c.to_dict()) == c


def test_smoothness_rejects_negative():
    with pytest.raises(InvalidArgumentError):
        SmoothnessConstants(L_g=-1.0)


def test_taskspec_inner_dims():
    assert TaskSpec("invlogreg", 7).inner_dim == 1
    assert TaskSpec("maml-toy", 7).inner_dim == 7
    assert TaskSpec("auprc", 7).inner_dim == 2
    assert TaskSpec("quadratic", 7).inner_dim == 7
    assert TaskSpec("quadratic", 7, {"inner_dim": 3}).inner_dim == 3


def test_taskspec_rejects_unknown_kind_and_params():
    with pytest.raises(InvalidArgumentError):
        TaskSpec("mnist")
    with pytest.raises(InvalidArgumentError):
        TaskSpec("invlogreg", 5, {"sigma3": 1.0})
    with pytest.raises(InvalidArgumentError):
        TaskSpec("quadratic", 0)


def test_taskspec_roundtrip():
    spec = TaskSpec("auprc", 6, {"margin": 0.5}, SmoothnessConstants(S_f=1, L_g=2))
    assert TaskSpec.from_dict(spec.to_dict()) == spec


def test_outer_sample_payload_is_immutable_and_labels_checked():
    xi = OuterSample(0, np.array([1.0, 2.0]), label=1.0)
    with pytest.raises(ValueError):
        xi.point[0] = 5.0
    with pytest.raises(InvalidArgumentError):
        OuterSample(0, np.zeros(2), label=0.0)


def test_inner_batch_length_contract():
    batch = InnerBatch(np.zeros((3, 2)))
    assert len(batch) == 3 and batch.m == 3
    assert batch.record(1).m == 1
    with pytest.raises(InvalidArgumentError):
        InnerBatch(np.zeros((0, 2)))


# -- sampling -----------------------------------------------------------------


def test_invlogreg_label_is_sign_of_margin():
    x_star = np.eye(4)[0]
    task = InvariantLogisticTask(x_star)
    assert InvariantLogisticTask._label(np.array([2.0, 0, 0, 0]), x_star) == 1.0
    for _ in range(20):
        xi = task.sample_outer(0, rng())
        assert xi.label == (1.0 if xi.point[0] >= 0 else -1.0)


def test_quadratic_multiplier_has_unit_mean():
    task = QuadraticTask(np.eye(2), np.zeros((1, 2)), sigma1=0.5)
    r = rng(1)
    draws = np.array([task.sample_outer(0, r).point[0] for _ in range(20_000)])
    assert abs(draws.mean() - 1.0) < 4 * 0.5 / math.sqrt(draws.size)


def test_auprc_outer_sample_is_a_shard_positive():
    task = make_task(SMALL["auprc"], 2, seed=0)
    r = rng(2)
    for _ in range(30):
        xi = task.sample_outer(1, r)
        z, y = task.shards[1]
        assert xi.label == 1.0 and y[xi.index] == 1.0
        np.testing.assert_array_equal(xi.point, z[xi.index])


def test_zero_variance_inner_draws():
    task = InvariantLogisticTask(np.ones(2), sigma2=0.0)
    xi = OuterSample(0, np.array([2.0, 0.0]), label=1.0)
    batch = task.sample_inner(xi, 5, rng())
    np.testing.assert_array_equal(batch.samples, np.tile([2.0, 0.0], (5, 1)))

    theta = np.array([[1.0, -2.0, 0.5]])
    maml = MamlToyTask(theta, support_noise=0.0)
    xi = maml.sample_outer(0, rng())
    np.testing.assert_array_equal(maml.sample_inner(xi, 4, rng()).samples, np.tile(theta[0], (4, 1)))


def test_inner_batch_size(small_task):
    xi = small_task.sample_outer(0, rng())
    assert len(small_task.sample_inner(xi, 3, rng())) == 3
    with pytest.raises(InvalidArgumentError):
        small_task.sample_inner(xi, 0, rng())


def test_worker_range_checked(small_task):
    with pytest.raises(InvalidArgumentError):
        small_task.sample_outer(small_task.n_workers, rng())


# -- inner and outer maps -----------------------------------------------------


def test_invlogreg_inner_map_is_linear():
    task = InvariantLogisticTask(np.ones(2))
    xi = OuterSample(0, np.array([2.0, 0.0]), label=1.0)
    val, jac = task.inner_value_jacobian(np.array([1.0, 1.0]), xi, InnerBatch(np.array([[2.0, 0.0]])))
    assert val.shape == (1, 1) and val[0, 0] == 2.0
    np.testing.assert_array_equal(jac[0], [[2.0, 0.0]])


def test_maml_full_step_lands_on_support_point():
    task = MamlToyTask(np.zeros((1, 1)), meta_lr=1.0)
    xi = OuterSample(0, np.zeros(1), index=0)
    val, jac = task.inner_value_jacobian(np.array([5.0]), xi, InnerBatch(np.array([[3.0]])))
    assert val[0, 0] == 3.0 and jac[0, 0, 0] == 0.0


def test_auprc_hinge_clamp_active():
    # h(x; z+) = 2, h(x; z) = 0.5, margin 1 -> max(1 - 2 + 0.5, 0)^2 = 0
    z_pos, z_neg = np.array([2.0, 0.0]), np.array([0.5, 0.0])
    task = AuprcTask([(np.stack([z_pos, z_neg]), np.array([1.0, -1.0]))], margin=1.0)
    xi = OuterSample(0, z_pos, label=1.0, index=0)
    val, jac = task.inner_value_jacobian(np.array([1.0, 0.0]), xi, InnerBatch(z_neg[None], np.array([-1.0])))
    np.testing.assert_array_equal(val, [[0.0, 0.0]])
    np.testing.assert_array_equal(jac, np.zeros((1, 2, 2)))


def test_outer_values_and_gradients():
    inv = InvariantLogisticTask(np.ones(2))
    v, g = inv.outer_value_grad(np.zeros(1), OuterSample(0, np.zeros(2), label=1.0))
    assert v == pytest.approx(math.log(2.0), abs=1e-15) and g[0] == pytest.approx(-0.5)

    maml = MamlToyTask(np.zeros((1, 2)))
    a = np.array([0.3, -1.0])
    v, g = maml.outer_value_grad(a.copy(), OuterSample(0, a, index=0))
    assert v == 0.0 and not g.any()

    task = make_task(SMALL["auprc"], 1)
    xi = task.sample_outer(0, rng())
    v, g = task.outer_value_grad(np.array([0.5, 1.0]), xi)
    assert v == -0.5
    np.testing.assert_array_equal(g, [-1.0, 0.5])


def test_auprc_denominator_clamp_warns():
    task = make_task(SMALL["auprc"], 1)
    xi = task.sample_outer(0, rng())
    with pytest.warns(DenominatorClampWarning):
        v, g = task.outer_value_grad(np.array([0.0, 0.0]), xi)
    assert np.isfinite(v) and np.all(np.isfinite(g))


def test_outer_maps_match_finite_differences(small_task):
    r = rng(4)
    xi = small_task.sample_outer(0, r)
    y = np.abs(r.standard_normal(small_task.inner_dim)) + 0.5
    _, g = small_task.outer_value_grad(y, xi)
    fd = central_diff(lambda v: small_task.outer_value_grad(v, xi)[0], y)
    assert rel_err(g, fd) < 1e-6


def test_shape_mismatch_rejected(small_task):
    xi = small_task.sample_outer(0, rng())
    batch = small_task.sample_inner(xi, 2, rng())
    with pytest.raises(InvalidArgumentError):
        small_task.inner_value_jacobian(np.zeros(small_task.dim + 1), xi, batch)
    with pytest.raises(InvalidArgumentError):
        small_task.outer_value_grad(np.zeros(small_task.inner_dim + 1), xi)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(sorted(SMALL)))
def test_jacobian_columns_match_finite_differences(seed, kind):
    task = make_task(SMALL[kind], 2, heterogeneous=True, seed=1)
    r = np.random.default_rng(seed)
    x = r.standard_normal(task.dim)
    xi = task.sample_outer(int(r.integers(2)), r)
    batch = task.sample_inner(xi, 3, r)
    _, jac = task.inner_value_jacobian(x, xi, batch)
    fd = central_diff(lambda v: task.inner_value_jacobian(v, xi, batch)[0], x)
    assert fd.shape == jac.shape
    for j in range(batch.m):
        assert rel_err(jac[j], fd[j]) < 1e-5


# -- regularizer --------------------------------------------------------------


def test_regularizer_values():
    task = InvariantLogisticTask(np.ones(10), lambda_reg=0.001, gamma_reg=10.0)
    v, g = task.regularizer_value_grad(np.zeros(10))
    assert v == 0.0 and not g.any()
    v, _ = task.regularizer_value_grad(np.ones(10))
    assert v == pytest.approx(0.001 * 10 * (10 / 11), rel=1e-12)
    x = rng(5).standard_normal(10)
    fd = central_diff(lambda z: task.regularizer_value_grad(z)[0], x)
    assert rel_err(task.regularizer_value_grad(x)[1], fd) < 1e-6

    off = InvariantLogisticTask(np.ones(10), lambda_reg=0.0)
    v, g = off.regularizer_value_grad(x)
    assert v == 0.0 and not g.any() and not off.has_regularizer


# -- exact oracles ------------------------------------------------------------


def test_maml_gradient_vanishes_at_task_mean():
    theta = np.array([[0.4, -1.2, 2.0]])
    task = MamlToyTask(theta, meta_lr=0.5, support_noise=0.0, query_noise=0.0)
    assert not task.exact_gradient(theta[0].copy()).any()


def test_quadratic_half_norm_gradient():
    task = QuadraticTask(np.eye(2), np.zeros((1, 2)), sigma1=0.0, sigma2=0.0)
    x = np.array([3.0, 4.0])
    np.testing.assert_array_equal(task.exact_gradient(x), x)
    assert task.objective(x) == 12.5


def test_invlogreg_has_no_oracle():
    task = make_task(SMALL["invlogreg"], 1)
    assert not task.has_oracle
    with pytest.raises(UnsupportedTaskError):
        task.exact_gradient(np.zeros(task.dim))


@pytest.mark.parametrize("kind", ["quadratic", "maml-toy", "auprc"])
def test_exact_gradient_matches_finite_differences_of_objective(kind):
    task = make_task(SMALL[kind], 2, heterogeneous=True, seed=7)
    x = rng(6).standard_normal(task.dim)
    fd = central_diff(task.objective, x)
    assert rel_err(task.exact_gradient(x), fd) < 1e-6


def _auprc_brute_force(task, x):
    """Pair-by-pair evaluation: loop over workers, then positives, then every shard point."""
    grads, values = [], []
    for n, (z, y) in enumerate(task.shards):
        gw, vw = np.zeros(task.dim), 0.0
        for p in task.positives[n]:
            u1 = u2 = 0.0
            j1, j2 = np.zeros(task.dim), np.zeros(task.dim)
            for k in range(z.shape[0]):
                c = max(task.margin - z[p] @ x + z[k] @ x, 0.0)
                dl = 2.0 * c * (z[k] - z[p])
                u2 += c * c / z.shape[0]
                j2 += dl / z.shape[0]
                if y[k] > 0:
                    u1 += c * c / z.shape[0]
                    j1 += dl / z.shape[0]
            vw += -u1 / u2
            gw += -j1 / u2 + u1 / u2**2 * j2
        grads.append(gw / len(task.positives[n]))
        values.append(vw / len(task.positives[n]))
    return float(np.mean(values)), np.mean(grads, axis=0)


def test_auprc_oracle_matches_brute_force_on_four_points():
    z = np.array([[1.0, 0.2], [0.1, -0.3], [-0.5, 0.4], [0.8, 0.9]])
    y = np.array([1.0, -1.0, -1.0, 1.0])
    task = AuprcTask([(z, y)], margin=1.0)
    x = np.array([0.3, -0.7])
    v, g = _auprc_brute_force(task, x)
    assert task.objective(x) == pytest.approx(v, rel=1e-13)
    np.testing.assert_allclose(task.exact_gradient(x), g, rtol=1e-12)


def test_auprc_oracle_matches_brute_force_on_generated_shards():
    task = make_task(SMALL["auprc"], 2, seed=2)
    x = rng(8).standard_normal(task.dim)
    v, g = _auprc_brute_force(task, x)
    assert task.objective(x) == pytest.approx(v, rel=1e-12)
    np.testing.assert_allclose(task.exact_gradient(x), g, rtol=1e-10, atol=1e-14)


def test_auprc_objective_invariant_to_duplicating_points():
    task = make_task(SMALL["auprc"], 2, seed=2)
    doubled = AuprcTask([(np.concatenate([z, z]), np.concatenate([y, y])) for z, y in task.shards], task.margin)
    x = rng(9).standard_normal(task.dim)
    assert doubled.objective(x) == pytest.approx(task.objective(x), rel=1e-12)


def test_maml_oracle_matches_finite_differences_tightly():
    task = make_task(TaskSpec("maml-toy", 5), 3, heterogeneous=True, seed=4)
    x = rng(10).standard_normal(5)
    assert rel_err(task.exact_gradient(x), central_diff(task.objective, x)) < 1e-6
    assert np.linalg.norm(task.exact_gradient(task.minimizer())) < 1e-12


def test_quadratic_bias_formula_matches_expectation():
    # E[zeta^2] = xi^2 + sigma2^2 / m per record pair, so the bias is sigma2^2/m M^T M x
    task = make_task(TaskSpec("quadratic", 3, {"sigma2": 0.7}), 1, seed=0)
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(task.estimator_bias(x, 4), 0.49 / 4 * x)


# -- construction -------------------------------------------------------------


def test_make_task_is_deterministic_in_seed():
    a = make_task(SMALL["auprc"], 2, seed=11)
    b = make_task(SMALL["auprc"], 2, seed=11)
    c = make_task(SMALL["auprc"], 2, seed=12)
    for (za, ya), (zb, yb) in zip(a.shards, b.shards):
        np.testing.assert_array_equal(za, zb)
        np.testing.assert_array_equal(ya, yb)
    assert not np.array_equal(a.shards[0][0], c.shards[0][0])


def test_auprc_data_has_requested_imbalance():
    task = make_task(TaskSpec("auprc", 20), 4, seed=0)
    y = np.concatenate([y for _, y in task.shards])
    assert y.size == 2000 and int((y > 0).sum()) == 200
    assert all(int((s[1] > 0).sum()) == 50 for s in task.shards)
    assert int((task.eval_set[1] > 0).sum()) == 200


def test_invlogreg_eval_set_is_labelled_by_x_star():
    task = make_task(TaskSpec("invlogreg", 10, {"eval_size": 1000}), 2, seed=0)
    a, b = task.eval_set
    assert a.shape == (1000, 10)
    owner = np.arange(1000) % 2
    expect = np.where(np.einsum("ij,ij->i", a, task.x_star[owner]) >= 0, 1.0, -1.0)
    np.testing.assert_array_equal(b, expect)
    assert task.test_metric(task.x_star[0]) == 1.0
