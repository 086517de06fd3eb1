import numpy as np
import pytest

from fedcso.baselines import CrossEntropyTask
from fedcso.estimator import biased_grad_estimate
from fedcso.federation import FederationConfig, run
from fedcso.objectives import TaskSpec, make_task

from conftest import central_diff, rel_err

SPEC = TaskSpec("auprc", 5, {"n_points": 120, "eval_points": 120})


@pytest.fixture
def ce():
    return CrossEntropyTask(make_task(SPEC, 3, seed=1))


def test_exact_gradient_matches_objective(ce):
    x = np.random.default_rng(0).standard_normal(5)
    assert rel_err(ce.exact_gradient(x), central_diff(ce.objective, x)) < 1e-6


def test_estimate_is_logistic_gradient_of_one_example(ce):
    r = np.random.default_rng(1)
    x = r.standard_normal(5)
    xi = ce.sample_outer(2, r)
    z, y = ce.source.shards[2]
    np.testing.assert_array_equal(xi.point, z[xi.index])
    est = biased_grad_estimate(ce, x, xi, ce.sample_inner(xi, 1, r)).vector
    margin = xi.label * (xi.point @ x)
    np.testing.assert_allclose(est, -xi.label * xi.point / (1 + np.exp(margin)), rtol=1e-12)


def test_shares_test_set_and_runs(ce):
    x = np.ones(5)
    assert ce.test_metric(x) == ce.source.test_metric(x)
    cfg = FederationConfig(SPEC, "fcsg", n_workers=3, steps=20, local_steps=5, lr=0.1, outer_batch=4, seed=1)
    tr = run(cfg, task=ce)
    assert tr.rows[-1].loss < tr.metadata["initial_loss"]
