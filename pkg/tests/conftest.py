import numpy as np
import pytest

from fedcso.objectives import TaskSpec, make_task


def central_diff(fn, x, rel_step=1e-6):
    """Central differences of a scalar or vector function, one column per coordinate."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


SMALL = {
    "quadratic": TaskSpec("quadratic", 4, {"inner_dim": 3, "target_scale": 1.0}),
    "invlogreg": TaskSpec("invlogreg", 4, {"eval_size": 500}),
    "maml-toy": TaskSpec("maml-toy", 4, {"n_tasks": 3}),
    "auprc": TaskSpec("auprc", 4, {"n_points": 60, "eval_points": 60}),
}


@pytest.fixture(params=sorted(SMALL))
def small_task(request):
    return make_task(SMALL[request.param], n_workers=2, heterogeneous=True, seed=3)


# Every federated run made anywhere in the suite is checked for exact
# consensus at its sync rows.
SYNC_AUDIT = {"runs": 0, "rows": 0}


def _audited(run):
    def wrapper(config, *args, **kwargs):
        trace = run(config, *args, **kwargs)
        q = config.local_steps
        for row in trace.rows:
            if row.t % q == 0:
                assert row.consensus_x == 0.0, f"consensus_x={row.consensus_x} at sync step {row.t}"
                if config.algorithm.averages_estimator:
                    assert row.consensus_u == 0.0
                SYNC_AUDIT["rows"] += 1
        SYNC_AUDIT["runs"] += 1
        return trace

    wrapper.__wrapped__ = run
    return wrapper


def pytest_configure(config):
    import fedcso
    import fedcso.cli
    import fedcso.federation

    checked = _audited(fedcso.federation.run)
    fedcso.federation.run = checked
    fedcso.run = checked
    fedcso.cli.run = checked


# One line per acceptance criterion, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
    terminalreporter.write_line(f"consensus audit: {SYNC_AUDIT['rows']} sync rows in {SYNC_AUDIT['runs']} runs, all exactly zero")
