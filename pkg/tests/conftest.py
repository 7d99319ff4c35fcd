import numpy as np
import pytest
from scipy.optimize import linprog

from drdj.objective import ModelPoint
from drdj.projection import project_arrays


def lp_transport_cost(C):
    """Transportation optimum via a generic LP solver, independent of the network simplex."""
    n_A, n_P = C.shape
    A_eq = np.zeros((n_A + n_P, n_A * n_P))
    for i in range(n_A):
        A_eq[i, i * n_P:(i + 1) * n_P] = 1.0
    for j in range(n_P):
        A_eq[n_A + j, j::n_P] = 1.0
    b_eq = np.concatenate([np.full(n_A, 1.0 / n_A), np.full(n_P, 1.0 / n_P)])
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.success
    return float(res.fun)


def random_feasible_model(rng, m1, m2, kappa_A, branch=None, scale=2.0):
    """A random point of the branch feasible set, obtained by projecting a Gaussian draw."""
    branch = branch or ("A" if rng.random() < 0.5 else "P")
    t1, t2, a, b = project_arrays(rng.normal(0, scale, m1), rng.normal(0, scale, m2),
                                  abs(rng.normal(0, scale)), abs(rng.normal(0, scale)), kappa_A, branch)
    return ModelPoint(t1, t2, a, b, branch)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# --------------------------------------------------------------------------
# Acceptance reporting: one line per criterion in the terminal summary, and
# a session clock plus failure record for the whole-suite criterion.
# --------------------------------------------------------------------------

ACCEPTANCE_LINES = []
SESSION = {"start": None, "failed": []}
LAST_NODE = "test_criterion_8_unit_suites_and_runtime"


def record_criterion(number, name, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_sessionstart(session):
    import time

    SESSION["start"] = time.perf_counter()


def pytest_collection_modifyitems(session, config, items):
    last = [it for it in items if it.name == LAST_NODE]
    rest = [it for it in items if it.name != LAST_NODE]
    items[:] = rest + last


def pytest_runtest_logreport(report):
    if report.failed and "test_acceptance" not in report.nodeid:
        SESSION["failed"].append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
