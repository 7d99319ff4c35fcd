import numpy as np
import pytest

from drdj.geometry import NormSpec
from drdj.objective import ModelPoint
from drdj.projection import (
    FeasibleSetSpec, closed_form_candidates, dykstra_project, project, project_arrays, project_fair,
    project_norm_cone, project_oracle,
)


def _vec(t1, t2, a, b):
    return np.concatenate([t1, t2, [a, b]])


def _proj_vec(v, m1, kappa, branch, scale=1.0):
    return _vec(*project_arrays(v[:m1], v[m1:-2], v[-2], v[-1], kappa, branch, scale))


def _random_inputs(rng, n, m1, m2, spread=3.0):
    return (rng.normal(0, spread, (n, m1)), rng.normal(0, spread, (n, m2)),
            rng.normal(0.5, spread, n), rng.normal(0.5, spread, n))


def test_feasible_point_unchanged():
    m = ModelPoint([0.3, 0.4], [0.1], 0.5, 1.0, "A")
    out = project(m, FeasibleSetSpec(2.0, "A"))
    np.testing.assert_array_equal(out.to_vector(), m.to_vector())


def test_equal_alpha_case():
    # loose theta, order violated on branch A: both alphas move to the average
    t1, t2, a, b = project_arrays([0.1, 0.0], [0.2], 3.0, 1.0, 5.0, "A")
    assert a == 2.0 and b == 2.0
    np.testing.assert_array_equal(t1, [0.1, 0.0])
    np.testing.assert_array_equal(t2, [0.2])
    assert closed_form_candidates(3.0, 1.0, 0.1, 0.2, 5.0)[1] == (2.0, 2.0)
    o = project_oracle(ModelPoint([0.1, 0.0], [0.2], 3.0, 1.0), FeasibleSetSpec(5.0, "A"))
    assert o.alpha_A == pytest.approx(2.0, abs=1e-8) and o.alpha_P == pytest.approx(2.0, abs=1e-8)


def test_kappa_zero_kills_theta2():
    o = project_oracle(ModelPoint([0.1], [0.7, -0.2], 1.0, 2.0), FeasibleSetSpec(0.0, "A"))
    np.testing.assert_array_equal(o.theta2, [0.0, 0.0])
    t1, t2, a, b = project_arrays([0.1], [0.7, -0.2], 1.0, 2.0, 0.0, "A")
    np.testing.assert_array_equal(t2, [0.0, 0.0])


@pytest.mark.parametrize("scale", [1.0, 0.4, 2.5])
@pytest.mark.parametrize("branch", ["A", "P"])
def test_matches_dykstra(branch, scale):
    rng = np.random.default_rng([ord(branch), int(10 * scale)])
    kappa = 1.7
    T1, T2, a, b = _random_inputs(rng, 300, 3, 3)
    O1, O2, oa, ob = dykstra_project(T1, T2, a, b, kappa, branch, scale)
    for n in range(300):
        got = _vec(*project_arrays(T1[n], T2[n], a[n], b[n], kappa, branch, scale))
        assert np.linalg.norm(got - _vec(O1[n], O2[n], oa[n], ob[n])) <= 1e-5


def _check_feasible(v, m1, kappa, branch, scale=1.0, spec=NormSpec()):
    m = ModelPoint.from_vector(v, m1, branch)
    assert m.violation(kappa, spec, scale) <= 1e-9


def test_idempotent_and_feasible(rng):
    for branch in ("A", "P"):
        for _ in range(500):
            v = rng.normal(0, 3, 7)
            kappa = rng.uniform(0, 6)
            p = _proj_vec(v, 3, kappa, branch)
            _check_feasible(p, 3, kappa, branch)
            assert np.linalg.norm(_proj_vec(p, 3, kappa, branch) - p) <= 1e-9


def test_nonexpansive(rng):
    for n in range(10_000):
        branch = "A" if n % 2 else "P"
        x, y = rng.normal(0, 2, 6), rng.normal(0, 2, 6)
        px, py = _proj_vec(x, 2, 1.3, branch), _proj_vec(y, 2, 1.3, branch)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-12


def test_optimal_against_feasible_probes(rng):
    for branch in ("A", "P"):
        kappa = 2.0
        probes = np.array([_proj_vec(rng.normal(0, 3, 6), 2, kappa, branch) for _ in range(100)])
        for _ in range(1000):
            x = rng.normal(0, 3, 6)
            d = np.linalg.norm(_proj_vec(x, 2, kappa, branch) - x)
            assert np.all(d <= np.linalg.norm(probes - x, axis=1) + 1e-9)


def test_norm_cone_projection():
    x, u = project_norm_cone(np.array([[3.0, 4.0]]), [0.0], 1.0)
    np.testing.assert_allclose(x[0], [1.5, 2.0])
    assert u[0] == pytest.approx(2.5)
    x, u = project_norm_cone(np.array([[3.0, 4.0]]), [-10.0], 1.0)
    np.testing.assert_array_equal(x[0], [0, 0])
    assert u[0] == 0.0
    x, u = project_norm_cone(np.array([[0.3, 0.4]]), [1.0], 1.0)
    np.testing.assert_array_equal(x[0], [0.3, 0.4])


def test_non_euclidean_oracle(rng):
    spec = NormSpec(3.0, 1.5)
    for branch in ("A", "P"):
        fs = FeasibleSetSpec(1.5, branch, 1.0, spec)
        inputs = [ModelPoint(rng.normal(0, 2, 2), rng.normal(0, 2, 1), rng.normal(), rng.normal(), branch)
                  for _ in range(6)]
        probes = [project(ModelPoint(rng.normal(0, 2, 2), rng.normal(0, 2, 1), rng.normal(), rng.normal()),
                          fs).to_vector() for _ in range(10)]
        for m in inputs:
            out = project(m, fs)
            assert out.violation(1.5, spec) <= 1e-7
            d = np.linalg.norm(out.to_vector() - m.to_vector())
            for z in probes:
                assert d <= np.linalg.norm(z - m.to_vector()) + 1e-6


def test_project_fair():
    t1, t2, a, b, g = project_fair([0.3], [5.0], 0.2, 0.4, [1.5, -2.0], "A", 1.0)
    np.testing.assert_array_equal(t1, [0.3])
    assert (a, b) == (0.2, 0.4)
    np.testing.assert_array_equal(t2, [5.0])
    np.testing.assert_array_equal(g, [1.5, -2.0])


def test_project_fair_matches_oracle(rng):
    for n in range(200):
        branch = "A" if n % 2 else "P"
        s = rng.uniform(0.2, 1.0)
        t1, a, b = rng.normal(0, 2, 3), rng.normal(), rng.normal()
        gam = rng.normal(size=2)
        o1, o2, oa, ob, og = project_fair(t1, [7.0], a, b, gam, branch, s)
        D1, _, da, db = dykstra_project(t1[None, :], np.zeros((1, 0)), [a], [b], 0.0, branch, s,
                                        theta2_cone=False)
        assert np.linalg.norm(_vec(o1, [], oa, ob) - _vec(D1[0], [], da[0], db[0])) <= 1e-5
        np.testing.assert_array_equal(og, gam)
        np.testing.assert_array_equal(o2, [7.0])
