import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drdj.data import AuxDataset, LabeledDataset
from drdj.errors import InfeasibleModelWarning
from drdj.geometry import MatchSet, NormSpec
from drdj.objective import (
    Grid, JoinProblem, ModelPoint, SolverConfig, conjugate_fstar, gap_certificate, logistic_f, omega,
    omega_subgradient, pair_sup_bruteforce, pair_sup_upper_bound, pair_surrogate, pair_term,
    robust_label_term, sup_bruteforce, sup_upper_bound,
)
from drdj.solver import _value_and_grad

from conftest import random_feasible_model

LN2 = math.log(2.0)


def _f_scalar(t):
    # plain-float logistic loss, independent of the vectorised implementation
    return t + math.log1p(math.exp(-t)) if t > 0 else math.log1p(math.exp(t))


def test_logistic_examples():
    assert logistic_f(0.0) == pytest.approx(LN2, abs=1e-15)
    assert logistic_f(1000.0) == 1000.0
    assert logistic_f(-1000.0) == 0.0
    assert conjugate_fstar(0.5) == pytest.approx(-LN2, abs=1e-15)
    assert conjugate_fstar(0.0) == 0.0 and conjugate_fstar(1.0) == 0.0
    with pytest.raises(ValueError):
        conjugate_fstar(1.2)
    with pytest.raises(ValueError):
        conjugate_fstar(-1e-3)


@settings(max_examples=300, deadline=None)
@given(st.floats(-40, 40), st.floats(0, 1))
def test_fenchel_young(t, b):
    assert logistic_f(t) + conjugate_fstar(b) >= b * t - 1e-9


def test_fenchel_young_equality():
    for t in np.linspace(-20, 20, 81):
        b = 1.0 / (1.0 + math.exp(-t))
        assert abs(logistic_f(t) + conjugate_fstar(b) - b * t) <= 1e-9


def test_f_reflection_identity():
    for t in np.random.default_rng(0).uniform(-50, 50, 2000):
        assert abs(logistic_f(-t) - (logistic_f(t) - t)) <= 1e-12


def test_robust_label_term_examples():
    for y in (-1, 1):
        assert robust_label_term(0.0, y, 0.0) == pytest.approx(LN2, abs=1e-15)
    assert robust_label_term(1.0, 1, 0.0) == pytest.approx(logistic_f(1.0), abs=1e-15)
    assert robust_label_term(1.0, 1, 0.0) == pytest.approx(1.3132616875182228, abs=1e-12)
    assert robust_label_term(1.0, 1, 10.0) == pytest.approx(logistic_f(-1.0), abs=1e-15)
    rng = np.random.default_rng(5)
    for t, y, c in zip(rng.normal(0, 5, 500), rng.choice([-1, 1], 500), rng.uniform(0, 4, 500)):
        raw = max(_f_scalar(-y * t), _f_scalar(y * t) - c)
        assert abs(robust_label_term(t, y, c) - raw) <= 1e-12


def _one_pair(d=0.5):
    aux = AuxDataset([[0.0]], [[0.0]])
    lab = LabeledDataset([[d]], [1])
    return aux, lab, JoinProblem.build(aux, lab)


def test_pair_term_examples():
    aux, lab, _ = _one_pair(0.5)
    assert pair_term(0, 0, 0.5, ModelPoint.zeros(1, 1), aux, lab, 1.0) == pytest.approx(LN2)
    m = ModelPoint([0.0], [0.0], 1.0, 2.0, "A")
    assert pair_term(0, 0, 0.5, m, aux, lab, 1.0) == pytest.approx(LN2 - 0.5)


def _raw_pair_term(model, xA, xP, a, y, kappa_P):
    x_hat = xP if model.branch == "A" else xA
    t = sum(float(u) * float(v) for u, v in zip(model.theta1, x_hat))
    t += sum(float(u) * float(v) for u, v in zip(model.theta2, a))
    c = model.alpha_P * kappa_P
    d = math.sqrt(sum((float(u) - float(v)) ** 2 for u, v in zip(xA, xP)))
    return max(_f_scalar(-y * t), _f_scalar(y * t) - c) - min(model.alpha_A, model.alpha_P) * d


def _random_problem(rng, n_A=9, n_P=6, m1=2, m2=2, k=2):
    aux = AuxDataset(rng.normal(size=(n_A, m1)), rng.normal(size=(n_A, m2)))
    lab = LabeledDataset(rng.normal(size=(n_P, m1)), rng.choice([-1.0, 1.0], n_P))
    return JoinProblem.build(aux, lab, k)


def test_pair_term_matches_scalar_recomputation(rng):
    prob = _random_problem(rng)
    for _ in range(50):
        m = random_feasible_model(rng, 2, 2, 3.0)
        for i, j, d in zip(prob.matches.i, prob.matches.j, prob.matches.d):
            got = pair_term(i, j, d, m, prob.aux, prob.labeled, 1.5)
            want = _raw_pair_term(m, prob.aux.X[i], prob.labeled.X[j], prob.aux.A[i], prob.labeled.y[j], 1.5)
            assert abs(got - want) <= 1e-12


def test_omega_examples():
    aux, lab, prob = _one_pair(0.0)
    cfg = SolverConfig(r_A=1.0, r_P=1.0)
    assert omega(ModelPoint.zeros(1, 1), prob, cfg) == pytest.approx(LN2)
    aux, lab, prob = _one_pair(2.0)
    m = ModelPoint([0.0], [0.0], 0.5, 1.0, "A")
    assert omega(m, prob, cfg) == pytest.approx(1.5 + LN2 - 1.0, abs=1e-15)
    assert omega(m, prob, cfg) == pytest.approx(1.1931471805599454, abs=1e-12)


def test_omega_warns_when_infeasible():
    _, _, prob = _one_pair(1.0)
    with pytest.warns(InfeasibleModelWarning):
        omega(ModelPoint([5.0], [0.0], 0.1, 0.2, "A"), prob, SolverConfig())


def test_omega_permutation_invariance(rng):
    prob = _random_problem(rng, 15, 10)
    cfg = SolverConfig(r_A=0.3, r_P=0.4, kappa_A=2.0, kappa_P=1.0)
    M = prob.matches
    for _ in range(20):
        perm = rng.permutation(len(M))
        shuffled = JoinProblem(prob.aux, prob.labeled,
                               MatchSet(M.i[perm], M.j[perm], M.d[perm], M.k, M.n_A, M.n_P))
        m = random_feasible_model(rng, 2, 2, 2.0)
        assert abs(omega(m, prob, cfg) - omega(m, shuffled, cfg)) <= 1e-12


def test_omega_convexity(rng):
    prob = _random_problem(rng)
    for norm_mode in ("product", "matches"):
        cfg = SolverConfig(r_A=0.5, r_P=0.2, kappa_A=2.0, kappa_P=0.7, normalization=norm_mode)
        for branch in ("A", "P"):
            for _ in range(100):
                u = random_feasible_model(rng, 2, 2, 2.0, branch)
                v = random_feasible_model(rng, 2, 2, 2.0, branch)
                t = rng.uniform(0, 1)
                w = ModelPoint.from_vector(t * u.to_vector() + (1 - t) * v.to_vector(), 2, branch)
                lhs = omega(w, prob, cfg, check=False)
                assert lhs <= t * omega(u, prob, cfg) + (1 - t) * omega(v, prob, cfg) + 1e-9


def test_subgradient_at_zero():
    rng = np.random.default_rng(4)
    prob = _random_problem(rng)
    cfg = SolverConfig(r_A=0.4, r_P=0.6)
    g = omega_subgradient(ModelPoint.zeros(2, 2, 0.1, "A"), prob, cfg)
    Z = prob.Z("product")
    assert g.alpha_A == 0.4 - np.sum(prob.d) / Z
    assert g.alpha_P == 0.6


def _omega_vec(v, prob, cfg, branch):
    return omega(ModelPoint.from_vector(v, prob.m1, branch), prob, cfg, check=False)


def test_subgradient_finite_differences(rng):
    prob = _random_problem(rng, 8, 5)
    cfg = SolverConfig(r_A=0.5, r_P=0.3, kappa_A=2.0, kappa_P=0.8)
    h = 1e-6
    checked = 0
    while checked < 100:
        branch = "A" if checked % 2 == 0 else "P"
        m = random_feasible_model(rng, 2, 2, 2.0, branch)
        if abs(m.alpha_A - m.alpha_P) < 1e-3:
            continue
        v = m.to_vector()
        s = prob.y * (prob.x_hat(branch) @ m.theta1 + prob.A @ m.theta2)
        if np.min(np.abs(s - cfg.kappa_P * m.alpha_P)) < 1e-3:
            continue
        g = omega_subgradient(m, prob, cfg).to_vector()
        direction = rng.normal(size=v.size)
        direction /= np.linalg.norm(direction)
        fd = (_omega_vec(v + h * direction, prob, cfg, branch)
              - _omega_vec(v - h * direction, prob, cfg, branch)) / (2 * h)
        assert abs(fd - g @ direction) <= 1e-5
        checked += 1


def test_subgradient_at_flip_kink():
    # one pair with y t exactly equal to the flip cost alpha_P kappa_P
    aux = AuxDataset([[1.0]], np.zeros((1, 0)))
    lab = LabeledDataset([[1.0]], [1])
    prob = JoinProblem.build(aux, lab)
    cfg = SolverConfig(r_A=0.1, r_P=0.1, kappa_A=1.0, kappa_P=1.0)
    m = ModelPoint([0.5], np.zeros(0), 0.25, 0.5, "A")
    g = omega_subgradient(m, prob, cfg)
    h = 1e-7
    for idx, comp in ((0, g.theta1[0]), (-1, g.alpha_P)):
        v = m.to_vector()
        e = np.zeros_like(v)
        e[idx] = h
        right = (_omega_vec(v + e, prob, cfg, "A") - _omega_vec(v, prob, cfg, "A")) / h
        left = (_omega_vec(v, prob, cfg, "A") - _omega_vec(v - e, prob, cfg, "A")) / h
        lo, hi = min(left, right), max(left, right)
        assert lo - 1e-6 <= comp <= hi + 1e-6
        assert hi - lo > 0.1  # it really is a kink


def test_fast_path_matches_reference(rng):
    prob = _random_problem(rng, 12, 7, k=2)
    for cfg in (SolverConfig(r_A=0.3, r_P=0.7, kappa_A=2.0, kappa_P=0.5),
                SolverConfig(normalization="matches", flip_cost_doubling=True, kappa_P=0.3)):
        for branch in ("A", "P"):
            value, grad = _value_and_grad(prob, cfg, branch)
            for _ in range(30):
                m = random_feasible_model(rng, 2, 2, cfg.kappa_A, branch)
                v = m.to_vector()
                assert abs(value(v) - omega(m, prob, cfg)) <= 1e-12
                np.testing.assert_allclose(grad(v), omega_subgradient(m, prob, cfg).to_vector(),
                                           rtol=0, atol=1e-12)


def test_sup_upper_bound_examples():
    m = ModelPoint([0.3, -0.2], [0.4], 0.4, 0.6, "A")
    x, a = np.array([0.5, 1.0]), np.array([2.0])
    # degenerate pair: no transport can help, the bound is the loss itself
    assert sup_upper_bound(m, x, x, a, 1.0, 1.0) == pytest.approx(logistic_f(-(m.theta1 @ x + m.theta2 @ a)))
    bad = ModelPoint([3.0, 0.0], [0.0], 0.4, 0.6, "A")
    assert sup_upper_bound(bad, x, x + 1, a, 1.0, 1.0) == np.inf
    zero = ModelPoint([0.1, 0.0], [0.0], 0.0, 0.0, "A")
    assert sup_upper_bound(zero, x, x + 1, a, 1.0, 1.0) == np.inf


def test_gap_certificate_degenerate():
    m = ModelPoint([0.3, -0.2], [0.4], 0.4, 0.6, "A")
    x, a = np.array([0.5, 1.0]), np.array([2.0])
    c = gap_certificate(m, x, x, a, 1.0, 2.0, 1.0)
    assert c.budget == 0 and c.lower == pytest.approx(c.upper, abs=1e-12)
    m0 = ModelPoint([0.3, -0.2], [0.0], 0.0, 0.6, "A")
    c = gap_certificate(m0, x, x + 1.0, a, 1.0, 2.0, 1.0)
    assert c.budget == 0 and c.lower == pytest.approx(c.upper, abs=1e-12)


def test_gap_certificate_random(rng):
    for _ in range(1000):
        kA, kP = rng.uniform(0.2, 5, size=2)
        m = random_feasible_model(rng, 2, 2, kA)
        xA, xP, a = rng.normal(size=2), rng.normal(size=2), rng.normal(size=2)
        c = gap_certificate(m, xA, xP, a, rng.choice([-1.0, 1.0]), kA, kP)
        assert c.holds and c.upper - c.lower >= -1e-9


def test_bruteforce_theta_zero():
    m = ModelPoint([0.0, 0.0], [0.0], 0.3, 0.7, "A")
    xA, xP = np.array([0.0, 0.0]), np.array([1.0, 0.5])
    got = sup_bruteforce(m, xA, xP, np.array([0.2]), 1.0, 1.0, Grid(0.05, 1.0))
    assert got == pytest.approx(LN2 - 0.3 * np.linalg.norm(xA - xP), abs=1e-12)


def test_bruteforce_no_costs():
    # with every price at zero the grid maximum sits on the box corner aligned with -theta
    m = ModelPoint([0.01, 0.02], [0.0], 0.0, 0.0, "A")
    xA = xP = np.array([0.0, 0.0])
    g = Grid(0.5, 1.0)
    got = sup_bruteforce(m, xA, xP, np.array([0.0]), 1.0, 0.0, g)
    assert got == pytest.approx(logistic_f(0.01 + 0.02), abs=1e-12)


def test_bruteforce_refuses_large_dims():
    m = ModelPoint.zeros(3, 2)
    with pytest.raises(ValueError):
        sup_bruteforce(m, np.zeros(3), np.zeros(3), np.zeros(2))


def test_sandwich_small(rng):
    grid = Grid(0.02, 2.0)
    for _ in range(10):
        kA, kP = rng.uniform(0.5, 3, size=2)
        m = random_feasible_model(rng, 1, 1, kA)
        xA, xP, a = rng.normal(size=1), rng.normal(size=1), rng.normal(size=1)
        y = rng.choice([-1.0, 1.0])
        low = pair_surrogate(m, xA, xP, a, y, kP)
        mid = pair_sup_bruteforce(m, xA, xP, a, y, kA, kP, grid)
        up = pair_sup_upper_bound(m, xA, xP, a, y, kA, kP)
        assert low <= mid + 1e-9 and mid <= up + 1e-9


def test_solver_config_roundtrip():
    cfg = SolverConfig(r_A=0.1, norm=NormSpec(3.0, 1.5), normalization="matches")
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        SolverConfig(T=0)
    with pytest.raises(ValueError):
        SolverConfig(step=0.0)
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"bogus": 1})
