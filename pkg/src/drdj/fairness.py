"""Fairness-regularized data join with a binary group as the auxiliary feature.

A per-cell weight ``c(a, y)`` folds a log-probability equal-opportunity
penalty into the loss. Known joint positive rates ``p0 = P(a=0, y=+1)`` and
``p1 = P(a=1, y=+1)`` enter through free multipliers ``gamma0, gamma1``.
The absolute value in the penalty is handled by minimizing the pointwise
maximum of the ``+eta`` and ``-eta`` programs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import AuxDataset, FullDataset, LabeledDataset
from .errors import DataError
from .objective import Grid, JoinProblem, ModelPoint, SolverConfig, _box_grid, _pareto, logistic_f
from .projection import project_fair
from .solver import TrainedModel, run_pgd

CELLS = ((0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0))   # enumeration order of (a, y)


@dataclass(frozen=True)
class FairnessConfig:
    eta: float = 0.0
    p0: float = 0.25
    p1: float = 0.25
    freeze_gamma: bool = False

    def __post_init__(self):
        if not (0 < self.p0 < 1 and 0 < self.p1 < 1):
            raise ValueError("p0 and p1 must lie in (0, 1)")
        if self.p0 + self.p1 > 1 + 1e-12:
            raise ValueError("p0 + p1 must not exceed 1")
        if not abs(self.eta) < min(self.p0, self.p1):
            raise ValueError("|eta| must be below min(p0, p1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d) -> "FairnessConfig":
        return cls(**d)

    def with_(self, **kw) -> "FairnessConfig":
        return replace(self, **kw)


def c_weight(a: int, y: float, eta: float, p0: float, p1: float) -> float:
    if y != 1:
        return 1.0
    return 1.0 - eta * ((1.0 / p1) if a == 1 else -(1.0 / p0))


def c_bar(eta: float, p0: float, p1: float) -> float:
    return max(c_weight(a, y, eta, p0, p1) for a, y in CELLS)


def theta1_scale(cfg: FairnessConfig) -> float:
    """Scale ``s`` of the constraint ``||theta1|| <= s (aA + aP)``, valid for both signs of eta."""
    return 1.0 / max(c_bar(cfg.eta, cfg.p0, cfg.p1), c_bar(-cfg.eta, cfg.p0, cfg.p1))


@dataclass(frozen=True)
class FairModelPoint:
    base: ModelPoint
    gamma0: float = 0.0
    gamma1: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.append(self.base.to_vector(), [self.gamma0, self.gamma1])

    @classmethod
    def from_vector(cls, v, m1: int, branch: str) -> "FairModelPoint":
        v = np.asarray(v, float)
        return cls(ModelPoint.from_vector(v[:-2], m1, branch), float(v[-2]), float(v[-1]))


def _cell_values(point: FairModelPoint, problem: JoinProblem, config: SolverConfig, eta: float,
                 cfg: FairnessConfig):
    """``(|M|, 4)`` array of per-cell values before the ``alpha_hat d`` term,
    plus the scores ``t`` and the weights."""
    m = point.base
    x_hat = problem.x_hat(m.branch)
    u = x_hat @ m.theta1
    aA = problem.A[:, 0]
    th2 = m.theta2[0] if m.theta2.size else 0.0
    flip_c = config.flip_factor * m.alpha_P * config.kappa_P
    vals = np.empty((u.size, 4))
    ts = np.empty((u.size, 4))
    ws = np.empty(4)
    for col, (a, y) in enumerate(CELLS):
        t = u + th2 * a
        w = c_weight(a, y, eta, cfg.p0, cfg.p1)
        v = w * logistic_f(-y * t)
        v = v - m.alpha_A * config.kappa_A * np.abs(aA - a)
        v = v - flip_c * (problem.y != y)
        if y == 1:
            v = v - (point.gamma0 if a == 0 else point.gamma1)
        vals[:, col] = v
        ts[:, col] = t
        ws[col] = w
    return vals, ts, ws


def fair_pair_terms(point: FairModelPoint, problem: JoinProblem, config: SolverConfig, eta: float,
                    cfg: FairnessConfig) -> np.ndarray:
    vals, _, _ = _cell_values(point, problem, config, eta, cfg)
    return vals.max(axis=1) - point.base.alpha_hat * problem.d


def fair_pair_term(point: FairModelPoint, x_A, x_P, a_A: float, y_P: float, kappa_A: float,
                   kappa_P: float, eta: float, cfg: FairnessConfig, flip_cost_doubling: bool = False) -> float:
    """One pair of the fairness surrogate from raw vectors."""
    m = point.base
    x_A, x_P = np.asarray(x_A, float).ravel(), np.asarray(x_P, float).ravel()
    x_hat = x_P if m.branch == "A" else x_A
    th2 = m.theta2[0] if m.theta2.size else 0.0
    fc = (2.0 if flip_cost_doubling else 1.0) * m.alpha_P * kappa_P
    best = -np.inf
    for a, y in CELLS:
        t = float(m.theta1 @ x_hat) + th2 * a
        v = c_weight(a, y, eta, cfg.p0, cfg.p1) * float(logistic_f(-y * t))
        v -= m.alpha_A * kappa_A * abs(float(np.ravel(a_A)[0]) - a) + fc * (y != y_P)
        if y == 1:
            v -= point.gamma0 if a == 0 else point.gamma1
        best = max(best, v)
    return best - m.alpha_hat * float(np.linalg.norm(x_A - x_P))


def fair_pair_sup_bruteforce(point: FairModelPoint, x_A, x_P, a_A: float, y_P: float, kappa_A: float,
                             kappa_P: float, eta: float, cfg: FairnessConfig, grid: Grid = Grid(),
                             flip_cost_doubling: bool = False) -> float:
    """Grid estimate of the pair sup of the fairness program.

    The group and label are enumerated exactly; only ``x`` ranges over a
    grid covering both anchors. Validation oracle for small ``m1``.
    """
    m = point.base
    x_A, x_P = np.asarray(x_A, float).ravel(), np.asarray(x_P, float).ravel()
    if x_A.size > grid.max_dim:
        raise ValueError(f"grid oracle refuses m1 = {x_A.size} > {grid.max_dim}")
    X = _box_grid(np.vstack([x_A, x_P]), grid.resolution, grid.margin)
    cost = (m.alpha_A * np.linalg.norm(X - x_A, axis=1) + m.alpha_P * np.linalg.norm(X - x_P, axis=1))
    u = X @ m.theta1
    th2 = m.theta2[0] if m.theta2.size else 0.0
    fc = (2.0 if flip_cost_doubling else 1.0) * m.alpha_P * kappa_P
    a_A = float(np.ravel(a_A)[0])
    best = -np.inf
    for a, y in CELLS:
        w = c_weight(a, y, eta, cfg.p0, cfg.p1)
        gain = -y * u
        keep = _pareto(gain, cost, w)
        v = float(np.max(w * logistic_f(gain[keep] - y * th2 * a) - cost[keep]))
        v -= m.alpha_A * kappa_A * abs(a_A - a) + fc * (y != y_P)
        if y == 1:
            v -= point.gamma0 if a == 0 else point.gamma1
        best = max(best, v)
    return best


def _signed_eval(point: FairModelPoint, problem: JoinProblem, config: SolverConfig, eta: float,
                 cfg: FairnessConfig):
    vals, ts, ws = _cell_values(point, problem, config, eta, cfg)
    m = point.base
    Z = problem.Z(config.normalization)
    value = float(m.alpha_A * config.r_A + m.alpha_P * config.r_P + cfg.p0 * point.gamma0
                  + cfg.p1 * point.gamma1
                  + (np.sum(vals.max(axis=1)) - m.alpha_hat * np.sum(problem.d)) / Z)
    return value, vals, ts, ws


def omega_fair_signed(point: FairModelPoint, problem: JoinProblem, config: SolverConfig, eta: float,
                      cfg: FairnessConfig) -> float:
    return _signed_eval(point, problem, config, eta, cfg)[0]


def omega_fair(point: FairModelPoint, problem: JoinProblem, config: SolverConfig, cfg: FairnessConfig) -> float:
    """Maximum of the ``+eta`` and ``-eta`` programs."""
    return max(omega_fair_signed(point, problem, config, cfg.eta, cfg),
               omega_fair_signed(point, problem, config, -cfg.eta, cfg))


def _active_eval(point, problem, config, cfg):
    """Evaluation of whichever sign of eta attains the max (``+eta`` on ties)."""
    plus = _signed_eval(point, problem, config, cfg.eta, cfg)
    if cfg.eta == 0.0:
        return plus
    minus = _signed_eval(point, problem, config, -cfg.eta, cfg)
    return plus if plus[0] >= minus[0] else minus


def _subgradient_from(point, problem, config, cfg, vals, ts, ws) -> np.ndarray:
    m = point.base
    pick = np.argmax(vals, axis=1)                       # first maximizer in CELLS order
    rows = np.arange(pick.size)
    a_sel = _CELL_A[pick]
    y_sel = _CELL_Y[pick]
    t_sel = ts[rows, pick]
    w_sel = ws[pick]
    dt = -w_sel * y_sel * expit(-y_sel * t_sel)          # d/dt of w f(-y t)
    Z = problem.Z(config.normalization)
    x_hat = problem.x_hat(m.branch)
    g1 = dt @ x_hat / Z
    g2 = np.array([dt @ a_sel / Z]) if m.theta2.size else np.zeros(0)
    d_sum = float(np.sum(problem.d)) / Z
    gA = config.r_A - config.kappa_A * float(np.sum(np.abs(problem.A[:, 0] - a_sel))) / Z
    gP = config.r_P - config.flip_factor * config.kappa_P * float(np.sum(problem.y != y_sel)) / Z
    if m.branch == "A":
        gA -= d_sum
    else:
        gP -= d_sum
    pos = y_sel == 1
    gg0 = cfg.p0 - float(np.sum(pos & (a_sel == 0))) / Z
    gg1 = cfg.p1 - float(np.sum(pos & (a_sel == 1))) / Z
    if cfg.freeze_gamma:
        gg0 = gg1 = 0.0
    return np.concatenate([g1, g2, [gA, gP, gg0, gg1]])


def omega_fair_subgradient(point: FairModelPoint, problem: JoinProblem, config: SolverConfig,
                           cfg: FairnessConfig) -> np.ndarray:
    """Subgradient over ``(theta1, theta2, alpha_A, alpha_P, gamma0, gamma1)``."""
    _, vals, ts, ws = _active_eval(point, problem, config, cfg)
    return _subgradient_from(point, problem, config, cfg, vals, ts, ws)


_CELL_A = np.array([c[0] for c in CELLS], float)
_CELL_Y = np.array([c[1] for c in CELLS])


def _check_group(aux: AuxDataset):
    if aux.m2 != 1:
        raise DataError("the fairness program needs exactly one auxiliary (group) column")
    if not np.all(np.isin(aux.A[:, 0], (0.0, 1.0))):
        raise DataError("group column must take values in {0, 1}")


def train_fair(aux: AuxDataset, labeled: LabeledDataset, config: SolverConfig, cfg: FairnessConfig,
               problem: Optional[JoinProblem] = None) -> TrainedModel:
    """Two-branch projected subgradient descent on the fairness surrogate."""
    _check_group(aux)
    if problem is None:
        problem = JoinProblem.build(aux, labeled, config.k, config.norm)
    m1 = problem.m1
    s = theta1_scale(cfg)
    chains = {}
    for br in ("A", "P"):
        def as_point(v, br=br):
            return FairModelPoint.from_vector(v, m1, br)

        def proj(v, br=br):
            t1, t2, a, b, g = project_fair(v[:m1], v[m1:m1 + 1], v[-4], v[-3], v[-2:], br, s)
            return np.concatenate([t1, t2, [a, b], g])

        memo = {}

        def evaluate(v, memo=memo, as_point=as_point):
            key = v.tobytes()
            if memo.get("key") != key:
                pt = as_point(v)
                memo["key"], memo["pt"], memo["res"] = key, pt, _active_eval(pt, problem, config, cfg)
            return memo["pt"], memo["res"]

        def value(v):
            return evaluate(v)[1][0]

        def grad(v):
            pt, (_, vals, ts, ws) = evaluate(v)
            return _subgradient_from(pt, problem, config, cfg, vals, ts, ws)

        x0 = np.concatenate([np.zeros(m1 + 1), [config.init_alpha, config.init_alpha, 0.0, 0.0]])
        x, trace = run_pgd(x0, value, grad, proj, config.T, config.step, config.step_schedule,
                           config.iterate)
        pt = as_point(x)
        chains[br] = (pt, omega_fair(pt, problem, config, cfg), trace)
    best = min(("A", "P"), key=lambda b: (chains[b][1], b != "A"))
    pt, obj, _ = chains[best]
    extra = {"gamma0": pt.gamma0, "gamma1": pt.gamma1, "c_bar": 1.0 / s, "scale": s,
             "fairness": cfg.to_dict(), "branch_objectives": {b: chains[b][1] for b in chains}}
    return TrainedModel("dj_fair", pt.base, obj, {b: chains[b][2] for b in chains},
                        config.to_dict(), None, extra, True)


def log_h(scores_) -> np.ndarray:
    """``log sigma(t)`` for scores ``t``."""
    return -logistic_f(-np.asarray(scores_, float))


def unfairness_empirical(theta1, theta2, X, group, y) -> float:
    """``| mean log h over (a=1, y=+1) - mean log h over (a=0, y=+1) |``."""
    X = np.atleast_2d(np.asarray(X, float))
    g = np.asarray(group, float).ravel()
    y = np.asarray(y, float).ravel()
    th2 = np.asarray(theta2, float).ravel()
    s = X @ np.asarray(theta1, float) + (g * th2[0] if th2.size else 0.0)
    c1 = (g == 1) & (y == 1)
    c0 = (g == 0) & (y == 1)
    if not c1.any() or not c0.any():
        raise DataError("unfairness is undefined without positives in both groups")
    lh = log_h(s)
    return float(abs(lh[c1].mean() - lh[c0].mean()))


def unfairness_of(model: TrainedModel, data: FullDataset) -> float:
    return unfairness_empirical(model.model.theta1, model.model.theta2, data.X, data.A[:, 0], data.y)
