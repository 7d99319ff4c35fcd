"""Logistic primitives, the two-anchor surrogate objective and its certificates.

Notation used throughout: for a pair ``(i, j)`` of the match set, the
auxiliary row carries ``(x_A, a_A)`` and the labeled row ``(x_P, y_P)``.
The surrogate evaluates the loss at ``x_hat = x_P`` on branch A
(``alpha_A <= alpha_P``) and at ``x_hat = x_A`` on branch P, and pays
``alpha_hat * d`` with ``alpha_hat = min(alpha_A, alpha_P)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.special import expit, xlogy

from .data import AuxDataset, LabeledDataset
from .errors import InfeasibleModelWarning
from .geometry import MatchSet, NormSpec, build_match_set, dual_norm, norm

Branch = Literal["A", "P"]

FEAS_TOL = 1e-9


# --------------------------------------------------------------------------
# Scalar primitives
# --------------------------------------------------------------------------


def logistic_f(t):
    """``log(1 + exp(t))`` evaluated without overflow."""
    return np.logaddexp(0.0, t)


def conjugate_fstar(b):
    """Convex conjugate of :func:`logistic_f`: binary negative entropy on ``[0, 1]``."""
    b_arr = np.asarray(b, dtype=float)
    if np.any((b_arr < 0) | (b_arr > 1)) or np.any(np.isnan(b_arr)):
        raise ValueError("conjugate of the logistic loss is +inf outside [0, 1]")
    out = xlogy(b_arr, b_arr) + xlogy(1.0 - b_arr, 1.0 - b_arr)
    return float(out) if np.ndim(out) == 0 else out


def robust_label_term(t, y, c):
    """Worst case over the label: ``max(f(-y t), f(y t) - c)``.

    Uses ``f(s) = f(-s) + s`` to write it as ``f(-y t) + max(y t - c, 0)``.
    """
    s = np.asarray(y) * np.asarray(t)
    return logistic_f(-s) + np.maximum(s - c, 0.0)


# --------------------------------------------------------------------------
# Model and configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelPoint:
    theta1: np.ndarray
    theta2: np.ndarray
    alpha_A: float
    alpha_P: float
    branch: Branch = "A"

    def __post_init__(self):
        object.__setattr__(self, "theta1", np.asarray(self.theta1, dtype=float).ravel())
        object.__setattr__(self, "theta2", np.asarray(self.theta2, dtype=float).ravel())
        object.__setattr__(self, "alpha_A", float(self.alpha_A))
        object.__setattr__(self, "alpha_P", float(self.alpha_P))
        if self.branch not in ("A", "P"):
            raise ValueError("branch must be 'A' or 'P'")

    @property
    def m1(self) -> int:
        return self.theta1.size

    @property
    def m2(self) -> int:
        return self.theta2.size

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2])

    @property
    def alpha_hat(self) -> float:
        return min(self.alpha_A, self.alpha_P)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2, [self.alpha_A, self.alpha_P]])

    @classmethod
    def from_vector(cls, v, m1: int, branch: Branch = "A") -> "ModelPoint":
        v = np.asarray(v, dtype=float)
        return cls(v[:m1], v[m1:-2], v[-2], v[-1], branch)

    @classmethod
    def zeros(cls, m1: int, m2: int, alpha: float = 0.0, branch: Branch = "A") -> "ModelPoint":
        return cls(np.zeros(m1), np.zeros(m2), alpha, alpha, branch)

    def violation(self, kappa_A: float, spec: NormSpec = NormSpec(), scale: float = 1.0) -> float:
        """Largest constraint violation (0 when feasible)."""
        v = [
            dual_norm(self.theta1, spec.p) - scale * (self.alpha_A + self.alpha_P),
            dual_norm(self.theta2, spec.p_aux) - kappa_A * self.alpha_A,
            -self.alpha_A,
            -self.alpha_P,
            (self.alpha_A - self.alpha_P) if self.branch == "A" else (self.alpha_P - self.alpha_A),
        ]
        return max(0.0, max(v))

    def is_feasible(self, kappa_A: float, spec: NormSpec = NormSpec(), tol: float = FEAS_TOL,
                    scale: float = 1.0) -> bool:
        return self.violation(kappa_A, spec, scale) <= tol

    def to_dict(self) -> dict:
        return {"theta1": self.theta1.tolist(), "theta2": self.theta2.tolist(),
                "alpha_A": self.alpha_A, "alpha_P": self.alpha_P, "branch": self.branch}

    @classmethod
    def from_dict(cls, d) -> "ModelPoint":
        return cls(d["theta1"], d["theta2"], d["alpha_A"], d["alpha_P"], d.get("branch", "A"))


@dataclass(frozen=True)
class SolverConfig:
    r_A: float = 0.65
    r_P: float = 0.65
    kappa_A: float = 5.0
    kappa_P: float = 5.0
    k: int = 1
    T: int = 1500
    step: float = 7e-2
    norm: NormSpec = field(default_factory=NormSpec)
    normalization: Literal["product", "matches"] = "product"
    iterate: Literal["last", "averaged"] = "last"
    step_schedule: Literal["constant", "sqrt"] = "constant"
    flip_cost_doubling: bool = False
    init_alpha: float = 1e-3

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("r_A", "r_P", "kappa_A", "kappa_P", "init_alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.normalization not in ("product", "matches"):
            raise ValueError("normalization must be 'product' or 'matches'")
        if self.iterate not in ("last", "averaged"):
            raise ValueError("iterate must be 'last' or 'averaged'")
        if self.step_schedule not in ("constant", "sqrt"):
            raise ValueError("step_schedule must be 'constant' or 'sqrt'")

    @property
    def flip_factor(self) -> float:
        return 2.0 if self.flip_cost_doubling else 1.0

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "norm"}
        d["norm"] = {"p": self.norm.p, "p_aux": self.norm.p_aux}
        return d

    @classmethod
    def from_dict(cls, d) -> "SolverConfig":
        d = dict(d)
        nrm = d.pop("norm", None)
        if nrm is not None:
            d["norm"] = NormSpec(float(nrm.get("p", 2.0)), float(nrm.get("p_aux", 2.0)))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# Pair data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinProblem:
    """The match set together with the pair-aligned rows it references."""

    aux: AuxDataset
    labeled: LabeledDataset
    matches: MatchSet
    XA: np.ndarray = field(init=False, repr=False)
    XP: np.ndarray = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.aux.m1 != self.labeled.m1:
            raise ValueError("auxiliary and labeled samples have different feature dimensions")
        M = self.matches
        object.__setattr__(self, "XA", self.aux.X[M.i])
        object.__setattr__(self, "XP", self.labeled.X[M.j])
        object.__setattr__(self, "A", self.aux.A[M.i])
        object.__setattr__(self, "y", self.labeled.y[M.j])

    @classmethod
    def build(cls, aux: AuxDataset, labeled: LabeledDataset, k: int = 1,
              spec: NormSpec = NormSpec()) -> "JoinProblem":
        return cls(aux, labeled, build_match_set(aux.X, labeled.X, k, spec))

    @property
    def d(self) -> np.ndarray:
        return self.matches.d

    @property
    def m1(self) -> int:
        return self.aux.m1

    @property
    def m2(self) -> int:
        return self.aux.m2

    def Z(self, normalization: str) -> float:
        if normalization == "matches":
            return float(len(self.matches))
        return float(self.aux.n * self.labeled.n)

    def x_hat(self, branch: Branch) -> np.ndarray:
        return self.XP if branch == "A" else self.XA


def pair_term(i: int, j: int, d_ij: float, model: ModelPoint, aux: AuxDataset,
              labeled: LabeledDataset, kappa_P: float, flip_cost_doubling: bool = False) -> float:
    """Surrogate contribution of one matched pair."""
    x_hat = labeled.X[j] if model.branch == "A" else aux.X[i]
    t = float(model.theta1 @ x_hat + model.theta2 @ aux.A[i])
    c = (2.0 if flip_cost_doubling else 1.0) * model.alpha_P * kappa_P
    return float(robust_label_term(t, labeled.y[j], c)) - model.alpha_hat * d_ij


def pair_terms(model: ModelPoint, problem: JoinProblem, config: SolverConfig) -> np.ndarray:
    t = problem.x_hat(model.branch) @ model.theta1 + problem.A @ model.theta2
    c = config.flip_factor * model.alpha_P * config.kappa_P
    return robust_label_term(t, problem.y, c) - model.alpha_hat * problem.d


def _warn_if_infeasible(model: ModelPoint, config: SolverConfig):
    v = model.violation(config.kappa_A, config.norm)
    if v > FEAS_TOL:
        warnings.warn(f"objective evaluated outside the feasible set (violation {v:.3g})",
                      InfeasibleModelWarning, stacklevel=3)


def omega(model: ModelPoint, problem: JoinProblem, config: SolverConfig, check: bool = True) -> float:
    """``alpha_A r_A + alpha_P r_P + (1/Z) sum_M pair_term``."""
    if check:
        _warn_if_infeasible(model, config)
    terms = pair_terms(model, problem, config)
    return float(model.alpha_A * config.r_A + model.alpha_P * config.r_P
                 + np.sum(terms) / problem.Z(config.normalization))


@dataclass(frozen=True)
class Subgradient:
    theta1: np.ndarray
    theta2: np.ndarray
    alpha_A: float
    alpha_P: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2, [self.alpha_A, self.alpha_P]])


def omega_subgradient(model: ModelPoint, problem: JoinProblem, config: SolverConfig) -> Subgradient:
    """A subgradient of :func:`omega` on the model's branch.

    At a flip kink (``y t`` equal to the flip cost) the element with the
    flip indicator off is returned.
    """
    x_hat = problem.x_hat(model.branch)
    t = x_hat @ model.theta1 + problem.A @ model.theta2
    y = problem.y
    s = y * t
    c = config.flip_factor * model.alpha_P * config.kappa_P
    flip = (s - c) > 0.0
    # d/dt of f(-y t) + max(y t - c, 0)
    w = y * (flip.astype(float) - expit(-s))
    Z = problem.Z(config.normalization)
    g1 = (w @ x_hat) / Z
    g2 = (w @ problem.A) / Z
    d_sum = float(np.sum(problem.d)) / Z
    flip_sum = config.flip_factor * config.kappa_P * float(np.count_nonzero(flip)) / Z
    if model.branch == "A":
        gA = config.r_A - d_sum
        gP = config.r_P - flip_sum
    else:
        gA = config.r_A
        gP = config.r_P - flip_sum - d_sum
    return Subgradient(g1, g2, gA, gP)


def scores(theta1, theta2, X, A) -> np.ndarray:
    return np.asarray(X, float) @ np.asarray(theta1, float) + np.asarray(A, float) @ np.asarray(theta2, float)


# --------------------------------------------------------------------------
# Sup-term bounds
# --------------------------------------------------------------------------


def _signed_bound(th1, th2, alpha_A, alpha_P, x_A, x_P, a_A, spec: NormSpec, kappa_A: float) -> float:
    """Upper bound on ``sup_(x,a) f(<th, (x,a)>) - transport costs``."""
    n1 = dual_norm(th1, spec.p)
    s = alpha_A + alpha_P
    if n1 > s + FEAS_TOL * max(1.0, s) or dual_norm(th2, spec.p_aux) > kappa_A * alpha_A + FEAS_TOL * max(1.0, kappa_A * alpha_A):
        return np.inf
    if min(alpha_A, alpha_P) < -FEAS_TOL:
        return np.inf
    d = norm(x_A - x_P, spec.p)
    ah = min(alpha_A, alpha_P)
    if s <= 0.0:
        lin = 0.0
    else:
        lin = (ah * n1 * d + th1 @ (alpha_A * x_A + alpha_P * x_P)) / s
    return float(logistic_f(lin + th2 @ a_A)) - ah * d


def sup_upper_bound(model: ModelPoint, x_A, x_P, a_A, y: float = 1.0, kappa_A: float = 1.0,
                    spec: NormSpec = NormSpec()) -> float:
    """Bound on the label-``y`` sup term; ``+inf`` outside the dual-feasible region.

    The loss ``f(-y <theta, .>)`` is handled by bounding with ``theta' = -y theta``.
    """
    x_A, x_P, a_A = (np.asarray(v, float).ravel() for v in (x_A, x_P, a_A))
    sgn = -float(y)
    return _signed_bound(sgn * model.theta1, sgn * model.theta2, model.alpha_A, model.alpha_P,
                         x_A, x_P, a_A, spec, kappa_A)


def pair_sup_upper_bound(model: ModelPoint, x_A, x_P, a_A, y_P: float, kappa_A: float,
                         kappa_P: float, spec: NormSpec = NormSpec(),
                         flip_cost_doubling: bool = False) -> float:
    """Bound on the full pair sup, which also ranges over the label at cost ``c``."""
    c = (2.0 if flip_cost_doubling else 1.0) * model.alpha_P * kappa_P
    keep = sup_upper_bound(model, x_A, x_P, a_A, y_P, kappa_A, spec)
    flip = sup_upper_bound(model, x_A, x_P, a_A, -y_P, kappa_A, spec) - c
    return max(keep, flip)


def pair_surrogate(model: ModelPoint, x_A, x_P, a_A, y_P: float, kappa_P: float,
                   flip_cost_doubling: bool = False, spec: NormSpec = NormSpec()) -> float:
    """Pair term from raw vectors (no dataset containers)."""
    x_A, x_P, a_A = (np.asarray(v, float).ravel() for v in (x_A, x_P, a_A))
    x_hat = x_P if model.branch == "A" else x_A
    t = float(model.theta1 @ x_hat + model.theta2 @ a_A)
    c = (2.0 if flip_cost_doubling else 1.0) * model.alpha_P * kappa_P
    return float(robust_label_term(t, y_P, c)) - model.alpha_hat * norm(x_A - x_P, spec.p)


@dataclass(frozen=True)
class GapCertificate:
    lower: float
    upper: float
    budget: float

    @property
    def holds(self) -> bool:
        return self.upper - self.lower <= self.budget + 1e-9


def gap_certificate(model: ModelPoint, x_A, x_P, a_A, y_P: float, kappa_A: float, kappa_P: float,
                    spec: NormSpec = NormSpec(), flip_cost_doubling: bool = False) -> GapCertificate:
    x_A, x_P = np.asarray(x_A, float).ravel(), np.asarray(x_P, float).ravel()
    lower = pair_surrogate(model, x_A, x_P, a_A, y_P, kappa_P, flip_cost_doubling, spec)
    upper = pair_sup_upper_bound(model, x_A, x_P, a_A, y_P, kappa_A, kappa_P, spec, flip_cost_doubling)
    return GapCertificate(lower, upper, 2.0 * model.alpha_hat * norm(x_A - x_P, spec.p))


# --------------------------------------------------------------------------
# Brute-force grid oracle
# --------------------------------------------------------------------------


def _box_grid(anchors, resolution: float, margin: float) -> np.ndarray:
    """Regular grid over the bounding box of ``anchors`` padded by ``margin``,
    with the anchors themselves appended."""
    anchors = np.atleast_2d(np.asarray(anchors, float))
    dim = anchors.shape[1]
    if dim == 0:
        return np.zeros((1, 0))
    lo = anchors.min(axis=0) - margin
    hi = anchors.max(axis=0) + margin
    axes = [np.arange(np.floor(l / resolution), np.ceil(h / resolution) + 1) * resolution
            for l, h in zip(lo, hi)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    return np.vstack([mesh, anchors])


def _pareto(gain: np.ndarray, cost: np.ndarray, lipschitz: float = 1.0):
    """Indices of grid points that can still attain the maximum of
    ``g(gain) - cost`` for any increasing ``lipschitz``-Lipschitz ``g``.

    Points that cost more than the cheapest point by at least their extra
    gain times ``lipschitz`` are dropped first; among the survivors only the
    (higher gain, lower cost) Pareto frontier is kept.
    """
    i0 = int(np.argmin(cost))
    cand = np.flatnonzero(cost - cost[i0] < lipschitz * np.maximum(gain - gain[i0], 0.0))
    cand = np.append(cand, i0)
    order = cand[np.argsort(-gain[cand], kind="stable")]
    c_sorted = cost[order]
    best = np.minimum.accumulate(c_sorted)
    keep = np.ones(order.size, dtype=bool)
    keep[1:] = c_sorted[1:] < best[:-1]
    return order[keep]


@dataclass(frozen=True)
class Grid:
    resolution: float = 0.01
    margin: float = 3.0
    max_dim: int = 4


class _GridCache:
    """Grid points and their transport costs for one pair, reused across labels."""

    def __init__(self, model: ModelPoint, x_A, x_P, a_A, kappa_A, spec, grid: Grid):
        self.X = _box_grid(np.vstack([x_A, x_P]), grid.resolution, grid.margin)
        self.cX = (model.alpha_A * np.linalg.norm(self.X - x_A, ord=spec.p, axis=1)
                   + model.alpha_P * np.linalg.norm(self.X - x_P, ord=spec.p, axis=1))
        if a_A.size:
            self.Aa = _box_grid(a_A[None, :], grid.resolution, grid.margin)
            self.cA = model.alpha_A * kappa_A * np.linalg.norm(self.Aa - a_A, ord=spec.p_aux, axis=1)
        else:
            self.Aa = np.zeros((1, 0))
            self.cA = np.zeros(1)

    def sup(self, th1, th2, weight: float = 1.0) -> float:
        """``max over grid of weight * f(<th1,x> + <th2,a>) - costs`` (weight > 0)."""
        u = self.X @ th1
        w = self.Aa @ th2
        ix = _pareto(u, self.cX, weight)
        ia = _pareto(w, self.cA, weight)
        val = weight * logistic_f(u[ix][:, None] + w[ia][None, :]) - self.cX[ix][:, None] - self.cA[ia][None, :]
        return float(val.max())


def _check_dims(m1, m2, grid: Grid):
    if m1 + m2 > grid.max_dim:
        raise ValueError(f"grid oracle refuses m1 + m2 = {m1 + m2} > {grid.max_dim}")


def sup_bruteforce(model: ModelPoint, x_A, x_P, a_A, y: float = 1.0, kappa_A: float = 1.0,
                   grid: Grid = Grid(), spec: NormSpec = NormSpec()) -> float:
    """Grid maximum of ``f(-y <theta,(x,a)>)`` minus both transport costs."""
    x_A, x_P, a_A = (np.asarray(v, float).ravel() for v in (x_A, x_P, a_A))
    _check_dims(x_A.size, a_A.size, grid)
    cache = _GridCache(model, x_A, x_P, a_A, kappa_A, spec, grid)
    return cache.sup(-y * model.theta1, -y * model.theta2)


def pair_sup_bruteforce(model: ModelPoint, x_A, x_P, a_A, y_P: float, kappa_A: float, kappa_P: float,
                        grid: Grid = Grid(), spec: NormSpec = NormSpec(),
                        flip_cost_doubling: bool = False) -> float:
    """Grid estimate of the full pair sup including the label flip."""
    x_A, x_P, a_A = (np.asarray(v, float).ravel() for v in (x_A, x_P, a_A))
    _check_dims(x_A.size, a_A.size, grid)
    cache = _GridCache(model, x_A, x_P, a_A, kappa_A, spec, grid)
    c = (2.0 if flip_cost_doubling else 1.0) * model.alpha_P * kappa_P
    keep = cache.sup(-y_P * model.theta1, -y_P * model.theta2)
    flip = cache.sup(y_P * model.theta1, y_P * model.theta2) - c
    return max(keep, flip)
