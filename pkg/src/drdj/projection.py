"""Euclidean projection onto the branch feasible sets.

The set for branch A is

    { (theta1, theta2, aA, aP) : ||theta1|| <= s (aA + aP), ||theta2|| <= kappa aA,
      aA <= aP, aA >= 0, aP >= 0 }

and branch P swaps the order constraint. For a fixed ``(aA, aP)`` the best
``theta`` is a radial shrink of each block, so the projection reduces to
minimizing over two scalars

    F(a, b) = (a - a0)^2 + (b - b0)^2 + [n1 - s (a + b)]_+^2 + [n2 - kappa a]_+^2

with ``n1 = ||theta1||`` and ``n2 = ||theta2||``. ``F`` is convex,
continuously differentiable and strictly convex on each of its quadratic
pieces, so its minimizer over the polyhedron in ``(a, b)`` is the stationary
point of one piece restricted to one face. Enumerating those stationary
points, keeping the feasible ones and taking the smallest ``F`` is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .geometry import NormSpec, dual_norm
from .objective import Branch, ModelPoint

CAND_TOL = 1e-9


@dataclass(frozen=True)
class FeasibleSetSpec:
    kappa_A: float
    branch: Branch = "A"
    scale: float = 1.0
    norm: NormSpec = NormSpec()
    theta2_cone: bool = True

    def __post_init__(self):
        if self.kappa_A < 0:
            raise ValueError("kappa_A must be non-negative")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.branch not in ("A", "P"):
            raise ValueError("branch must be 'A' or 'P'")


# --------------------------------------------------------------------------
# Reduced two-scalar problem
# --------------------------------------------------------------------------


def reduced_objective(a, b, a0, b0, n1, n2, kappa, s=1.0):
    return ((a - a0) ** 2 + (b - b0) ** 2
            + np.maximum(n1 - s * (a + b), 0.0) ** 2 + np.maximum(n2 - kappa * a, 0.0) ** 2)


def closed_form_candidates(a0, b0, n1, n2, kappa):
    """Stationary points of every piece of ``F`` on every face, unit scale.

    The first eight follow the four cone cases (neither cone tight, theta2
    cone tight, theta1 cone tight, both tight), each without and then with
    the order constraint tight (``a = b = m``). The rest cover the faces
    ``a = 0``, ``b = 0`` and the origin.
    """
    k2 = kappa * kappa
    out = []
    # neither cone tight
    out.append((a0, b0))
    m = (a0 + b0) / 2.0
    out.append((m, m))
    # theta2 cone tight
    out.append(((a0 + kappa * n2) / (1.0 + k2), b0))
    m = (a0 + b0 + kappa * n2) / (2.0 + k2)
    out.append((m, m))
    # theta1 cone tight
    b = (n1 - a0 + 2.0 * b0) / 3.0
    out.append((a0 + b - b0, b))
    m = (a0 + b0 + 2.0 * n1) / 6.0
    out.append((m, m))
    # both cones tight
    a = (2.0 * a0 - b0 + n1 + 2.0 * kappa * n2) / (3.0 + 2.0 * k2)
    out.append((a, (n1 + b0 - a) / 2.0))
    m = (a0 + b0 + 2.0 * n1 + kappa * n2) / (6.0 + k2)
    out.append((m, m))
    # boundary faces of the nonnegative orthant
    for c1 in (0.0, 1.0):
        out.append((0.0, (b0 + c1 * n1) / (1.0 + c1)))
        for c2 in (0.0, 1.0):
            out.append(((a0 + c1 * n1 + c2 * kappa * n2) / (1.0 + c1 + c2 * k2), 0.0))
    out.append((0.0, 0.0))
    return out


def general_candidates(a0, b0, n1, n2, kappa, s):
    """Same enumeration as :func:`closed_form_candidates` for any scale ``s``,
    by solving each piece's normal equations numerically."""
    out = []
    for c1 in (0.0, 1.0):
        for c2 in (0.0, 1.0):
            # gradient of the piece: H @ (a, b) - g
            H = np.array([[1.0 + c1 * s * s + c2 * kappa * kappa, c1 * s * s],
                          [c1 * s * s, 1.0 + c1 * s * s]])
            g = np.array([a0 + c1 * s * n1 + c2 * kappa * n2, b0 + c1 * s * n1])
            out.append(tuple(np.linalg.solve(H, g)))
            # a = b = m
            out.append(((g[0] + g[1]) / (H.sum()),) * 2)
            # a = 0 and b = 0 faces
            out.append((0.0, g[1] / H[1, 1]))
            out.append((g[0] / H[0, 0], 0.0))
    out.append((0.0, 0.0))
    return out


def _reduced_scalar(a, b, a0, b0, n1, n2, kappa, s):
    r1 = n1 - s * (a + b)
    r2 = n2 - kappa * a
    return (a - a0) ** 2 + (b - b0) ** 2 + (r1 * r1 if r1 > 0 else 0.0) + (r2 * r2 if r2 > 0 else 0.0)


def _select(cands, a0, b0, n1, n2, kappa, s, branch):
    a0, b0, n1, n2, kappa, s = float(a0), float(b0), float(n1), float(n2), float(kappa), float(s)
    best = None
    best_val = np.inf
    for a, b in cands:
        a, b = float(a), float(b)
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        if a < -CAND_TOL or b < -CAND_TOL:
            continue
        gap = (a - b) if branch == "A" else (b - a)
        if gap > CAND_TOL:
            continue
        a, b = max(a, 0.0), max(b, 0.0)
        if gap > 0:
            a = b = 0.5 * (a + b)
        val = _reduced_scalar(a, b, a0, b0, n1, n2, kappa, s)
        if val < best_val:
            best, best_val = (a, b), val
    return best


def _shrink(v, nv, radius):
    if nv <= radius or nv == 0.0:
        return v.copy()
    return v * (radius / nv)


def project_arrays(theta1, theta2, alpha_A, alpha_P, kappa_A, branch="A", scale=1.0,
                   theta2_cone=True):
    """Exact Euclidean projection for ``p = 2``; returns ``(theta1, theta2, alpha_A, alpha_P)``."""
    theta1 = np.asarray(theta1, float)
    theta2 = np.asarray(theta2, float)
    n1 = float(np.sqrt(theta1 @ theta1))
    n2 = float(np.sqrt(theta2 @ theta2)) if theta2_cone else 0.0
    alpha_A, alpha_P, kappa_A = float(alpha_A), float(alpha_P), float(kappa_A)
    if scale == 1.0:
        cands = closed_form_candidates(alpha_A, alpha_P, n1, n2, kappa_A)
    else:
        cands = general_candidates(alpha_A, alpha_P, n1, n2, kappa_A, scale)
    sel = _select(cands, alpha_A, alpha_P, n1, n2, kappa_A, scale, branch)
    if sel is None:  # cannot happen for finite input: the origin is always a candidate
        raise FloatingPointError("projection found no feasible candidate")
    a, b = sel
    t1 = _shrink(theta1, n1, scale * (a + b))
    t2 = _shrink(theta2, n2, kappa_A * a) if theta2_cone else theta2.copy()
    return t1, t2, a, b


def project(point: ModelPoint, fs: FeasibleSetSpec) -> ModelPoint:
    """Nearest point of the branch-``fs.branch`` set (the returned point carries that branch)."""
    if not fs.norm.euclidean:
        return project_oracle(point, fs)
    t1, t2, a, b = project_arrays(point.theta1, point.theta2, point.alpha_A, point.alpha_P,
                                  fs.kappa_A, fs.branch, fs.scale, fs.theta2_cone)
    return ModelPoint(t1, t2, a, b, fs.branch)


# --------------------------------------------------------------------------
# Iterative oracle
# --------------------------------------------------------------------------


def project_norm_cone(x: np.ndarray, u: np.ndarray, c: float):
    """Batched projection of ``(x, u)`` onto ``{ ||x|| <= c u }``; rows of ``x`` are points."""
    x = np.atleast_2d(np.asarray(x, float))
    u = np.asarray(u, float).reshape(-1)
    nx = np.linalg.norm(x, axis=1)
    if c == 0.0:
        return np.zeros_like(x), u.copy()
    inside = nx <= c * u
    polar = c * nx <= -u
    r = (c * nx + u) / (1.0 + c * c)            # new u on the boundary ray
    scale = np.divide(c * r, nx, out=np.zeros_like(nx), where=nx > 0)
    x_new = x * scale[:, None]
    u_new = r.copy()
    x_new[inside] = x[inside]
    u_new[inside] = u[inside]
    x_new[polar] = 0.0
    u_new[polar] = 0.0
    return x_new, u_new


def dykstra_project(T1, T2, a, b, kappa_A, branch="A", scale=1.0, theta2_cone=True,
                    tol=1e-8, max_iter=200000):
    """Dykstra's alternating projections onto the four convex pieces of the set.

    Works on batches: ``T1`` is ``(N, m1)``, ``T2`` is ``(N, m2)``, ``a`` and
    ``b`` are length ``N``. Stops once every point moves less than ``tol``
    (Euclidean) over a full cycle.
    """
    T1 = np.array(np.atleast_2d(T1), float)
    T2 = np.array(T2, float).reshape(T1.shape[0], -1)
    a = np.array(a, float).reshape(-1)
    b = np.array(b, float).reshape(-1)
    m1 = T1.shape[1]
    z = np.hstack([T1, T2, a[:, None], b[:, None]])
    N, D = z.shape
    iA, iP = D - 2, D - 1
    n_sets = 4
    incr = np.zeros((n_sets, N, D))
    r2 = np.sqrt(0.5)

    def P_theta1(w):
        u = (w[:, iA] + w[:, iP]) * r2
        v = (w[:, iA] - w[:, iP]) * r2
        x, u = project_norm_cone(w[:, :m1], u, scale * np.sqrt(2.0))
        out = w.copy()
        out[:, :m1] = x
        out[:, iA] = (u + v) * r2
        out[:, iP] = (u - v) * r2
        return out

    def P_theta2(w):
        out = w.copy()
        if not theta2_cone or D - 2 == m1:
            return out
        x, u = project_norm_cone(w[:, m1:iA], w[:, iA], kappa_A)
        out[:, m1:iA] = x
        out[:, iA] = u
        return out

    def P_order(w):
        out = w.copy()
        diff = (w[:, iA] - w[:, iP]) if branch == "A" else (w[:, iP] - w[:, iA])
        viol = diff > 0
        mid = 0.5 * (w[viol, iA] + w[viol, iP])
        out[viol, iA] = mid
        out[viol, iP] = mid
        return out

    def P_orthant(w):
        out = w.copy()
        out[:, iA:] = np.maximum(out[:, iA:], 0.0)
        return out

    projs = (P_theta1, P_theta2, P_order, P_orthant)
    active = np.ones(N, dtype=bool)
    for it in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zc = z[idx]
        start = zc.copy()
        for s_i, P in enumerate(projs):
            y = zc + incr[s_i, idx]
            zn = P(y)
            incr[s_i, idx] = y - zn
            zc = zn
        z[idx] = zc
        moved = np.linalg.norm(zc - start, axis=1)
        active[idx[moved < tol * 1e-2]] = False
    return z[:, :m1], z[:, m1:iA], z[:, iA], z[:, iP]


def _project_slsqp(point: ModelPoint, fs: FeasibleSetSpec) -> ModelPoint:
    z0 = point.to_vector()
    m1, m2 = point.m1, point.m2
    spec = fs.norm

    def t1(z):
        return z[:m1]

    def t2(z):
        return z[m1:m1 + m2]

    cons = [
        {"type": "ineq", "fun": lambda z: fs.scale * (z[-2] + z[-1]) - dual_norm(t1(z), spec.p)},
        {"type": "ineq", "fun": lambda z: z[-2]},
        {"type": "ineq", "fun": lambda z: z[-1]},
        {"type": "ineq", "fun": (lambda z: z[-1] - z[-2]) if fs.branch == "A" else (lambda z: z[-2] - z[-1])},
    ]
    if fs.theta2_cone and m2:
        cons.append({"type": "ineq", "fun": lambda z: fs.kappa_A * z[-2] - dual_norm(t2(z), spec.p_aux)})
    # start from a strictly feasible point near the origin
    start = np.zeros_like(z0)
    start[-2:] = 1.0
    res = minimize(lambda z: 0.5 * np.sum((z - z0) ** 2), start, jac=lambda z: z - z0,
                   constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 2000})
    z = res.x
    z[-2:] = np.maximum(z[-2:], 0.0)
    return ModelPoint.from_vector(z, m1, fs.branch)


def project_oracle(point: ModelPoint, fs: FeasibleSetSpec) -> ModelPoint:
    """Iterative projection: Dykstra for ``p = 2``, SLSQP for other exponents."""
    if not fs.norm.euclidean:
        return _project_slsqp(point, fs)
    T1, T2, a, b = dykstra_project(point.theta1[None, :], point.theta2[None, :], [point.alpha_A],
                                   [point.alpha_P], fs.kappa_A, fs.branch, fs.scale, fs.theta2_cone)
    return ModelPoint(T1[0], T2[0], a[0], b[0], fs.branch)


def project_fair(theta1, theta2, alpha_A, alpha_P, gamma, branch="A", scale=1.0):
    """Projection for the fairness program: only ``theta1`` and the alphas are
    constrained; ``theta2`` and ``gamma`` pass through unchanged."""
    t1, _, a, b = project_arrays(theta1, np.zeros(0), alpha_A, alpha_P, 0.0, branch, scale,
                                 theta2_cone=False)
    return t1, np.array(theta2, float), a, b, np.array(gamma, float)
