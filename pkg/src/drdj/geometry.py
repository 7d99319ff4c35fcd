"""Norms, ground metrics, kNN match sets and the exact transport certificate."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyDatasetError, InfeasibleError

__all__ = [
    "NormSpec", "MetricParams", "MatchSet", "TransportPlan", "FeasibilityCertificate",
    "WitnessCoupling", "norm", "dual_norm", "dist_A", "dist_P", "pairwise_X",
    "build_match_set", "wasserstein_X", "check_feasibility", "feasibility_witness_coupling",
]


@dataclass(frozen=True)
class NormSpec:
    """Exponent ``p`` for the shared features and ``p_aux`` for auxiliary ones."""

    p: float = 2.0
    p_aux: float = 2.0

    def __post_init__(self):
        for e in (self.p, self.p_aux):
            if not (1.0 < e < np.inf):
                raise ValueError("norm exponents must lie in (1, inf)")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def q_aux(self) -> float:
        return self.p_aux / (self.p_aux - 1.0)

    @property
    def euclidean(self) -> bool:
        return self.p == 2.0 and self.p_aux == 2.0


@dataclass(frozen=True)
class MetricParams:
    kappa_A: float = 1.0
    kappa_P: float = 1.0

    def __post_init__(self):
        if self.kappa_A < 0 or self.kappa_P < 0:
            raise ValueError("kappa_A and kappa_P must be non-negative")


def norm(v, p: float = 2.0) -> float:
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        return 0.0
    if p == 2.0:
        return float(np.sqrt(np.dot(v, v)))
    return float(np.linalg.norm(v, ord=p))


def dual_norm(v, p: float = 2.0) -> float:
    """Dual of the ``p``-norm, i.e. the ``q``-norm with ``1/p + 1/q = 1``."""
    if p == 2.0:
        return norm(v, 2.0)
    return norm(v, p / (p - 1.0))


def _check_same(u, v, what):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ValueError(f"{what}: dimension mismatch {u.shape} vs {v.shape}")
    return u, v


def dist_A(z, z2, spec: NormSpec = NormSpec(), kappa_A: float = 1.0) -> float:
    """``||x - x'||_p + kappa_A ||a - a'||_{p'}`` for ``z = (x, a)``."""
    x, x2 = _check_same(z[0], z2[0], "dist_A x")
    a, a2 = _check_same(z[1], z2[1], "dist_A a")
    return norm(x - x2, spec.p) + kappa_A * norm(a - a2, spec.p_aux)


def dist_P(z, z2, spec: NormSpec = NormSpec(), kappa_P: float = 1.0) -> float:
    """``||x - x'||_p + kappa_P |y - y'|`` for ``z = (x, y)``; a label flip costs ``2 kappa_P``."""
    x, x2 = _check_same(z[0], z2[0], "dist_P x")
    return norm(x - x2, spec.p) + kappa_P * abs(float(z[1]) - float(z2[1]))


def pairwise_X(XA, XP, p: float = 2.0) -> np.ndarray:
    XA = np.atleast_2d(np.asarray(XA, dtype=float))
    XP = np.atleast_2d(np.asarray(XP, dtype=float))
    if XA.shape[1] != XP.shape[1]:
        raise ValueError("feature dimensions differ")
    if p == 2.0:
        return cdist(XA, XP, "euclidean")
    return cdist(XA, XP, "minkowski", p=p)


# --------------------------------------------------------------------------
# Match set
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchSet:
    """kNN pair set. ``i`` indexes the auxiliary sample, ``j`` the labeled one
    (both 0-based); ``d[t]`` is the feature distance of pair ``t``."""

    i: np.ndarray
    j: np.ndarray
    d: np.ndarray
    k: int
    n_A: int
    n_P: int

    def __len__(self):
        return int(self.i.size)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "n_A": self.n_A, "n_P": self.n_P,
            "pairs": [{"i": int(a), "j": int(b), "d": float(c)}
                      for a, b, c in zip(self.i, self.j, self.d)],
        }

    @classmethod
    def from_dict(cls, obj) -> "MatchSet":
        pairs = obj["pairs"]
        return cls(np.array([p["i"] for p in pairs], dtype=int),
                   np.array([p["j"] for p in pairs], dtype=int),
                   np.array([p["d"] for p in pairs], dtype=float),
                   int(obj["k"]), int(obj["n_A"]), int(obj["n_P"]))


def _knn_columns(D: np.ndarray, k: int) -> np.ndarray:
    """For each column j, the ``k`` row indices nearest; ties to lower index."""
    order = np.argsort(D, axis=0, kind="stable")
    return order[: min(k, D.shape[0])]


def build_match_set(XA, XP, k: int = 1, spec: NormSpec = NormSpec()) -> MatchSet:
    """Union of kNN pairs in both directions between ``XA`` and ``XP`` rows."""
    if k < 1:
        raise ValueError("k must be >= 1")
    XA = np.atleast_2d(np.asarray(XA, dtype=float))
    XP = np.atleast_2d(np.asarray(XP, dtype=float))
    if XA.shape[0] == 0 or XP.shape[0] == 0:
        raise EmptyDatasetError("match set needs two non-empty samples")
    D = pairwise_X(XA, XP, spec.p)
    n_A, n_P = D.shape
    mask = np.zeros((n_A, n_P), dtype=bool)
    near_i = _knn_columns(D, k)             # (k, n_P): auxiliary rows near each labeled row
    mask[near_i, np.arange(n_P)[None, :]] = True
    near_j = _knn_columns(D.T, k)           # (k, n_A): labeled rows near each auxiliary row
    mask[np.arange(n_A)[None, :], near_j] = True
    ii, jj = np.nonzero(mask)               # row-major, sorted by (i, j)
    return MatchSet(ii, jj, D[ii, jj], int(k), n_A, n_P)


# --------------------------------------------------------------------------
# Optimal transport
# --------------------------------------------------------------------------


def _emd():
    # POT probes every installed array backend on import; only numpy is used here.
    for name in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    from ot.lp import emd

    return emd


@dataclass(frozen=True)
class TransportPlan:
    mass: np.ndarray
    cost: float

    def to_dict(self, threshold: float = 0.0) -> dict:
        ii, jj = np.nonzero(self.mass > threshold)
        return {"cost": float(self.cost), "shape": list(self.mass.shape),
                "support": [{"i": int(a), "j": int(b), "mass": float(self.mass[a, b])}
                            for a, b in zip(ii, jj)]}


def wasserstein_X(XA, XP, spec: NormSpec = NormSpec()) -> TransportPlan:
    """Exact optimal coupling of the two uniform empirical feature laws."""
    XA = np.atleast_2d(np.asarray(XA, dtype=float))
    XP = np.atleast_2d(np.asarray(XP, dtype=float))
    if XA.shape[0] == 0 or XP.shape[0] == 0:
        raise EmptyDatasetError("transport needs two non-empty samples")
    C = pairwise_X(XA, XP, spec.p)
    n_A, n_P = C.shape
    a = np.full(n_A, 1.0 / n_A)
    b = np.full(n_P, 1.0 / n_P)
    mass = _emd()(a, b, C, numItermax=max(100000, 50 * n_A * n_P))
    mass = np.maximum(mass, 0.0)
    return TransportPlan(mass, float(np.sum(mass * C)))


@dataclass(frozen=True)
class FeasibilityCertificate:
    feasible: bool
    distance: float
    r_A: float
    r_P: float
    witness: TransportPlan

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "distance": self.distance,
                "r_A": self.r_A, "r_P": self.r_P, "witness": self.witness.to_dict()}


def check_feasibility(XA, XP, r_A: float, r_P: float, spec: NormSpec = NormSpec()) -> FeasibilityCertificate:
    """The two balls intersect iff the feature-marginal transport cost is at most ``r_A + r_P``."""
    if r_A < 0 or r_P < 0:
        raise ValueError("radii must be non-negative")
    plan = wasserstein_X(XA, XP, spec)
    return FeasibilityCertificate(bool(plan.cost <= r_A + r_P), plan.cost, float(r_A), float(r_P), plan)


@dataclass(frozen=True)
class WitnessCoupling:
    """Intermediate points ``x*`` with weights, and their transport costs to each anchor."""

    i: np.ndarray
    j: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    cost_A: float
    cost_P: float


def feasibility_witness_coupling(plan: TransportPlan, XA, XP, r_A: float, r_P: float,
                                 spec: NormSpec = NormSpec()) -> WitnessCoupling:
    """Place each transported unit on the segment between its endpoints so the
    total cost splits in proportion ``r_A : r_P``."""
    total = r_A + r_P
    if total <= 0:
        raise InfeasibleError("r_A + r_P must be positive")
    if plan.cost > total + 1e-12:
        raise InfeasibleError(f"transport cost {plan.cost!r} exceeds r_A + r_P = {total!r}")
    XA = np.atleast_2d(np.asarray(XA, dtype=float))
    XP = np.atleast_2d(np.asarray(XP, dtype=float))
    ii, jj = np.nonzero(plan.mass > 0)
    w = plan.mass[ii, jj]
    lam = r_A / total
    pts = XA[ii] - lam * (XA[ii] - XP[jj])
    dA = np.linalg.norm(XA[ii] - pts, ord=spec.p, axis=1)
    dP = np.linalg.norm(XP[jj] - pts, ord=spec.p, axis=1)
    return WitnessCoupling(ii, jj, pts, w, float(w @ dA), float(w @ dP))
