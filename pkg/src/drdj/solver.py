"""Two-branch projected gradient descent for the data-join surrogate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit

from .data import AuxDataset, LabeledDataset
from .errors import NumericalError
from .geometry import FeasibilityCertificate, check_feasibility
from .objective import JoinProblem, ModelPoint, SolverConfig, omega, omega_subgradient
from .projection import FeasibleSetSpec, project, project_arrays


class InfeasibleRadiiWarning(UserWarning):
    """The radii are too small for the two Wasserstein balls to intersect."""


@dataclass
class TrainedModel:
    """A fitted linear classifier ``sign(<theta1, x> + <theta2, a>)``.

    ``kind`` names the method. ``trace`` maps a chain name to its
    per-iteration objective values. ``extra`` holds method-specific scalars.
    ``stats`` optionally stores the standardization fitted on training data.
    """

    kind: str
    model: ModelPoint
    objective: float
    trace: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    stats: Optional[dict] = None
    extra: dict = field(default_factory=dict)
    uses_aux: bool = True

    def to_dict(self, trace_limit: Optional[int] = None) -> dict:
        tr = {}
        for k, v in self.trace.items():
            v = np.asarray(v, float)
            if trace_limit is not None and v.size > trace_limit:
                v = v[-trace_limit:]
            tr[k] = v.tolist()
        return {"version": 1, "kind": self.kind, "model": self.model.to_dict(),
                "objective": self.objective, "trace": tr, "config": self.config,
                "stats": self.stats, "extra": self.extra, "uses_aux": self.uses_aux}

    @classmethod
    def from_dict(cls, d) -> "TrainedModel":
        return cls(d["kind"], ModelPoint.from_dict(d["model"]), float(d["objective"]),
                   {k: np.asarray(v, float) for k, v in d.get("trace", {}).items()},
                   d.get("config", {}), d.get("stats"), d.get("extra", {}), d.get("uses_aux", True))


class Prediction(NamedTuple):
    score: float
    label: int


def decision_scores(model: TrainedModel, X, A=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, float))
    th1, th2 = model.model.theta1, model.model.theta2
    if X.shape[1] != th1.size:
        raise ValueError(f"expected {th1.size} features, got {X.shape[1]}")
    s = X @ th1
    if th2.size:
        if A is None:
            raise ValueError(f"model needs {th2.size} auxiliary features")
        A = np.asarray(A, float).reshape(X.shape[0], -1)
        if A.shape[1] != th2.size:
            raise ValueError(f"expected {th2.size} auxiliary features, got {A.shape[1]}")
        s = s + A @ th2
    return s


def predict_labels(model: TrainedModel, X, A=None) -> np.ndarray:
    """Labels in ``{-1, +1}``; a zero score is labeled ``+1``."""
    return np.where(decision_scores(model, X, A) >= 0.0, 1, -1)


def predict(model: TrainedModel, x, a=None) -> Prediction:
    a_row = None if a is None else np.asarray(a, float)[None, :]
    s = float(decision_scores(model, np.asarray(x, float)[None, :], a_row)[0])
    return Prediction(s, 1 if s >= 0.0 else -1)


# --------------------------------------------------------------------------
# Generic projected gradient loop
# --------------------------------------------------------------------------


def step_size(config_step: float, schedule: str, t: int) -> float:
    """Step for iteration ``t`` (1-based)."""
    if schedule == "sqrt":
        return config_step / np.sqrt(t)
    return config_step


def run_pgd(x0: np.ndarray, value: Callable, grad: Callable, proj: Callable, T: int, step: float,
            schedule: str = "constant", iterate: str = "last",
            on_iterate: Optional[Callable] = None):
    """Projected (sub)gradient descent on flat vectors.

    Returns ``(x_out, trace)`` where ``trace[t]`` is the objective at the
    ``t``-th iterate (``trace[0]`` is the start). ``x_out`` is the last
    iterate or the running average of iterates ``1..T``.
    """
    x = proj(np.asarray(x0, float))
    trace = np.empty(T + 1)
    trace[0] = value(x)
    avg = np.zeros_like(x)
    for t in range(1, T + 1):
        g = grad(x)
        x = proj(x - step_size(step, schedule, t) * g)
        v = value(x)
        if not (np.isfinite(v) and np.all(np.isfinite(x))):
            raise NumericalError(f"non-finite objective at iteration {t}", iteration=t)
        trace[t] = v
        avg += (x - avg) / t
        if on_iterate is not None:
            on_iterate(t, x)
    return (avg if iterate == "averaged" else x), trace


# --------------------------------------------------------------------------
# Data-join training
# --------------------------------------------------------------------------


@dataclass
class ChainResult:
    model: ModelPoint
    objective: float
    trace: np.ndarray


def _value_and_grad(problem: JoinProblem, config: SolverConfig, branch: str):
    """Flat-vector objective and subgradient sharing one pass over the pairs.

    Mirrors :func:`omega` and :func:`omega_subgradient`; the two are checked
    against each other in the tests.
    """
    m1, m2 = problem.m1, problem.m2
    x_hat = problem.x_hat(branch)
    A, y, d = problem.A, problem.y, problem.d
    Z = problem.Z(config.normalization)
    d_sum = float(np.sum(d)) / Z
    kf = config.flip_factor * config.kappa_P
    memo = {}

    def evaluate(v):
        key = v.tobytes()
        if memo.get("key") == key:
            return memo["val"], memo["grad"]
        th1, th2, aA, aP = v[:m1], v[m1:m1 + m2], v[-2], v[-1]
        s = y * (x_hat @ th1 + A @ th2)
        c = kf * aP
        excess = s - c
        flip = excess > 0.0
        val = (aA * config.r_A + aP * config.r_P
               + (np.sum(np.logaddexp(0.0, -s) + np.maximum(excess, 0.0)) - min(aA, aP) * np.sum(d)) / Z)
        w = y * (flip - expit(-s))
        g = np.empty_like(v)
        g[:m1] = (w @ x_hat) / Z
        g[m1:m1 + m2] = (w @ A) / Z
        flip_sum = kf * float(np.count_nonzero(flip)) / Z
        if branch == "A":
            g[-2], g[-1] = config.r_A - d_sum, config.r_P - flip_sum
        else:
            g[-2], g[-1] = config.r_A, config.r_P - flip_sum - d_sum
        memo.update(key=key, val=float(val), grad=g)
        return memo["val"], g

    return (lambda v: evaluate(v)[0]), (lambda v: evaluate(v)[1])


def run_chain(problem: JoinProblem, config: SolverConfig, branch: str,
              init: Optional[ModelPoint] = None, on_iterate: Optional[Callable] = None) -> ChainResult:
    m1, m2 = problem.m1, problem.m2
    fs = FeasibleSetSpec(config.kappa_A, branch, 1.0, config.norm)
    if init is None:
        init = ModelPoint.zeros(m1, m2, config.init_alpha, branch)

    def as_model(v):
        return ModelPoint.from_vector(v, m1, branch)

    value, grad = _value_and_grad(problem, config, branch)

    if fs.norm.euclidean:
        def proj(v):
            t1, t2, a, b = project_arrays(v[:m1], v[m1:m1 + m2], v[-2], v[-1], config.kappa_A, branch)
            return np.concatenate([t1, t2, [a, b]])
    else:
        def proj(v):
            return project(as_model(v), fs).to_vector()

    cb = None if on_iterate is None else (lambda t, v: on_iterate(t, as_model(v)))
    x, trace = run_pgd(init.to_vector(), value, grad, proj, config.T, config.step,
                       config.step_schedule, config.iterate, cb)
    m = as_model(x)
    return ChainResult(m, omega(m, problem, config, check=False), trace)


def train(aux: AuxDataset, labeled: LabeledDataset, config: SolverConfig = SolverConfig(),
          init: Optional[ModelPoint] = None, seed: int = 0, problem: Optional[JoinProblem] = None,
          certify: bool = True, on_iterate: Optional[Callable] = None) -> TrainedModel:
    """Fit the data-join classifier by running one chain per branch and keeping the better.

    ``seed`` is accepted for interface uniformity; the default start is
    deterministic (``theta = 0``, both alphas equal to ``config.init_alpha``).
    """
    if problem is None:
        problem = JoinProblem.build(aux, labeled, config.k, config.norm)
    cert: Optional[FeasibilityCertificate] = None
    extra = {"seed": int(seed), "n_matches": len(problem.matches)}
    if certify:
        cert = check_feasibility(aux.X, labeled.X, config.r_A, config.r_P, config.norm)
        extra["feasibility"] = {"feasible": cert.feasible, "distance": cert.distance}
        if not cert.feasible:
            warnings.warn(f"radii sum {config.r_A + config.r_P!r} is below the transport distance "
                          f"{cert.distance!r}; the robust problem is infeasible", InfeasibleRadiiWarning,
                          stacklevel=2)
    chains = {}
    for br in ("A", "P"):
        start = None
        if init is not None:
            start = ModelPoint(init.theta1, init.theta2, init.alpha_A, init.alpha_P, br)
        cb = None if on_iterate is None else (lambda t, m, br=br: on_iterate(br, t, m))
        chains[br] = run_chain(problem, config, br, start, cb)
    best = min(("A", "P"), key=lambda b: (chains[b].objective, b != "A"))
    extra["branch_objectives"] = {b: chains[b].objective for b in chains}
    return TrainedModel("dj", chains[best].model, chains[best].objective,
                        {b: chains[b].trace for b in chains}, config.to_dict(), None, extra, True)
