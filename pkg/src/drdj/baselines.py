"""Logistic-regression baselines trained on the labeled sample alone."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np
from scipy.special import expit

from .objective import ModelPoint, logistic_f
from .projection import project_norm_cone
from .solver import TrainedModel, run_pgd

Kind = Literal["lr", "rlr", "drlr"]


@dataclass(frozen=True)
class BaselineConfig:
    kind: Kind = "lr"
    lam: float = 0.0          # RLR penalty weight
    r: float = 0.0            # DRLR radius
    kappa: float = 0.0        # DRLR label-flip cost
    T: int = 1500
    step: float = 7e-2
    seed: int = 0
    squared: bool = False     # RLR: penalize ||theta||^2 instead of ||theta||
    init_lambda: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("lr", "rlr", "drlr"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        for name in ("lam", "r", "kappa", "init_lambda"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.T < 1 or not self.step > 0:
            raise ValueError("T must be >= 1 and step positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d) -> "BaselineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown baseline config keys: {sorted(unknown)}")
        return cls(**d)

    def with_(self, **kw) -> "BaselineConfig":
        return replace(self, **kw)


# Objectives over flat parameter vectors ------------------------------------


def lr_loss(theta, X, y) -> float:
    return float(np.mean(logistic_f(-y * (X @ theta))))


def lr_grad(theta, X, y) -> np.ndarray:
    s = y * (X @ theta)
    return -(y * expit(-s)) @ X / X.shape[0]


def rlr_loss(theta, X, y, lam, squared=False) -> float:
    nt = float(np.linalg.norm(theta))
    return lr_loss(theta, X, y) + lam * (nt * nt if squared else nt)


def rlr_grad(theta, X, y, lam, squared=False) -> np.ndarray:
    g = lr_grad(theta, X, y)
    if squared:
        return g + 2.0 * lam * theta
    nt = np.linalg.norm(theta)
    return g + (lam * theta / nt if nt > 0 else 0.0)


def drlr_loss(z, X, y, r, kappa) -> float:
    """``lambda r + mean max(f(-y t), f(y t) - lambda kappa)`` with ``z = (theta, lambda)``."""
    theta, lam = z[:-1], z[-1]
    s = y * (X @ theta)
    return float(lam * r + np.mean(logistic_f(-s) + np.maximum(s - lam * kappa, 0.0)))


def drlr_grad(z, X, y, r, kappa) -> np.ndarray:
    theta, lam = z[:-1], z[-1]
    s = y * (X @ theta)
    flip = (s - lam * kappa) > 0.0
    w = y * (flip - expit(-s))
    g_theta = w @ X / X.shape[0]
    g_lam = r - kappa * np.mean(flip)
    return np.append(g_theta, g_lam)


def project_drlr(z) -> np.ndarray:
    """Projection onto ``{ ||theta|| <= lambda }``."""
    x, u = project_norm_cone(z[None, :-1], z[-1:], 1.0)
    return np.append(x[0], u[0])


# Training entry points -----------------------------------------------------


def _wrap(kind, theta, m1, objective, trace, cfg, extra=None) -> TrainedModel:
    theta = np.asarray(theta, float)
    mp = ModelPoint(theta[:m1], theta[m1:], 0.0, 0.0, "A")
    return TrainedModel(kind, mp, float(objective), {"main": trace}, cfg.to_dict(), None,
                        extra or {}, uses_aux=theta.size > m1)


def _check(X, y):
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError("need at least one row and matching label count")
    return X, y


def train_lr(X, y, cfg: BaselineConfig = BaselineConfig(), m1: Optional[int] = None) -> TrainedModel:
    """Plain logistic regression by full-batch gradient descent from ``theta = 0``.

    ``m1`` splits the coefficient vector into shared and auxiliary blocks when
    auxiliary columns were appended to ``X``.
    """
    X, y = _check(X, y)
    th, trace = run_pgd(np.zeros(X.shape[1]), lambda t: lr_loss(t, X, y), lambda t: lr_grad(t, X, y),
                        lambda t: t, cfg.T, cfg.step)
    return _wrap("lr", th, X.shape[1] if m1 is None else m1, lr_loss(th, X, y), trace, cfg)


def prox_penalty(theta, tau: float, squared: bool = False) -> np.ndarray:
    """Proximal map of ``tau * ||theta||`` (block soft-threshold) or ``tau * ||theta||^2``."""
    if squared:
        return theta / (1.0 + 2.0 * tau)
    nt = float(np.linalg.norm(theta))
    if nt <= tau:
        return np.zeros_like(theta)
    return theta * (1.0 - tau / nt)


def train_rlr(X, y, cfg: BaselineConfig, m1: Optional[int] = None) -> TrainedModel:
    """Logistic regression plus ``lam * ||theta||`` (or ``lam * ||theta||^2``).

    Proximal gradient descent: a gradient step on the logistic loss followed
    by the proximal map of the penalty, so large ``lam`` drives ``theta`` to
    zero instead of oscillating around the kink.
    """
    X, y = _check(X, y)
    lam, sq = cfg.lam, cfg.squared
    tau = cfg.step * lam
    th, trace = run_pgd(np.zeros(X.shape[1]), lambda t: rlr_loss(t, X, y, lam, sq),
                        lambda t: lr_grad(t, X, y), lambda t: prox_penalty(t, tau, sq), cfg.T, cfg.step)
    return _wrap("rlr", th, X.shape[1] if m1 is None else m1, rlr_loss(th, X, y, lam, sq), trace, cfg)


def train_drlr(X, y, cfg: BaselineConfig) -> TrainedModel:
    """Single-anchor Wasserstein-robust logistic regression over ``(theta, lambda)``."""
    X, y = _check(X, y)
    z0 = np.append(np.zeros(X.shape[1]), cfg.init_lambda)
    z, trace = run_pgd(z0, lambda z: drlr_loss(z, X, y, cfg.r, cfg.kappa),
                       lambda z: drlr_grad(z, X, y, cfg.r, cfg.kappa), project_drlr, cfg.T, cfg.step)
    return _wrap("drlr", z[:-1], X.shape[1], drlr_loss(z, X, y, cfg.r, cfg.kappa), trace, cfg,
                 {"lambda": float(z[-1])})


def train_baseline(X, y, cfg: BaselineConfig, m1: Optional[int] = None) -> TrainedModel:
    if cfg.kind == "lr":
        return train_lr(X, y, cfg, m1)
    if cfg.kind == "rlr":
        return train_rlr(X, y, cfg, m1)
    return train_drlr(X, y, cfg)
