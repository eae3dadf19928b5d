"""l1-regularized GLMs and the SVM dual written as finite-sum problems over polytopes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, gammaln

from .. import erm
from ..erm import ErmProblem
from ..polytopes import box, lifted_l1_ball

LOSSES = ("square", "logistic", "poisson")


@dataclass(frozen=True)
class LiftedL1Spec:
    """``min_beta (1/n) sum_i loss(y_i, x_i^T beta) + lam ||beta||_1``.

    The squared loss is ``(y - t)^2 / 2``; logistic labels are in {-1, +1}
    ({0, 1} is accepted and mapped to {-1, +1}); the Poisson loss is the
    negative log-likelihood ``exp(t) - y t + log(y!)``.  ``radius`` bounds
    ``||beta||_1`` and defaults to ``loss(0) / lam``, which cannot cut off
    the regularized optimum.
    """

    loss: str
    X: np.ndarray
    y: np.ndarray
    lam: float
    radius: Optional[float] = None


def loss_at_zero(loss: str, y) -> float:
    """Average loss at ``beta = 0``."""
    y = np.asarray(y, dtype=float)
    if loss == "square":
        return float(np.mean(0.5 * y ** 2))
    if loss == "logistic":
        return float(np.log(2.0))
    if loss == "poisson":
        return float(np.mean(1.0 + gammaln(y + 1.0)))
    raise ValueError(f"unknown loss {loss!r}")


def default_radius(spec: LiftedL1Spec) -> float:
    return loss_at_zero(spec.loss, spec.y) / spec.lam


def lift_l1(spec: LiftedL1Spec):
    """Rewrite an l1-regularized GLM over the lifted ball ``|beta_i| <= u_i, sum(u) <= R``.

    The lifted variable is ``x = (beta, u)``; the penalty becomes the linear
    term ``lam * sum(u)``.  For the logistic and Poisson losses the
    per-component curvature bounds are those valid on ``|t| <= R max|x_ij|``.

    Returns
    -------
    problem : ErmProblem
    polytope : PolytopeSpec
    """
    if spec.loss not in LOSSES:
        raise ValueError(f"unknown loss {spec.loss!r}")
    if not spec.lam > 0:
        raise ValueError("penalty must be positive")
    X = np.atleast_2d(np.asarray(spec.X, dtype=float))
    y = np.asarray(spec.y, dtype=float).ravel()
    n, p0 = X.shape
    if y.shape != (n,):
        raise ValueError("responses do not match the design")
    R = default_radius(spec) if spec.radius is None else float(spec.radius)
    if not R > 0:
        raise ValueError("radius must be positive")
    tmax = R * np.max(np.abs(X), axis=1)
    if spec.loss == "square":
        comps = [erm.quadratic_half(v) for v in y]
    elif spec.loss == "logistic":
        s = expit(tmax)
        comps = [erm.logistic(v, sigma=float(si * (1 - si)), lips=0.25) for v, si in zip(y, s)]
    else:
        comps = [erm.poisson(v, sigma=float(np.exp(-tm)), lips=float(np.exp(tm))) for v, tm in zip(y, tmax)]
    A = np.hstack([X, np.zeros((n, p0))])
    b = np.concatenate([np.zeros(p0), np.full(p0, spec.lam)])
    return ErmProblem(comps, A, b), lifted_l1_ball(R, p0)


def split_lifted(x, p0=None):
    """``(beta, u)`` halves of a lifted point."""
    x = np.asarray(x, dtype=float)
    p0 = x.size // 2 if p0 is None else p0
    return x[:p0], x[p0:]


def l1_objective(spec: LiftedL1Spec, beta) -> float:
    """Original (unlifted) regularized objective."""
    X = np.asarray(spec.X, float)
    y = np.asarray(spec.y, float)
    t = X @ beta
    if spec.loss == "square":
        loss = 0.5 * (y - t) ** 2
    elif spec.loss == "logistic":
        yy = np.where(y > 0, 1.0, -1.0)
        loss = np.logaddexp(0.0, -yy * t)
    else:
        loss = np.exp(t) - y * t + gammaln(y + 1.0)
    return float(np.mean(loss) + spec.lam * np.abs(beta).sum())


def build_svm_dual(labels, instances, C: float):
    """SVM dual ``min_{0 <= alpha <= C} ||sum_i alpha_i y_i z_i||^2 / 2 - sum(alpha)``.

    One quadratic component per feature coordinate: with ``M`` the matrix
    whose columns are ``y_i z_i``, the quadratic term is
    ``sum_j (M_j . alpha)^2 / 2``, written as the average of ``d`` components
    scaled by ``d``.
    """
    if not C > 0:
        raise ValueError("box bound C must be positive")
    Z = np.atleast_2d(np.asarray(instances, dtype=float))
    y = np.asarray(labels, dtype=float).ravel()
    if Z.shape[0] != y.size:
        raise ValueError("one label per instance")
    if not np.any(Z):
        raise ValueError("all instances are zero")
    M = (Z * y[:, None]).T  # d x l
    d, l = M.shape
    comps = [erm.quadratic_half(0.0, scale=float(d)) for _ in range(d)]
    return ErmProblem(comps, M, -np.ones(l)), box(np.zeros(l), np.full(l, float(C)))
