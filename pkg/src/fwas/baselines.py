"""Reference methods for the experiments: vanilla FW, block-coordinate FW and smoothed proximal gradient."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .applications.gflasso import GflassoInstance
from .applications.ssvm import SsvmConfig, SsvmDataset, run_ssvm_bcfwas
from .erm import ErmProblem
from .polytopes import PolytopeSpec
from .solver import RunResult, SolverConfig, run_fw_away
from .trace import TraceRecord


def run_vanilla_fw(problem: ErmProblem, spec: PolytopeSpec, config: SolverConfig) -> RunResult:
    """Frank-Wolfe without away-steps (same sampling, step rule and trace)."""
    return run_fw_away(problem, spec, dataclasses.replace(config, away_steps=False))


def run_bcfw(ds: SsvmDataset, lam: float, config: SsvmConfig):
    """Block-coordinate FW on the structural-SVM dual: full mask, no away-steps."""
    from .erm import FullBatch

    return run_ssvm_bcfwas(ds, lam, dataclasses.replace(config, away_steps=False, mask_schedule=FullBatch()))


@dataclass
class ProxGradConfig:
    """Smoothed proximal gradient for the graph-guided fused LASSO.

    The fusion penalty is replaced by its Nesterov smoothing with parameter
    ``mu = epsilon / (2 D)``, ``D = |E| J / 2``; ``epsilon`` defaults to
    ``1e-2`` times the objective at ``B = 0``, which
    favours early progress over final accuracy.  The l1 term is handled by
    soft-thresholding with the fixed step ``1 / L_mu``.  ``accelerated``
    adds the FISTA momentum sequence.
    """

    max_passes: int = 100
    epsilon: Optional[float] = None
    mu: Optional[float] = None
    accelerated: bool = True
    record_time: bool = True


def fusion_matrix(inst: GflassoInstance) -> np.ndarray:
    """``H`` with ``Omega(B) = ||H B^T||_1`` (entrywise)."""
    K = inst.n_tasks
    H = np.zeros((len(inst.edges), K))
    for e, (m, l, r) in enumerate(inst.edges):
        H[e, m] = inst.gamma * abs(r)
        H[e, l] = -inst.gamma * abs(r) * np.sign(r)
    return H


def soft_threshold(V, tau):
    return np.sign(V) * np.maximum(np.abs(V) - tau, 0.0)


def run_prox_grad(inst: GflassoInstance, config: ProxGradConfig):
    """Smoothed proximal gradient; one full gradient (one pass) per iteration.

    Returns ``(B, trace)`` where trace rows record the true objective.
    """
    X, Y = inst.X, inst.Y
    J, K = inst.n_features, inst.n_tasks
    H = fusion_matrix(inst)
    B = np.zeros((J, K))
    f0 = inst.objective(B)
    if config.mu is not None:
        mu = float(config.mu)
    else:
        eps = 1e-2 * f0 if config.epsilon is None else float(config.epsilon)
        D = max(len(inst.edges) * J / 2.0, 1.0)
        mu = eps / (2.0 * D)
    if not mu > 0:
        raise ValueError("smoothing parameter must be positive")
    XtX = X.T @ X
    XtY = X.T @ Y
    normH2 = float(np.linalg.norm(H, 2) ** 2) if H.size else 0.0
    L = float(np.linalg.eigvalsh(XtX)[-1]) + normH2 / mu
    step = 1.0 / L
    Z, t_mom = B.copy(), 1.0
    trace = []
    start = time.perf_counter()
    n = X.shape[0] * K
    for k in range(1, config.max_passes + 1):
        obj = inst.objective(B)
        if not np.isfinite(obj):
            raise FloatingPointError(f"non-finite objective at iteration {k}")
        grad = XtX @ Z - XtY
        if H.size:
            alpha = np.clip(H @ Z.T / mu, -1.0, 1.0)
            grad = grad + (H.T @ alpha).T
        B_new = soft_threshold(Z - step * grad, step * inst.lam)
        if config.accelerated:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom ** 2))
            Z = B_new + ((t_mom - 1.0) / t_next) * (B_new - B)
            t_mom = t_next
        else:
            Z = B_new
        B = B_new
        millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
        trace.append(TraceRecord(k, obj, float("nan"), n, step, "Prox", int(np.count_nonzero(B)), float(k), millis))
    millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
    trace.append(TraceRecord(config.max_passes + 1, inst.objective(B), float("nan"), 0, 0.0, "Stop",
                             int(np.count_nonzero(B)), float(config.max_passes), millis))
    return B, trace
