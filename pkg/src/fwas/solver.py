"""Semi-stochastic Frank-Wolfe with away-steps."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .active_set import ActiveSet, InvariantError, caratheodory_reduce
from .erm import BatchSchedule, ErmProblem, FullBatch, batch_size, make_rng, sample_without_replacement
from .polytopes import PolytopeSpec, Vertex
from .trace import TraceRecord

log = logging.getLogger("fwas")

GAMMA_EPS = 1e-15


@dataclass
class SolverConfig:
    """Run parameters shared by the solvers.

    ``schedule`` is a schedule mode (``FullBatch()``, ``GeometricGrowth``,
    ``TheoremSchedule``); it is bound to the problem size at run time.
    ``record_time=False`` writes zeros in the ``millis`` column so that
    traces are byte-for-byte reproducible.
    """

    schedule: object = field(default_factory=FullBatch)
    max_iter: int = 1000
    target_gap: float = 1e-8
    seed: int = 0
    lips: Optional[float] = None
    check_every: int = 50
    initial_vertex: Optional[Vertex] = None
    caratheodory: bool = False
    debug: bool = False
    record_time: bool = True
    max_passes: Optional[float] = None
    away_steps: bool = True


@dataclass
class StepDecision:
    direction: np.ndarray
    gamma_max: float
    kind: str  # "fw" or "away"
    toward: Vertex
    p: Vertex
    u: Vertex
    gap: float


@dataclass
class RunResult:
    x: np.ndarray
    active: ActiveSet
    trace: list
    converged: bool
    gap: float

    @property
    def objective(self) -> float:
        return self.trace[-1].objective


def select_direction(g, x, active: ActiveSet, spec: PolytopeSpec, away_steps=True) -> StepDecision:
    """Choose between the FW direction ``p - x`` and the away direction ``x - u``.

    FW is taken when ``<g, p + u - 2x> <= 0`` (the FW model decrease is at
    least the away one).  A singleton active set always yields FW.
    """
    g = np.asarray(g, dtype=float)
    p = spec.lmo(g)
    u, mu_u = active.away(g)
    gap = float(g @ (x - p.coords))
    if away_steps and len(active) > 1 and mu_u < 1.0:
        if float(g @ (p.coords + u.coords - 2.0 * x)) > 0:
            return StepDecision(x - u.coords, mu_u / (1.0 - mu_u), "away", u, p, u, gap)
    return StepDecision(p.coords - x, 1.0, "fw", p, p, u, gap)


def adaptive_step(g, decision: StepDecision, L: float):
    """Step ``min(-<g, d> / (L ||d||^2), gamma_max)`` and its step label."""
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    d = decision.direction
    dd = float(d @ d)
    if dd <= 0.0:
        return 0.0, "Null"
    gamma = -float(g @ d) / (L * dd)
    gamma = max(gamma, 0.0)
    if gamma <= GAMMA_EPS:
        return 0.0, "Null"
    if gamma >= decision.gamma_max:
        return decision.gamma_max, ("FullFW" if decision.kind == "fw" else "Drop")
    return gamma, ("FW" if decision.kind == "fw" else "Away")


def initial_vertex(problem: ErmProblem, spec: PolytopeSpec) -> Vertex:
    """``lmo(grad F(0))`` when the origin is feasible, else ``lmo(b)``."""
    if spec.contains_origin():
        return spec.lmo(problem.full_gradient(np.zeros(spec.dim)))
    return spec.lmo(problem.b)


class _Images:
    """Cache of ``A v`` for vertices that are (or were recently) active."""

    def __init__(self, problem):
        self.problem = problem
        self.cache = {}

    def __call__(self, v: Vertex):
        img = self.cache.get(v.id)
        if img is None:
            img = self.problem.image(v.coords)
            self.cache[v.id] = img
        return img

    def prune(self, keep):
        if len(self.cache) > 2 * len(keep) + 16:
            self.cache = {k: v for k, v in self.cache.items() if k in keep}


def run_fw_away(problem: ErmProblem, spec: PolytopeSpec, config: SolverConfig) -> RunResult:
    """Semi-stochastic Frank-Wolfe with away-steps and adaptive step size.

    Each iteration samples ``m_k`` components without replacement, builds
    the mini-batch gradient ``g``, picks the FW or away direction, takes the
    step ``min(-<g, d>/(L ||d||^2), gamma_max)`` and updates the vertex
    representation.  The run stops after ``max_iter`` iterations, when the
    pass budget is spent, or when the exact FW gap drops to ``target_gap``.
    The exact gap is evaluated on every full-batch iteration and otherwise
    every ``check_every`` iterations.

    Returns
    -------
    RunResult
        Final iterate, active set, trace (one row per iteration plus a
        terminal ``Stop`` row), convergence flag and last exact gap.
    """
    if spec.dim != problem.p:
        raise ValueError(f"polytope dimension {spec.dim} != problem dimension {problem.p}")
    n = problem.n
    L = problem.lips_total if config.lips is None else float(config.lips)
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    schedule = BatchSchedule(n, config.schedule)
    rng = make_rng(config.seed, 0)
    v0 = config.initial_vertex if config.initial_vertex is not None else initial_vertex(problem, spec)
    active = ActiveSet.singleton(v0)
    x = v0.coords.astype(float).copy()
    images = _Images(problem)
    t = images(v0).copy()
    trace = []
    passes = 0.0
    start = time.perf_counter()
    exact_gap = np.nan
    converged = False
    k = 1
    while True:
        obj = problem.objective_from_margins(t, x)
        if not np.isfinite(obj):
            raise InvariantError(f"non-finite objective at iteration {k}")
        m = batch_size(schedule, k)
        if m < n and (k == 1 or k % config.check_every == 0):
            t = problem.margins(x)
            obj = problem.objective_from_margins(t, x)
            exact_gap = _exact_gap(problem, spec, x, t)
            if exact_gap <= config.target_gap:
                converged = True
                break
        if k > config.max_iter:
            break
        if config.max_passes is not None and passes >= config.max_passes:
            break
        if m == n:
            if k % config.check_every == 0:
                t = problem.margins(x)
                obj = problem.objective_from_margins(t, x)
            g = problem.gradient_from_margins(t)
        else:
            idx = sample_without_replacement(rng, n, m)
            g = problem.gradient_from_margins(t, idx)
        decision = select_direction(g, x, active, spec, config.away_steps)
        if m == n:
            exact_gap = decision.gap
            if exact_gap <= config.target_gap:
                converged = True
                break
        gamma, label = adaptive_step(g, decision, L)
        passes += m / n
        if gamma > 0:
            if decision.kind == "fw":
                t = t + gamma * (images(decision.p) - t)
                x = x + gamma * decision.direction
                active.update("fw", gamma, p=decision.p)
            else:
                t = t + gamma * (t - images(decision.u))
                x = x + gamma * decision.direction
                active.update("away", gamma, u=decision.u)
            if len(active) == 1:
                (v, _), = list(active)
                x = v.coords.astype(float).copy()
                t = images(v).copy()
            if config.caratheodory and len(active) > spec.dim + 1:
                active, _ = caratheodory_reduce(active, x)
            images.prune(set(active.ids))
        if config.debug:
            _check_state(spec, active, x, gamma, decision)
        millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
        trace.append(TraceRecord(k, obj, decision.gap, m, float(gamma), label, len(active), passes, millis))
        k += 1
    millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
    trace.append(TraceRecord(k, obj, float(exact_gap), 0, 0.0, "Stop", len(active), passes, millis))
    log.info("fw-away stopped at k=%d obj=%.6e gap=%.3e", k, obj, exact_gap)
    return RunResult(x, active, trace, converged, float(exact_gap))


def _exact_gap(problem, spec, x, t):
    g = problem.gradient_from_margins(t)
    p = spec.lmo(g)
    return float(g @ (x - p.coords))


def _check_state(spec, active, x, gamma, decision):
    if not 0.0 <= gamma <= decision.gamma_max + 1e-15:
        raise InvariantError(f"step {gamma} outside [0, {decision.gamma_max}]")
    feas = spec.check_feasible(x, 1e-8)
    if not feas.feasible:
        raise InvariantError(f"iterate left the polytope (violation {feas.violation:.3e})")
    active.check(x)


def fw_gap(problem: ErmProblem, spec: PolytopeSpec, x) -> float:
    """Exact Frank-Wolfe gap ``max_v <grad F(x), x - v>``."""
    x = np.asarray(x, dtype=float)
    return _exact_gap(problem, spec, x, problem.margins(x))
