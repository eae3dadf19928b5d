"""Experiment plumbing: reference optima, rate fits, manifests and runs."""

from __future__ import annotations

import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import erm
from .active_set import InvariantError
from .erm import ErmProblem, FullBatch, GeometricGrowth, TheoremSchedule
from .polytopes import Box, LiftedL1Ball, Product, PolytopeSpec, UnitSimplex, from_dict, unit_simplex
from .solver import SolverConfig, run_fw_away
from .trace import write_trace_csv

log = logging.getLogger("fwas")

AGREE_ABORT = 1e-6
AGREE_WARN = 1e-9
GAP_FLOOR = 1e-14
MIN_FIT_POINTS = 20


class ReferenceMismatch(InvariantError):
    """The two reference solves disagree on the optimal value."""


# ---------------------------------------------------------------------------
# projections (for the projected-gradient cross-check)


def project_simplex(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, z.size + 1)
    r = np.flatnonzero(u - css / ks > 0)[-1]
    return np.maximum(z - css[r] / (r + 1), 0.0)


def project_lifted_l1(z, radius) -> np.ndarray:
    """Projection onto ``{(beta, u): |beta_i| <= u_i, sum(u) <= R}``.

    For a multiplier ``tau`` on the budget, each pair ``(beta_i, u_i)``
    projects onto the cone ``|beta| <= u`` after shifting ``u`` by ``-tau``;
    the cone is an orthant in the rotated coordinates ``u +- beta``.
    ``tau`` is found by bisection on the budget.
    """
    z = np.asarray(z, dtype=float)
    p0 = z.size // 2
    a, c = z[:p0], z[p0:]

    def pieces(tau):
        s1 = np.maximum(0.0, c - tau + a) / 2.0
        s2 = np.maximum(0.0, c - tau - a) / 2.0
        return s1 - s2, s1 + s2

    beta, u = pieces(0.0)
    if u.sum() > radius:
        lo, hi = 0.0, float(np.max(np.abs(a) + c))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if pieces(mid)[1].sum() > radius:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-16 * max(1.0, hi):
                break
        beta, u = pieces(hi)
    return np.concatenate([beta, u])


def project_hrep(rows, rhs, z) -> np.ndarray:
    """Projection onto ``{x: rows x <= rhs}`` by SLSQP (desk scale only)."""
    z = np.asarray(z, dtype=float)
    cons = {"type": "ineq", "fun": lambda x: rhs - rows @ x, "jac": lambda x: -rows}
    res = minimize(lambda x: 0.5 * float((x - z) @ (x - z)), z, jac=lambda x: x - z,
                   constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
    return res.x


def project(spec: PolytopeSpec, z) -> np.ndarray:
    """Euclidean projection onto the polytope."""
    s = spec.structure
    if isinstance(s, UnitSimplex):
        return project_simplex(z)
    if isinstance(s, Box):
        return np.clip(z, s.lower, s.upper)
    if isinstance(s, LiftedL1Ball):
        return project_lifted_l1(z, s.radius)
    if isinstance(s, Product):
        return np.concatenate([project(b, z[sl]) for b, sl in zip(s.blocks, spec.block_slices)])
    return project_hrep(spec.rows, spec.rhs, z)


# ---------------------------------------------------------------------------
# reference optimum


def projected_gradient(problem: ErmProblem, spec: PolytopeSpec, x0=None, max_iter=100_000, tol=1e-15):
    """Accelerated projected gradient with adaptive restart; returns the final iterate."""
    L = problem.lips_total
    x = project(spec, np.zeros(spec.dim) if x0 is None else np.asarray(x0, float))
    y, t = x.copy(), 1.0
    fx = problem.objective(x)
    for _ in range(max_iter):
        x_new = project(spec, y - problem.full_gradient(y) / L)
        f_new = problem.objective(x_new)
        if f_new > fx:
            # restart the momentum from the last iterate
            y, t = x.copy(), 1.0
            x_new = project(spec, x - problem.full_gradient(x) / L)
            f_new = problem.objective(x_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        step = x_new - x
        y = x_new + ((t - 1.0) / t_new) * step
        x, t, fx = x_new, t_new, f_new
        if float(np.linalg.norm(step)) <= tol * max(1.0, float(np.linalg.norm(x))):
            break
    return x


def reference_optimum(problem: ErmProblem, spec: PolytopeSpec, max_iter=1_000_000) -> float:
    """Optimal value from two independent solves.

    A deterministic full-batch away-step run to FW gap ``1e-12`` and an
    accelerated projected-gradient run must agree within ``1e-6``
    (:class:`ReferenceMismatch` otherwise; a warning above ``1e-9``).  The
    smaller of the two values is returned.
    """
    if problem.lips_total <= 0:
        # linear objective: a vertex is optimal
        return problem.objective(spec.lmo(problem.b).coords)
    cfg = SolverConfig(schedule=FullBatch(), max_iter=max_iter, target_gap=1e-12, record_time=False)
    fw = run_fw_away(problem, spec, cfg)
    f_fw = problem.objective(fw.x)
    f_pg = problem.objective(projected_gradient(problem, spec, fw.x if not fw.converged else None))
    diff = abs(f_fw - f_pg)
    if diff > AGREE_ABORT:
        raise ReferenceMismatch(f"reference solves disagree by {diff:.3e} ({f_fw!r} vs {f_pg!r})")
    if diff > AGREE_WARN:
        warnings.warn(f"reference solves differ by {diff:.3e}", RuntimeWarning, stacklevel=2)
    return min(f_fw, f_pg)


# ---------------------------------------------------------------------------
# rates and trace alignment


@dataclass(frozen=True)
class RateFit:
    """OLS fit of ``log10(F - F*)`` against the iteration index."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple
    points: int

    @property
    def rate(self) -> float:
        """Per-iteration contraction factor ``10^slope``."""
        return 10.0 ** self.slope


def _objectives(trace):
    if len(trace) and hasattr(trace[0], "objective"):
        return np.array([r.objective for r in trace if r.step_kind != "Stop"], dtype=float)
    return np.asarray(trace, dtype=float)


def rate_fit(trace, f_star: float, window=None) -> RateFit:
    """Fit the log-linear decay of the suboptimality over ``window``.

    Parameters
    ----------
    trace : sequence of TraceRecord or array_like
        Objective values indexed by iteration (``Stop`` rows are ignored).
    f_star : float
    window : (int, int), optional
        Inclusive index range; the whole trace by default.

    Raises
    ------
    ValueError
        If fewer than 20 points in the window have ``F - F* > 1e-14``.
    """
    vals = _objectives(trace) - f_star
    lo, hi = (0, vals.size - 1) if window is None else (int(window[0]), int(window[1]))
    ks = np.arange(vals.size)
    keep = (ks >= lo) & (ks <= hi) & (vals > GAP_FLOOR)
    if np.count_nonzero(keep) < MIN_FIT_POINTS:
        raise ValueError(f"only {np.count_nonzero(keep)} usable points in window ({lo}, {hi})")
    x, y = ks[keep].astype(float), np.log10(vals[keep])
    M = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(M, y, rcond=None)
    resid = y - M @ np.array([slope, intercept])
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, (lo, hi), int(keep.sum()))


def level_window(gaps, upper: float, lower: float):
    """Index range from the first value ``<= upper`` to the last value ``>= lower``."""
    gaps = np.asarray(gaps, dtype=float)
    below = np.flatnonzero(gaps <= upper)
    above = np.flatnonzero(gaps >= lower)
    if below.size == 0 or above.size == 0 or above[-1] < below[0]:
        raise ValueError(f"sequence never spans [{lower:g}, {upper:g}]")
    return int(below[0]), int(above[-1])


def first_reach(values, level: float) -> Optional[int]:
    """First index with ``value <= level`` (``None`` if never)."""
    idx = np.flatnonzero(np.asarray(values, dtype=float) <= level)
    return int(idx[0]) if idx.size else None


def pass_curve(trace):
    """``(passes, objective)`` pairs: the objective reached after each amount of work.

    A row's objective is measured before its step and its ``passes`` after
    it, so the objective of row ``k + 1`` is paired with the passes of row
    ``k``; the first objective is paired with zero passes.
    """
    rows = list(trace)
    passes = [0.0] + [r.passes for r in rows[:-1]]
    objs = [r.objective for r in rows]
    return np.array(passes), np.array(objs)


def values_at_passes(trace, grid) -> np.ndarray:
    """Objective of the last iterate whose cumulative work is at most each grid value."""
    passes, objs = pass_curve(trace)
    out = np.full(len(grid), np.nan)
    for j, g in enumerate(grid):
        idx = np.flatnonzero(passes <= g + 1e-9)
        if idx.size:
            out[j] = objs[idx[-1]]
    return out


# ---------------------------------------------------------------------------
# problem documents


def problem_to_dict(problem: ErmProblem, spec: PolytopeSpec) -> dict:
    comps = []
    for c in problem.components:
        if c.kind == "custom":
            raise ValueError("custom components cannot be serialized")
        comps.append({"kind": c.kind, "param": c.param, "scale": c.scale, "sigma": c.sigma, "lips": c.lips})
    A = problem.A.toarray() if hasattr(problem.A, "toarray") else problem.A
    return {"polytope": spec.to_dict(), "features": A.tolist(), "linear": problem.b.tolist(), "components": comps}


def problem_from_dict(doc: dict):
    """Build ``(ErmProblem, PolytopeSpec)`` from a JSON problem document."""
    spec = from_dict(doc["polytope"])
    comps = [erm.ComponentFunction(c["kind"], float(c.get("param", 0.0)), float(c.get("scale", 1.0)),
                                   c.get("sigma"), c.get("lips")) for c in doc["components"]]
    return ErmProblem(comps, doc["features"], doc.get("linear"), doc.get("lips_total")), spec


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def simplex_qp(p=20, n=40, support=None, seed=0):
    """Strongly convex least squares over the unit simplex with a face optimum.

    ``f_i(t) = (t - y_i)^2 / 2`` with Gaussian rows ``a_i`` and targets
    ``y = A x*`` for a point ``x*`` in the relative interior of the face
    spanned by the first ``support`` vertices, so ``F* = 0`` at ``x*``.

    Returns
    -------
    problem, spec, x_star
    """
    support = max(1, p // 2) if support is None else int(support)
    rng = erm.make_rng(seed, 5)
    A = rng.standard_normal((n, p))
    w = rng.random(support) + 0.5
    xs = np.zeros(p)
    xs[:support] = w / w.sum()
    comps = [erm.quadratic_half(v) for v in A @ xs]
    return ErmProblem(comps, A), unit_simplex(p), xs


# ---------------------------------------------------------------------------
# manifests


SOLVER_KINDS = ("fw_away", "vanilla_fw", "block_fw_away", "ssvm_bcfwas", "bcfw", "prox_grad")
GENERATORS = ("simplex_qp", "gflasso", "ssvm", "file")


@dataclass
class RunManifest:
    """A reproducible experiment.

    ``problem`` names a generator and its parameters (``seed`` fixes the
    instance; without it the run seed is used) or a problem file.
    ``solver`` and each entry of ``baselines`` are ``{"kind": ..., "name":
    ..., "config": {...}}``.  Every seed in ``seeds`` is one repetition.
    """

    experiment: str
    problem: dict
    solver: dict
    baselines: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    output: str = "out"
    repetitions: Optional[int] = None
    base_dir: str = "."

    def __post_init__(self):
        if self.repetitions is None:
            self.repetitions = len(self.seeds)
        if self.repetitions != len(self.seeds):
            raise ValueError("repetitions must equal the number of seeds")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ValueError("seeds must be explicit non-negative integers")
        gen = self.problem.get("generator")
        if gen not in GENERATORS:
            raise ValueError(f"unknown problem generator {gen!r}")
        if gen == "file":
            for key in ("path",):
                path = self.resolve(self.problem[key])
                if not os.path.exists(path):
                    raise FileNotFoundError(f"problem file {path} does not exist")
        for entry in self.solvers:
            if entry.get("kind") not in SOLVER_KINDS:
                raise ValueError(f"unknown solver kind {entry.get('kind')!r}")
        names = [solver_name(e) for e in self.solvers]
        if len(set(names)) != len(names):
            raise ValueError("solver names must be unique")

    @property
    def solvers(self) -> list:
        return [self.solver] + list(self.baselines)

    def resolve(self, path) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "problem": self.problem, "solver": self.solver,
                "baselines": self.baselines, "seeds": self.seeds, "output": self.output,
                "repetitions": self.repetitions}


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        doc = json.load(fh)
    known = {"experiment", "problem", "solver", "baselines", "seeds", "output", "repetitions"}
    extra = set(doc) - known - {"description"}
    if extra:
        raise ValueError(f"unknown manifest keys {sorted(extra)}")
    doc.pop("description", None)
    return RunManifest(**doc, base_dir=os.path.dirname(os.path.abspath(path)))


def solver_name(entry: dict) -> str:
    return entry.get("name", entry["kind"])


def parse_schedule(doc, problem=None, spec=None):
    """Schedule mode from ``{"mode": "full" | "geometric" | "theorem", ...}``.

    ``"rho": "computed"`` takes the rate from :func:`fwas.erm.estimate_constants`.
    """
    if doc is None:
        return FullBatch()
    mode = doc.get("mode", "full")
    if mode == "full":
        return FullBatch()
    if mode == "geometric":
        return GeometricGrowth(float(doc.get("m0", 1.0)), float(doc.get("factor", 1.1)))
    if mode == "theorem":
        rho = doc["rho"]
        if rho == "computed":
            rho = erm.estimate_constants(problem, spec).rho
            if rho is None:
                raise ValueError("the rate constant is not computable for this instance")
        return TheoremSchedule(float(rho), float(doc.get("alpha", 0.5)))
    raise ValueError(f"unknown schedule mode {mode!r}")


def build_problem(manifest: RunManifest, seed: int):
    """Instance for one repetition: ``(kind, payload)``."""
    doc = dict(manifest.problem)
    gen = doc.pop("generator")
    data_seed = int(doc.pop("seed", seed))
    if gen == "simplex_qp":
        problem, spec, _ = simplex_qp(seed=data_seed, **doc)
        return "erm", (problem, spec)
    if gen == "file":
        problem, spec = load_problem(manifest.resolve(doc["path"]))
        return "erm", (problem, spec)
    if gen == "gflasso":
        from .applications.gflasso import gen_gflasso_data

        return "gflasso", gen_gflasso_data(data_seed, **doc)
    from .applications.ssvm import gen_ssvm_data

    return "ssvm", gen_ssvm_data(data_seed, **doc)


def _config_fields(doc, allowed):
    bad = set(doc) - set(allowed)
    if bad:
        raise ValueError(f"unknown config keys {sorted(bad)}")
    return dict(doc)


def run_solver(entry: dict, kind: str, payload, seed: int, record_time=False):
    """Run one solver on one instance and return its trace."""
    from . import baselines
    from .applications.gflasso import build_gflasso
    from .applications.ssvm import SsvmConfig, run_ssvm_bcfwas
    from .block_solver import BlockConfig, run_block_fw_away
    from .polytopes import Vertex

    skind = entry["kind"]
    cfg = dict(entry.get("config", {}))
    if skind in ("ssvm_bcfwas", "bcfw"):
        if kind != "ssvm":
            raise ValueError(f"{skind} needs an ssvm problem")
        lam = float(cfg.pop("lam"))
        sched = parse_schedule(cfg.pop("mask_schedule", None))
        cfg = _config_fields(cfg, SsvmConfig.__dataclass_fields__)
        config = SsvmConfig(mask_schedule=sched, seed=seed, record_time=record_time, **cfg)
        fn = run_ssvm_bcfwas if skind == "ssvm_bcfwas" else baselines.run_bcfw
        return fn(payload, lam, config).trace
    if skind == "prox_grad":
        if kind != "gflasso":
            raise ValueError("prox_grad needs a gflasso problem")
        config = baselines.ProxGradConfig(record_time=record_time,
                                          **_config_fields(cfg, baselines.ProxGradConfig.__dataclass_fields__))
        return baselines.run_prox_grad(payload, config)[1]
    if kind == "gflasso":
        problem, spec, _ = build_gflasso(payload)
    elif kind == "erm":
        problem, spec = payload
    else:
        raise ValueError(f"{skind} cannot run on an ssvm problem")
    sched = parse_schedule(cfg.pop("schedule", None), problem, spec)
    start_origin = cfg.pop("start_at_origin", False)
    if skind == "block_fw_away":
        cfg = _config_fields(cfg, BlockConfig.__dataclass_fields__)
        config = BlockConfig(schedule=sched, seed=seed, record_time=record_time, **cfg)
        if start_origin:
            config.initial_vertices = [Vertex(0, np.zeros(b.dim)) for b in spec.blocks]
        return run_block_fw_away(problem, spec, config).trace
    cfg = _config_fields(cfg, SolverConfig.__dataclass_fields__)
    config = SolverConfig(schedule=sched, seed=seed, record_time=record_time, **cfg)
    if start_origin:
        config.initial_vertex = Vertex(0, np.zeros(spec.dim))
    fn = run_fw_away if skind == "fw_away" else baselines.run_vanilla_fw
    return fn(problem, spec, config).trace


def trace_filename(experiment, solver, seed) -> str:
    return f"{experiment}_{solver}_{seed}.csv"


def _run_job(args):
    manifest, seed, record_time = args
    kind, payload = build_problem(manifest, seed)
    return seed, {solver_name(e): run_solver(e, kind, payload, seed, record_time) for e in manifest.solvers}


@dataclass
class ExperimentResult:
    manifest: RunManifest
    traces: dict  # (solver name, seed) -> trace
    files: list

    def seeds(self):
        return list(self.manifest.seeds)

    def solver_traces(self, name) -> list:
        return [self.traces[(name, s)] for s in self.manifest.seeds]


def run_manifest(manifest: RunManifest, out_dir=None, threads=1, seeds=None, record_time=False) -> ExperimentResult:
    """Run every solver on every repetition and write one CSV per (solver, seed).

    Repetitions are independent single-threaded solves; with ``threads > 1``
    they are spread over a process pool.  The CSVs do not depend on
    ``threads``.
    """
    if seeds is not None:
        manifest = RunManifest(**{**manifest.to_dict(), "seeds": list(seeds), "repetitions": None},
                               base_dir=manifest.base_dir)
    jobs = [(manifest, s, record_time) for s in manifest.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    traces = {}
    for seed, by_solver in results:
        for name, tr in by_solver.items():
            traces[(name, seed)] = tr
    files = []
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for (name, seed), tr in sorted(traces.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            path = os.path.join(out_dir, trace_filename(manifest.experiment, name, seed))
            write_trace_csv(tr, path)
            files.append(path)
    return ExperimentResult(manifest, traces, files)


def summarize(result: ExperimentResult) -> dict:
    """Final objective, gap and passes per solver and seed."""
    out = {"experiment": result.manifest.experiment, "runs": []}
    for (name, seed), tr in sorted(result.traces.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        last = tr[-1]
        out["runs"].append({"solver": name, "seed": seed, "objective": last.objective,
                            "gap": None if np.isnan(last.gap) else last.gap,
                            "passes": last.passes, "iterations": len(tr), "millis": last.millis})
    return out
