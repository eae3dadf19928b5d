"""Block-coordinate semi-stochastic Frank-Wolfe with away-steps over product polytopes."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .active_set import ActiveSet, InvariantError
from .erm import BatchSchedule, ErmProblem, batch_size, make_rng, sample_without_replacement
from .polytopes import PolytopeSpec, Product
from .solver import SolverConfig, adaptive_step, select_direction
from .trace import TraceRecord

log = logging.getLogger("fwas")


@dataclass
class BlockConfig(SolverConfig):
    """:class:`SolverConfig` plus block sampling.

    ``blocks_per_iter`` is ``r`` (``None`` means every block).  ``workers``
    only changes how the per-block subproblems are scheduled, never the
    result.  ``block_lips`` optionally replaces the global ``L`` per block.
    ``initial_vertices`` overrides the starting vertex of each block.
    """

    blocks_per_iter: Optional[int] = None
    workers: int = 1
    block_lips: Optional[Sequence[float]] = None
    initial_vertices: Optional[Sequence] = None


@dataclass
class BlockState:
    actives: list
    slices: list

    def reconstruct(self) -> np.ndarray:
        return np.concatenate([a.reconstruct() for a in self.actives])


@dataclass
class BlockRunResult:
    x: np.ndarray
    state: BlockState
    trace: list
    converged: bool
    gap: float

    @property
    def objective(self) -> float:
        return self.trace[-1].objective


def embed_block(d_block, block: int, slices) -> np.ndarray:
    """Zero-pad a block vector into the full coordinate space."""
    p = slices[-1].stop
    out = np.zeros(p)
    out[slices[block]] = d_block
    return out


def _check_slices(slices, p):
    pos = 0
    for sl in slices:
        if sl.start != pos or sl.stop <= sl.start:
            raise InvariantError("block slices do not partition the coordinates")
        pos = sl.stop
    if pos != p:
        raise InvariantError("block slices do not cover the coordinates")


def run_block_fw_away(problem: ErmProblem, spec: PolytopeSpec, config: BlockConfig) -> BlockRunResult:
    """Block-coordinate semi-stochastic FW with away-steps.

    One mini-batch gradient ``g`` is drawn per iteration, ``r`` of the
    ``q`` blocks are sampled without replacement, and every sampled block
    independently chooses its FW/away direction and step
    ``min(-<g_l, d_l>/(L ||d_l||^2), gamma_max_l)``.  The iterate then moves
    by the sum of the embedded block steps.  With one block this is exactly
    :func:`fwas.solver.run_fw_away` (same random streams).
    """
    if not isinstance(spec.structure, Product):
        raise ValueError("block solver needs a Product polytope")
    if spec.dim != problem.p:
        raise ValueError(f"polytope dimension {spec.dim} != problem dimension {problem.p}")
    blocks = spec.blocks
    slices = spec.block_slices
    _check_slices(slices, spec.dim)
    q = len(blocks)
    r = q if config.blocks_per_iter is None else int(config.blocks_per_iter)
    if not 1 <= r <= q:
        raise ValueError(f"blocks per iteration {r} outside [1, {q}]")
    n = problem.n
    L = problem.lips_total if config.lips is None else float(config.lips)
    block_L = [L] * q if config.block_lips is None else [float(v) for v in config.block_lips]
    schedule = BatchSchedule(n, config.schedule)
    rng = make_rng(config.seed, 0)
    block_rng = make_rng(config.seed, 1)

    if config.initial_vertices is not None:
        starts = list(config.initial_vertices)
    else:
        g0 = _grad0(problem, spec)
        starts = [blocks[l].lmo(g0[slices[l]]) for l in range(q)]
    actives = [ActiveSet.singleton(v) for v in starts]
    x = np.concatenate([v.coords.astype(float) for v in starts])
    A = problem.columns
    block_cols = [A[:, sl] for sl in slices]
    images = [dict() for _ in range(q)]

    def image(l, v):
        img = images[l].get(v.id)
        if img is None:
            img = _block_image(block_cols[l], v.coords)
            images[l][v.id] = img
        return img

    T = np.column_stack([image(l, v) for l, v in enumerate(starts)])
    t = T.sum(axis=1)
    trace = []
    passes = 0.0
    start = time.perf_counter()
    exact_gap = np.nan
    converged = False
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    k = 1
    try:
        while True:
            obj = problem.objective_from_margins(t, x)
            if not np.isfinite(obj):
                raise InvariantError(f"non-finite objective at iteration {k}")
            m = batch_size(schedule, k)
            full = m == n and r == q
            if not full and (k == 1 or k % config.check_every == 0):
                T, t = _refresh(block_cols, x, slices)
                obj = problem.objective_from_margins(t, x)
                exact_gap = _product_gap(problem.gradient_from_margins(t), x, blocks, slices)
                if exact_gap <= config.target_gap:
                    converged = True
                    break
            if k > config.max_iter:
                break
            if config.max_passes is not None and passes >= config.max_passes:
                break
            if m == n:
                if k % config.check_every == 0:
                    T, t = _refresh(block_cols, x, slices)
                    obj = problem.objective_from_margins(t, x)
                g = problem.gradient_from_margins(t)
            else:
                idx = sample_without_replacement(rng, n, m)
                g = problem.gradient_from_margins(t, idx)
            chosen = sample_without_replacement(block_rng, q, r)

            def solve_block(l):
                sl = slices[l]
                gl = g[sl]
                dec = select_direction(gl, x[sl], actives[l], blocks[l], config.away_steps)
                gamma, label = adaptive_step(gl, dec, block_L[l])
                return dec, gamma, label

            if pool is not None and len(chosen) > 1:
                results = list(pool.map(solve_block, chosen.tolist()))
            else:
                results = [solve_block(l) for l in chosen.tolist()]
            sampled_gap = float(sum(dec.gap for dec, _, _ in results))
            if full:
                exact_gap = sampled_gap
                if exact_gap <= config.target_gap:
                    converged = True
                    break
            passes += m / n
            for l, (dec, gamma, _) in zip(chosen.tolist(), results):
                if gamma <= 0:
                    continue
                sl = slices[l]
                if dec.kind == "fw":
                    T[:, l] = T[:, l] + gamma * (image(l, dec.p) - T[:, l])
                    actives[l].update("fw", gamma, p=dec.p)
                else:
                    T[:, l] = T[:, l] + gamma * (T[:, l] - image(l, dec.u))
                    actives[l].update("away", gamma, u=dec.u)
                x[sl] = x[sl] + gamma * dec.direction
                if len(actives[l]) == 1:
                    (v, _), = list(actives[l])
                    x[sl] = v.coords
                    T[:, l] = image(l, v)
                if len(images[l]) > 2 * len(actives[l]) + 16:
                    keep = set(actives[l].ids)
                    images[l] = {i: im for i, im in images[l].items() if i in keep}
            t = T.sum(axis=1)
            if config.debug:
                _check_blocks(blocks, slices, actives, x, results)
            millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
            trace.append(TraceRecord(
                k, obj, sampled_gap, m,
                float(max(gm for _, gm, _ in results)),
                ";".join(lb for _, _, lb in results),
                sum(len(a) for a in actives),
                passes, millis,
                ";".join(str(l) for l in chosen.tolist()),
            ))
            k += 1
    finally:
        if pool is not None:
            pool.shutdown()
    millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
    trace.append(TraceRecord(k, obj, float(exact_gap), 0, 0.0, "Stop",
                             sum(len(a) for a in actives), passes, millis, ""))
    log.info("block fw-away stopped at k=%d obj=%.6e gap=%.3e", k, obj, exact_gap)
    return BlockRunResult(x, BlockState(actives, slices), trace, converged, float(exact_gap))


def _grad0(problem, spec):
    if spec.contains_origin():
        return problem.full_gradient(np.zeros(spec.dim))
    return problem.b


def _block_image(cols, coords):
    nz = np.flatnonzero(coords)
    if nz.size == 0:
        return np.zeros(cols.shape[0])
    return np.asarray(cols[:, nz] @ coords[nz]).ravel()


def _refresh(block_cols, x, slices):
    T = np.column_stack([np.asarray(c @ x[sl]).ravel() for c, sl in zip(block_cols, slices)])
    return T, T.sum(axis=1)


def _product_gap(g, x, blocks, slices):
    total = 0.0
    for b, sl in zip(blocks, slices):
        p = b.lmo(g[sl])
        total += float(g[sl] @ (x[sl] - p.coords))
    return total


def _check_blocks(blocks, slices, actives, x, results):
    for (dec, gamma, _) in results:
        if not 0.0 <= gamma <= dec.gamma_max + 1e-15:
            raise InvariantError(f"block step {gamma} outside [0, {dec.gamma_max}]")
    for b, sl, a in zip(blocks, slices, actives):
        feas = b.check_feasible(x[sl], 1e-8)
        if not feas.feasible:
            raise InvariantError(f"block iterate left its polytope ({feas.violation:.3e})")
        a.check(x[sl])


def product_fw_gap(problem: ErmProblem, spec: PolytopeSpec, x) -> float:
    """Exact FW gap over a product polytope (sum of block gaps)."""
    x = np.asarray(x, dtype=float)
    return _product_gap(problem.full_gradient(x), x, spec.blocks, spec.block_slices)
