"""Compact polytopes, linear minimization oracles and brute-force geometry.

A polytope is stored as an inequality system ``C x <= d`` together with a
structure tag.  Structured tags (simplex, box, lifted l1-balls, products)
carry closed-form oracles that never touch the inequality rows; the
``GeneralHRep`` tag goes through explicit vertex enumeration and is meant
for desk-scale instances only.

Vertex ids are the rank of the vertex in the tag's canonical enumeration
order, so "lowest id" is a deterministic tie-break everywhere:

* ``UnitSimplex``: ``e_i`` has id ``i``.
* ``Box``: binary number whose most significant bit is coordinate 0, bit set
  when the coordinate sits at its upper bound.
* ``LiftedL1Ball``: id 0 is the origin, ``2i+1`` is ``(+R e_i, R e_i)`` and
  ``2i+2`` is ``(-R e_i, R e_i)``.
* ``LiftedGraphL1Ball``: id 0 is the origin, then group-major over the
  normalized extreme rays of one group.
* ``Product``: mixed radix over the block ids, block 0 most significant.
* ``GeneralHRep``: lexicographically descending coordinates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

ACTIVE_TOL = 1e-9
RANK_TOL = 1e-10
TIE_TOL = 1e-12
MAX_GENERAL_DIM = 12
MAX_GENERAL_ROWS = 24
MAX_ENUMERATED = 2**20
MAX_HOFFMAN_ROWS = 16


class PolytopeError(ValueError):
    """Raised for empty, unbounded or oversized polytopes."""


# ---------------------------------------------------------------------------
# structure tags


@dataclass(frozen=True)
class GeneralHRep:
    pass


@dataclass(frozen=True)
class UnitSimplex:
    dim: int


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple


@dataclass(frozen=True)
class LiftedL1Ball:
    """``{(beta, u) : |beta_i| <= u_i, sum(u) <= radius}`` in dimension ``2*dim``."""

    radius: float
    dim: int


@dataclass(frozen=True)
class LiftedGraphL1Ball:
    """Lifted weighted graph-fused l1 ball.

    The variables come in ``n_groups`` consecutive groups, each laid out as
    ``(b, u, v)`` with ``b, u`` of length ``n_nodes`` and ``v`` of length
    ``len(edges)``.  The set is::

        u >= |b|,  v_e >= |b_m - s_e b_l|  (per group)
        sum_groups node_weights . u + edge_weights . v <= radius

    which is the lifting of ``lam ||b||_1 + sum_e w_e |b_m - s_e b_l|``.
    """

    radius: float
    n_nodes: int
    edges: tuple  # of (m, l, sign)
    node_weights: tuple
    edge_weights: tuple
    n_groups: int


@dataclass(frozen=True)
class Product:
    blocks: tuple


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Vertex:
    id: int
    coords: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Vertex) and self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"Vertex(id={self.id}, coords={np.array2string(self.coords, precision=4)})"


class Feasibility(NamedTuple):
    feasible: bool
    violation: float


class GeometryReport(NamedTuple):
    zeta: float
    phi: float
    omega: float
    theta: float | None
    vertex_count: int


def first_min(vals) -> int:
    """Lowest index whose value is within rounding of the minimum.

    Vertex values computed in floating point can split exact ties by a few
    ulps; treating values within ``TIE_TOL`` (relative) as equal keeps the
    lowest-id rule.
    """
    vals = np.asarray(vals, dtype=float)
    scale = 1.0 + float(np.max(np.abs(vals)))
    return int(np.flatnonzero(vals <= vals.min() + TIE_TOL * scale)[0])


def _canonical_key(x):
    r = np.round(np.asarray(x, dtype=float), 9) + 0.0
    return tuple(r.tolist())


class PolytopeSpec:
    """A compact polytope ``{x : C x <= d}`` with an optional structure tag.

    Use the factory functions (:func:`unit_simplex`, :func:`box`,
    :func:`lifted_l1_ball`, :func:`lifted_graph_l1_ball`, :func:`product`,
    :func:`from_hrep`) rather than calling the constructor directly.
    """

    def __init__(self, structure, rows=None, rhs=None):
        self.structure = structure
        if isinstance(structure, GeneralHRep):
            if rows is None or rhs is None:
                raise PolytopeError("GeneralHRep needs explicit rows and rhs")
            rows = np.atleast_2d(np.asarray(rows, dtype=float))
            rhs = np.asarray(rhs, dtype=float).ravel()
            if rows.shape[0] != rhs.shape[0]:
                raise PolytopeError("rows and rhs disagree in length")
            self.__dict__["rows"] = rows
            self.__dict__["rhs"] = rhs
            self._dim = rows.shape[1]
            self._general_vertices = _enumerate_hrep(rows, rhs)
        else:
            self._dim = _structured_dim(structure)
            if rows is not None:
                self.__dict__["rows"] = np.atleast_2d(np.asarray(rows, dtype=float))
                self.__dict__["rhs"] = np.asarray(rhs, dtype=float).ravel()

    # -- basic shape ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def kind(self) -> str:
        return _KIND_NAMES[type(self.structure)]

    @cached_property
    def rows(self) -> np.ndarray:
        return _structured_hrep(self.structure)[0]

    @cached_property
    def rhs(self) -> np.ndarray:
        return _structured_hrep(self.structure)[1]

    @property
    def n_rows(self) -> int:
        s = self.structure
        if isinstance(s, Product):
            return sum(b.n_rows for b in s.blocks)
        return self.rows.shape[0]

    @cached_property
    def n_vertices(self) -> int:
        s = self.structure
        if isinstance(s, GeneralHRep):
            return len(self._general_vertices)
        if isinstance(s, UnitSimplex):
            return s.dim
        if isinstance(s, Box):
            return 2 ** len(s.lower)
        if isinstance(s, LiftedL1Ball):
            return 2 * s.dim + 1
        if isinstance(s, LiftedGraphL1Ball):
            return 1 + s.n_groups * self._graph_rays.shape[0]
        return math.prod(b.n_vertices for b in s.blocks)

    @cached_property
    def block_slices(self) -> list:
        """Coordinate slices of the product blocks (a single slice otherwise)."""
        if not isinstance(self.structure, Product):
            return [slice(0, self.dim)]
        out, start = [], 0
        for b in self.structure.blocks:
            out.append(slice(start, start + b.dim))
            start += b.dim
        return out

    @property
    def blocks(self) -> list:
        if isinstance(self.structure, Product):
            return list(self.structure.blocks)
        return [self]

    def contains_origin(self, tol=ACTIVE_TOL) -> bool:
        s = self.structure
        if isinstance(s, (LiftedL1Ball, LiftedGraphL1Ball)):
            return True
        if isinstance(s, UnitSimplex):
            return False
        if isinstance(s, Box):
            return bool(np.all(np.asarray(s.lower) <= tol) and np.all(np.asarray(s.upper) >= -tol))
        if isinstance(s, Product):
            return all(b.contains_origin(tol) for b in s.blocks)
        return bool(np.all(self.rhs >= -tol))

    # -- oracles -------------------------------------------------------------

    def lmo(self, c) -> Vertex:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ValueError(f"cost has shape {c.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(c)):
            raise ValueError("cost vector must be finite")
        s = self.structure
        if isinstance(s, UnitSimplex):
            i = int(np.argmin(c))
            x = np.zeros(self.dim)
            x[i] = 1.0
            return Vertex(i, x)
        if isinstance(s, Box):
            lo, hi = np.asarray(s.lower), np.asarray(s.upper)
            up = c < 0
            vid = 0
            for bit in up:
                vid = (vid << 1) | int(bit)
            return Vertex(vid, np.where(up, hi, lo).astype(float))
        if isinstance(s, LiftedL1Ball):
            p0, r = s.dim, s.radius
            vals = np.empty(2 * p0 + 1)
            vals[0] = 0.0
            vals[1::2] = r * c[:p0] + r * c[p0:]
            vals[2::2] = -r * c[:p0] + r * c[p0:]
            vid = first_min(vals)
            return Vertex(vid, self._lifted_vertex(vid))
        if isinstance(s, LiftedGraphL1Ball):
            rays = self._graph_rays
            vals = np.empty(1 + s.n_groups * rays.shape[0])
            vals[0] = 0.0
            vals[1:] = (c.reshape(s.n_groups, -1) @ rays.T).ravel()
            vid = first_min(vals)
            return Vertex(vid, self._graph_vertex(vid))
        if isinstance(s, Product):
            parts, vid = [], 0
            for b, sl in zip(s.blocks, self.block_slices):
                v = b.lmo(c[sl])
                vid = vid * b.n_vertices + v.id
                parts.append(v.coords)
            return Vertex(vid, np.concatenate(parts))
        verts = self._general_vertices
        vals = np.array([c @ v.coords for v in verts])
        return verts[first_min(vals)]

    def vertices(self) -> list:
        """All vertices in id order (guarded against combinatorial blow-up)."""
        if self.n_vertices > MAX_ENUMERATED:
            raise PolytopeError(f"{self.n_vertices} vertices exceeds the enumeration guard")
        s = self.structure
        if isinstance(s, GeneralHRep):
            return list(self._general_vertices)
        if isinstance(s, UnitSimplex):
            return [Vertex(i, row) for i, row in enumerate(np.eye(s.dim))]
        if isinstance(s, Box):
            lo, hi = np.asarray(s.lower, float), np.asarray(s.upper, float)
            out = []
            for vid, bits in enumerate(itertools.product((0, 1), repeat=len(lo))):
                b = np.array(bits, dtype=bool)
                out.append(Vertex(vid, np.where(b, hi, lo)))
            return out
        if isinstance(s, LiftedL1Ball):
            return [Vertex(i, self._lifted_vertex(i)) for i in range(2 * s.dim + 1)]
        if isinstance(s, LiftedGraphL1Ball):
            return [Vertex(i, self._graph_vertex(i)) for i in range(self.n_vertices)]
        per_block = [b.vertices() for b in s.blocks]
        out = []
        for vid, combo in enumerate(itertools.product(*per_block)):
            out.append(Vertex(vid, np.concatenate([v.coords for v in combo])))
        return out

    def _lifted_vertex(self, vid):
        s = self.structure
        x = np.zeros(2 * s.dim)
        if vid > 0:
            i, neg = divmod(vid - 1, 2)
            x[i] = -s.radius if neg else s.radius
            x[s.dim + i] = s.radius
        return x

    def _graph_vertex(self, vid):
        rays = self._graph_rays
        x = np.zeros(self.dim)
        if vid > 0:
            j, c = divmod(vid - 1, rays.shape[0])
            w = rays.shape[1]
            x[j * w:(j + 1) * w] = rays[c]
        return x

    @cached_property
    def _graph_rays(self):
        return _graph_extreme_rays(self.structure)

    def check_feasible(self, x, tol=ACTIVE_TOL) -> Feasibility:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({self.dim},)")
        s = self.structure
        if isinstance(s, Product):
            worst = max(b.check_feasible(x[sl], tol).violation
                        for b, sl in zip(s.blocks, self.block_slices))
        elif isinstance(s, UnitSimplex):
            worst = max(float(np.max(-x)), float(abs(x.sum() - 1.0)))
        elif isinstance(s, Box):
            worst = max(float(np.max(np.asarray(s.lower) - x)), float(np.max(x - np.asarray(s.upper))))
        else:
            worst = float(np.max(self.rows @ x - self.rhs))
        worst = max(worst, 0.0)
        return Feasibility(worst <= tol, worst)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "rows": self.rows.tolist(),
            "rhs": self.rhs.tolist(),
            "structure": _structure_to_dict(self.structure),
        }

    def __repr__(self):
        return f"PolytopeSpec({self.kind}, dim={self.dim})"


# ---------------------------------------------------------------------------
# factories


def unit_simplex(dim: int) -> PolytopeSpec:
    if dim < 1:
        raise PolytopeError("simplex dimension must be positive")
    return PolytopeSpec(UnitSimplex(int(dim)))


def box(lower, upper) -> PolytopeSpec:
    lower = tuple(float(v) for v in np.ravel(lower))
    upper = tuple(float(v) for v in np.ravel(upper))
    if len(lower) != len(upper) or not lower:
        raise PolytopeError("box bounds must be non-empty and of equal length")
    if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in zip(lower, upper)):
        raise PolytopeError("box bounds must be finite")
    if any(a > b for a, b in zip(lower, upper)):
        raise PolytopeError("box is empty: lower > upper")
    return PolytopeSpec(Box(lower, upper))


def lifted_l1_ball(radius: float, dim: int) -> PolytopeSpec:
    if not radius > 0 or not math.isfinite(radius):
        raise PolytopeError("radius must be positive and finite")
    return PolytopeSpec(LiftedL1Ball(float(radius), int(dim)))


def lifted_graph_l1_ball(radius, n_nodes, edges, node_weights, edge_weights, n_groups=1):
    if not radius > 0 or not math.isfinite(radius):
        raise PolytopeError("radius must be positive and finite")
    edges = tuple((int(m), int(l), 1 if s >= 0 else -1) for m, l, s in edges)
    node_weights = tuple(float(w) for w in np.ravel(node_weights))
    edge_weights = tuple(float(w) for w in np.ravel(edge_weights))
    if len(node_weights) != n_nodes or len(edge_weights) != len(edges):
        raise PolytopeError("weight vectors do not match the graph")
    if min(node_weights + edge_weights) <= 0:
        raise PolytopeError("budget weights must be positive")
    for m, l, _ in edges:
        if not (0 <= m < n_nodes and 0 <= l < n_nodes) or m == l:
            raise PolytopeError(f"bad edge ({m}, {l})")
    return PolytopeSpec(LiftedGraphL1Ball(float(radius), int(n_nodes), edges,
                                          node_weights, edge_weights, int(n_groups)))


def product(blocks: Sequence[PolytopeSpec]) -> PolytopeSpec:
    blocks = tuple(blocks)
    if not blocks:
        raise PolytopeError("product needs at least one block")
    return PolytopeSpec(Product(blocks))


def from_hrep(rows, rhs) -> PolytopeSpec:
    return PolytopeSpec(GeneralHRep(), rows, rhs)


# ---------------------------------------------------------------------------
# module-level operations


def lmo(spec: PolytopeSpec, c) -> Vertex:
    """Vertex minimizing ``<c, v>``; ties go to the lowest vertex id."""
    return spec.lmo(c)


def away_vertex(active, c):
    """Active vertex maximizing ``<c, v>`` and its weight (lowest id on ties)."""
    return active.away(c)


def enumerate_vertices(spec: PolytopeSpec) -> list:
    return spec.vertices()


def check_feasible(spec: PolytopeSpec, x, tol=ACTIVE_TOL) -> Feasibility:
    return spec.check_feasible(x, tol)


def active_indices(spec: PolytopeSpec, points, tol=ACTIVE_TOL) -> list:
    """Sorted row indices active at every given point (``I(U)``)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    slack = spec.rhs[:, None] - spec.rows @ pts.T
    return np.flatnonzero(np.all(np.abs(slack) <= tol, axis=1)).tolist()


def compute_omega(spec: PolytopeSpec) -> GeometryReport:
    """Vertex-facet ratio ``zeta / phi`` by brute force over the vertex set.

    ``zeta`` is the smallest positive slack over vertices and inactive rows,
    ``phi`` the largest row norm among rows not active at every vertex.
    """
    verts = np.array([v.coords for v in spec.vertices()])
    C, d = spec.rows, spec.rhs
    slack = d[:, None] - C @ verts.T
    active = np.abs(slack) <= ACTIVE_TOL
    always = np.all(active, axis=1)
    if np.all(always):
        raise PolytopeError("every row is active at every vertex; phi is undefined")
    zeta = float(np.min(slack[~active]))
    phi = float(np.max(np.linalg.norm(C[~always], axis=1)))
    return GeometryReport(zeta, phi, zeta / phi, None, len(verts))


def compute_hoffman(stack) -> float:
    """Hoffman constant ``max_B 1 / lambda_min(B B^T)`` over independent row subsets."""
    M = np.atleast_2d(np.asarray(stack, dtype=float))
    m, p = M.shape
    if m > MAX_HOFFMAN_ROWS:
        raise PolytopeError(f"{m} rows exceeds the Hoffman guard of {MAX_HOFFMAN_ROWS}")
    if not np.any(M):
        raise PolytopeError("zero matrix has no Hoffman constant")
    theta = 0.0
    for k in range(1, min(m, p) + 1):
        combos = np.array(list(itertools.combinations(range(m), k)))
        found = False
        for start in range(0, len(combos), 4096):
            B = M[combos[start:start + 4096]]
            s = np.linalg.svd(B, compute_uv=False)
            smin = s[:, -1]
            ok = smin > RANK_TOL
            if np.any(ok):
                found = True
                theta = max(theta, float(np.max(1.0 / smin[ok] ** 2)))
        if not found:
            break
    return theta


# ---------------------------------------------------------------------------
# internals


_KIND_NAMES = {
    GeneralHRep: "general",
    UnitSimplex: "unit_simplex",
    Box: "box",
    LiftedL1Ball: "lifted_l1_ball",
    LiftedGraphL1Ball: "lifted_graph_l1_ball",
    Product: "product",
}


def _structured_dim(s):
    if isinstance(s, UnitSimplex):
        return s.dim
    if isinstance(s, Box):
        return len(s.lower)
    if isinstance(s, LiftedL1Ball):
        return 2 * s.dim
    if isinstance(s, LiftedGraphL1Ball):
        return s.n_groups * (2 * s.n_nodes + len(s.edges))
    if isinstance(s, Product):
        return sum(b.dim for b in s.blocks)
    raise TypeError(f"unknown structure {s!r}")


def _structured_hrep(s):
    if isinstance(s, UnitSimplex):
        p = s.dim
        C = np.vstack([-np.eye(p), np.ones((1, p)), -np.ones((1, p))])
        d = np.concatenate([np.zeros(p), [1.0, -1.0]])
        return C, d
    if isinstance(s, Box):
        lo, hi = np.asarray(s.lower), np.asarray(s.upper)
        p = len(lo)
        return np.vstack([-np.eye(p), np.eye(p)]), np.concatenate([-lo, hi])
    if isinstance(s, LiftedL1Ball):
        p0 = s.dim
        eye = np.eye(p0)
        C = np.vstack([
            np.hstack([eye, -eye]),
            np.hstack([-eye, -eye]),
            np.hstack([np.zeros((1, p0)), np.ones((1, p0))]),
        ])
        d = np.concatenate([np.zeros(2 * p0), [s.radius]])
        return C, d
    if isinstance(s, LiftedGraphL1Ball):
        return _graph_hrep(s)
    if isinstance(s, Product):
        from scipy.linalg import block_diag

        C = block_diag(*[b.rows for b in s.blocks])
        d = np.concatenate([b.rhs for b in s.blocks])
        return C, d
    raise TypeError(f"no closed-form rows for {s!r}")


def _graph_group_rows(s):
    """Homogeneous cone rows ``M z >= 0`` of one group ``z = (b, u, v)``."""
    k, ne = s.n_nodes, len(s.edges)
    w = 2 * k + ne
    rows = []
    for i in range(k):
        r = np.zeros(w)
        r[k + i] = 1.0
        r[i] = -1.0
        rows.append(r)
        r = np.zeros(w)
        r[k + i] = 1.0
        r[i] = 1.0
        rows.append(r)
    for e, (m, l, sgn) in enumerate(s.edges):
        for sign in (-1.0, 1.0):
            r = np.zeros(w)
            r[2 * k + e] = 1.0
            r[m] += sign
            r[l] -= sign * sgn
            rows.append(r)
    return np.array(rows).reshape(-1, w)


def _graph_hrep(s):
    M = _graph_group_rows(s)
    G = s.n_groups
    w = M.shape[1]
    C = np.zeros((G * M.shape[0] + 1, G * w))
    budget = np.concatenate([np.zeros(s.n_nodes), s.node_weights, s.edge_weights])
    for j in range(G):
        C[j * M.shape[0]:(j + 1) * M.shape[0], j * w:(j + 1) * w] = -M
        C[-1, j * w:(j + 1) * w] = budget
    d = np.zeros(C.shape[0])
    d[-1] = s.radius
    return C, d


def _graph_extreme_rays(s):
    """Extreme rays of one group's cone, scaled to exhaust the weight budget."""
    k, ne = s.n_nodes, len(s.edges)
    if 3 ** k > MAX_ENUMERATED:
        raise PolytopeError(f"graph component with {k} nodes is too large for the closed-form oracle")
    M = _graph_group_rows(s)
    dim = 2 * k + ne
    budget = np.concatenate([np.zeros(k), s.node_weights, s.edge_weights])
    cands = []
    for i in range(k):
        z = np.zeros(dim)
        z[k + i] = 1.0
        cands.append(z)
    for e in range(ne):
        z = np.zeros(dim)
        z[2 * k + e] = 1.0
        cands.append(z)
    for signs in itertools.product((0, 1, -1), repeat=k):
        b = np.array(signs, dtype=float)
        if not b.any():
            continue
        z = np.zeros(dim)
        z[:k] = b
        z[k:2 * k] = np.abs(b)
        for e, (m, l, sgn) in enumerate(s.edges):
            z[2 * k + e] = abs(b[m] - sgn * b[l])
        cands.append(z)
    rays = []
    for z in cands:
        tight = M[np.abs(M @ z) <= ACTIVE_TOL]
        if tight.size and np.linalg.matrix_rank(tight, tol=RANK_TOL) == dim - 1:
            rays.append(z * (s.radius / (budget @ z)))
    return np.array(rays)


def _check_bounded(C, d):
    p = C.shape[1]
    for i in range(p):
        for sign in (1.0, -1.0):
            c = np.zeros(p)
            c[i] = sign
            res = linprog(c, A_ub=C, b_ub=d, bounds=[(None, None)] * p, method="highs")
            if res.status == 2:
                raise PolytopeError("polytope is empty")
            if res.status == 3:
                raise PolytopeError("polyhedron is unbounded")
            if res.status != 0:
                raise PolytopeError(f"LP check failed: {res.message}")


def _enumerate_hrep(C, d):
    m, p = C.shape
    if p > MAX_GENERAL_DIM or m > MAX_GENERAL_ROWS:
        raise PolytopeError(f"general H-rep {m}x{p} exceeds guard ({MAX_GENERAL_ROWS}x{MAX_GENERAL_DIM})")
    if m < p + 1:
        raise PolytopeError("a bounded polytope needs at least p + 1 rows")
    _check_bounded(C, d)
    found = {}
    combos_iter = itertools.combinations(range(m), p)
    while True:
        chunk = list(itertools.islice(combos_iter, 20000))
        if not chunk:
            break
        idx = np.array(chunk)
        Cs, ds = C[idx], d[idx]
        s = np.linalg.svd(Cs, compute_uv=False)
        ok = s[:, -1] > RANK_TOL * np.maximum(s[:, 0], 1.0)
        if not np.any(ok):
            continue
        xs = np.linalg.solve(Cs[ok], ds[ok][..., None])[..., 0]
        feas = np.all(xs @ C.T <= d + ACTIVE_TOL, axis=1)
        for x in xs[feas]:
            found.setdefault(_canonical_key(x), x)
    if not found:
        raise PolytopeError("no vertices found; polytope is empty")
    keys = sorted(found, key=lambda k: tuple(-v for v in k))
    return [Vertex(i, found[k] + 0.0) for i, k in enumerate(keys)]


def _structure_to_dict(s) -> dict:
    if isinstance(s, GeneralHRep):
        return {"kind": "general"}
    if isinstance(s, UnitSimplex):
        return {"kind": "unit_simplex", "dim": s.dim}
    if isinstance(s, Box):
        return {"kind": "box", "lower": list(s.lower), "upper": list(s.upper)}
    if isinstance(s, LiftedL1Ball):
        return {"kind": "lifted_l1_ball", "radius": s.radius, "dim": s.dim}
    if isinstance(s, LiftedGraphL1Ball):
        return {
            "kind": "lifted_graph_l1_ball",
            "radius": s.radius,
            "n_nodes": s.n_nodes,
            "edges": [list(e) for e in s.edges],
            "node_weights": list(s.node_weights),
            "edge_weights": list(s.edge_weights),
            "n_groups": s.n_groups,
        }
    return {"kind": "product", "blocks": [b.to_dict() for b in s.blocks]}


def from_dict(doc: dict) -> PolytopeSpec:
    """Inverse of :meth:`PolytopeSpec.to_dict`.

    Structured documents are rebuilt from their tag; any rows/rhs supplied
    alongside must agree with the closed form.
    """
    st = doc.get("structure") or {"kind": "general"}
    kind = st.get("kind", "general")
    if kind == "general":
        return from_hrep(doc["rows"], doc["rhs"])
    if kind == "unit_simplex":
        spec = unit_simplex(st["dim"])
    elif kind == "box":
        spec = box(st["lower"], st["upper"])
    elif kind == "lifted_l1_ball":
        spec = lifted_l1_ball(st["radius"], st["dim"])
    elif kind == "lifted_graph_l1_ball":
        spec = lifted_graph_l1_ball(st["radius"], st["n_nodes"], st["edges"],
                                    st["node_weights"], st["edge_weights"], st.get("n_groups", 1))
    elif kind == "product":
        spec = product([from_dict(b) for b in st["blocks"]])
    else:
        raise PolytopeError(f"unknown structure kind {kind!r}")
    if "rows" in doc and "rhs" in doc:
        rows = np.atleast_2d(np.asarray(doc["rows"], dtype=float))
        rhs = np.asarray(doc["rhs"], dtype=float)
        if rows.shape != spec.rows.shape or not (
            np.allclose(rows, spec.rows, atol=1e-12) and np.allclose(rhs, spec.rhs, atol=1e-12)
        ):
            raise PolytopeError(f"rows/rhs disagree with the {kind} structure")
    return spec
