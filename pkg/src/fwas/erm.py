"""Finite-sum objectives ``F(x) = (1/n) sum_i f_i(a_i^T x) + <b, x>``.

Component losses are vectorized per kind; the objective, exact gradient,
mini-batch gradient (sampling without replacement), the closed-form
mini-batch variance and batch-size schedules live here, together with a
desk-scale calculator for the geometric and smoothness constants that
drive the linear rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, gammaln

from .polytopes import (
    MAX_HOFFMAN_ROWS,
    PolytopeError,
    PolytopeSpec,
    compute_hoffman,
    compute_omega,
)

KINDS = ("square", "quadratic_half", "logistic", "poisson", "custom")


# ---------------------------------------------------------------------------
# random streams and sampling


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for substream ``stream`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def sample_without_replacement(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """``m`` distinct indices from ``range(n)`` by a partial Fisher-Yates shuffle.

    The result is sorted so that downstream sums do not depend on draw order.
    """
    if not 1 <= m <= n:
        raise ValueError(f"batch size {m} outside [1, {n}]")
    if m == n:
        return np.arange(n)
    perm = np.arange(n)
    swaps = rng.integers(np.arange(m), n)
    for i, j in enumerate(swaps.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])


# ---------------------------------------------------------------------------
# components


@dataclass(frozen=True)
class ComponentFunction:
    """One scalar loss ``f_i(t)``, optionally multiplied by ``scale``.

    Kinds and their unscaled form:

    ``square``          ``(t - param)^2``
    ``quadratic_half``  ``(t - param)^2 / 2``
    ``logistic``        ``log(1 + exp(-param * t))`` with ``param`` in {-1, +1}
    ``poisson``         ``exp(t) - param * t + log(param!)``
    ``custom``          ``value(t)`` with derivative ``deriv(t)``

    ``sigma`` and ``lips`` override the kind's default curvature bounds; the
    logistic and Poisson losses have no global strong convexity and need the
    caller to supply the bounds valid on the feasible range of ``t``.
    """

    kind: str
    param: float = 0.0
    scale: float = 1.0
    sigma: Optional[float] = None
    lips: Optional[float] = None
    value: Optional[Callable] = field(default=None, compare=False)
    deriv: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if self.kind == "custom" and (self.value is None or self.deriv is None):
            raise ValueError("custom components need value and deriv callbacks")
        if self.kind == "logistic" and self.param not in (-1.0, 1.0):
            raise ValueError("logistic labels must be -1 or +1")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def strong_convexity(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return {"square": 2.0, "quadratic_half": 1.0}.get(self.kind, 0.0) * self.scale

    @property
    def lipschitz(self) -> float:
        if self.lips is not None:
            return float(self.lips)
        if self.kind == "square":
            return 2.0 * self.scale
        if self.kind == "quadratic_half":
            return self.scale
        if self.kind == "logistic":
            return 0.25 * self.scale
        raise ValueError(f"{self.kind} components need an explicit Lipschitz bound")

    def __call__(self, t):
        return _kind_value(self.kind, np.asarray(t, float), self.param, self.value) * self.scale

    def derivative(self, t):
        return _kind_deriv(self.kind, np.asarray(t, float), self.param, self.deriv) * self.scale


def square(target=0.0, scale=1.0):
    return ComponentFunction("square", float(target), scale)


def quadratic_half(target=0.0, scale=1.0):
    return ComponentFunction("quadratic_half", float(target), scale)


def logistic(label, scale=1.0, sigma=None, lips=None):
    label = -1.0 if label in (0, -1) else 1.0
    return ComponentFunction("logistic", label, scale, sigma, lips)


def poisson(count, scale=1.0, sigma=None, lips=None):
    if count < 0:
        raise ValueError("Poisson counts must be non-negative")
    return ComponentFunction("poisson", float(count), scale, sigma, lips)


def custom(value, deriv, sigma=0.0, lips=1.0, scale=1.0):
    return ComponentFunction("custom", 0.0, scale, sigma, lips, value, deriv)


def _kind_value(kind, t, y, fn=None):
    if kind == "square":
        return (t - y) ** 2
    if kind == "quadratic_half":
        return 0.5 * (t - y) ** 2
    if kind == "logistic":
        return np.logaddexp(0.0, -y * t)
    if kind == "poisson":
        return np.exp(t) - y * t + gammaln(y + 1.0)
    return np.array([fn(float(s)) for s in np.ravel(t)]).reshape(np.shape(t))


def _kind_deriv(kind, t, y, fn=None):
    if kind == "square":
        return 2.0 * (t - y)
    if kind == "quadratic_half":
        return t - y
    if kind == "logistic":
        return -y * expit(-y * t)
    if kind == "poisson":
        return np.exp(t) - y
    return np.array([fn(float(s)) for s in np.ravel(t)]).reshape(np.shape(t))


# ---------------------------------------------------------------------------
# problem


class ErmProblem:
    """Data of ``F(x) = (1/n) sum_i f_i(a_i^T x) + <b, x>``.

    Parameters
    ----------
    components : sequence of ComponentFunction
        One loss per row of ``features``.
    features : array_like or scipy sparse matrix, shape (n, p)
        Rows ``a_i``.
    linear : array_like, shape (p,), optional
        The vector ``b``; zero when omitted.
    lips_total : float, optional
        Lipschitz constant of the gradient of ``F``.  Defaults to
        ``(1/n) lambda_max(sum_i L_i a_i a_i^T)``.
    """

    def __init__(self, components, features, linear=None, lips_total=None):
        self.components = tuple(components)
        if sp.issparse(features):
            self.A = sp.csr_matrix(features, dtype=float)
        else:
            self.A = np.atleast_2d(np.array(features, dtype=float))
        self.n, self.p = self.A.shape
        if len(self.components) != self.n:
            raise ValueError(f"{len(self.components)} components for {self.n} feature rows")
        self.b = np.zeros(self.p) if linear is None else np.asarray(linear, float).ravel().copy()
        if self.b.shape != (self.p,):
            raise ValueError("linear term does not match the feature dimension")
        kinds = np.array([c.kind for c in self.components])
        self._params = np.array([c.param for c in self.components])
        self._scales = np.array([c.scale for c in self.components])
        self._groups = []
        for kind in KINDS:
            idx = np.flatnonzero(kinds == kind)
            if idx.size:
                self._groups.append((kind, idx))
        self._single = self._groups[0][0] if len(self._groups) == 1 and self._groups[0][0] != "custom" else None
        self.sigmas = np.array([c.strong_convexity for c in self.components])
        self._lips = None
        self._lips_total = None if lips_total is None else float(lips_total)
        if isinstance(self.A, np.ndarray):
            self.A.setflags(write=False)
        self.b.setflags(write=False)

    # -- per-component evaluation ---------------------------------------------

    @property
    def lips(self) -> np.ndarray:
        if self._lips is None:
            self._lips = np.array([c.lipschitz for c in self.components])
        return self._lips

    @property
    def sigma_min(self) -> float:
        return float(self.sigmas.min())

    def values(self, t, idx=None) -> np.ndarray:
        return self._apply(_kind_value, t, idx)

    def derivs(self, t, idx=None) -> np.ndarray:
        return self._apply(_kind_deriv, t, idx)

    def _apply(self, fn, t, idx):
        t = np.asarray(t, dtype=float)
        if idx is None:
            params, scales = self._params, self._scales
        else:
            params, scales = self._params[idx], self._scales[idx]
        if self._single is not None:
            return fn(self._single, t, params) * scales
        out = np.empty_like(t)
        if idx is None:
            for kind, gi in self._groups:
                out[gi] = self._group_eval(fn, kind, t[gi], gi)
        else:
            idx = np.asarray(idx)
            for kind, gi in self._groups:
                sel = np.flatnonzero(np.isin(idx, gi))
                if sel.size:
                    out[sel] = self._group_eval(fn, kind, t[sel], idx[sel])
        return out

    def _group_eval(self, fn, kind, t, rows):
        if kind != "custom":
            return fn(kind, t, self._params[rows]) * self._scales[rows]
        out = np.empty_like(t)
        for k, (s, r) in enumerate(zip(t, rows)):
            c = self.components[r]
            cb = c.value if fn is _kind_value else c.deriv
            out[k] = cb(float(s)) * c.scale
        return out

    # -- objective and gradients ---------------------------------------------

    def margins(self, x) -> np.ndarray:
        return np.asarray(self.A @ x).ravel()

    def image(self, coords) -> np.ndarray:
        """``A @ coords`` touching only the nonzero coordinates."""
        coords = np.asarray(coords, dtype=float)
        nz = np.flatnonzero(coords)
        if nz.size == 0:
            return np.zeros(self.n)
        if nz.size > self.p // 4:
            return self.margins(coords)
        return np.asarray(self.columns[:, nz] @ coords[nz]).ravel()

    @property
    def columns(self):
        """Column-friendly view of ``A`` (CSC when sparse)."""
        if not sp.issparse(self.A):
            return self.A
        if not hasattr(self, "_csc"):
            self._csc = self.A.tocsc()
        return self._csc

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.objective_from_margins(self.margins(x), x)

    def objective_from_margins(self, t, x) -> float:
        return float(np.mean(self.values(t)) + self.b @ x)

    def full_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.gradient_from_margins(self.margins(x))

    def gradient_from_margins(self, t, idx=None) -> np.ndarray:
        """``(1/m) sum_{j in idx} f_j'(t_j) a_j + b`` with ``t`` the margins of all rows."""
        if idx is None:
            r = self.derivs(t)
            return np.asarray(self.A.T @ r).ravel() / self.n + self.b
        r = self.derivs(t[idx], idx)
        return np.asarray(self.A[idx].T @ r).ravel() / len(idx) + self.b

    def sample_gradient(self, x, m: int, rng: np.random.Generator) -> np.ndarray:
        """Mini-batch gradient over ``m`` rows drawn without replacement."""
        idx = sample_without_replacement(rng, self.n, int(m))
        if m == self.n:
            return self.full_gradient(x)
        x = np.asarray(x, dtype=float)
        t = np.asarray(self.A[idx] @ x).ravel()
        r = self.derivs(t, idx)
        return np.asarray(self.A[idx].T @ r).ravel() / m + self.b

    def variance_form(self, x, m: int) -> float:
        """Exact ``E||g - grad F(x)||^2`` for a size-``m`` batch without replacement.

        With ``c_i = f_i'(a_i^T x) a_i``, the value is
        ``(1/m - 1/n) [ (1/n) sum_i ||c_i||^2 - 1/(n(n-1)) sum_{i != j} <c_i, c_j> ]``.
        """
        if self.n < 2:
            raise ValueError("variance form needs at least two components")
        if not 1 <= m <= self.n:
            raise ValueError(f"batch size {m} outside [1, {self.n}]")
        return (1.0 / m - 1.0 / self.n) * self._variance_bracket(self.margins(x))

    def _variance_bracket(self, t) -> float:
        n = self.n
        r = self.derivs(t)
        if sp.issparse(self.A):
            sq = np.asarray(self.A.multiply(self.A).sum(axis=1)).ravel()
        else:
            sq = np.einsum("ij,ij->i", self.A, self.A)
        diag = float(np.sum(r ** 2 * sq))
        s = np.asarray(self.A.T @ r).ravel()
        cross = float(s @ s) - diag
        return diag / n - cross / (n * (n - 1))

    # -- smoothness ----------------------------------------------------------

    @property
    def lips_total(self) -> float:
        if self._lips_total is None:
            self._lips_total = spectral_lipschitz(self.A, self.lips)
        return self._lips_total

    def lips_upper_bound(self) -> float:
        """Cheap bound ``(1/n) sum_i L_i ||a_i||^2``."""
        if sp.issparse(self.A):
            sq = np.asarray(self.A.multiply(self.A).sum(axis=1)).ravel()
        else:
            sq = np.einsum("ij,ij->i", self.A, self.A)
        return float(np.sum(self.lips * sq) / self.n)

    def hessian(self, x) -> np.ndarray:
        """Dense Hessian of ``F`` (desk scale, built-in kinds only)."""
        t = self.margins(x)
        h = np.empty(self.n)
        for kind, gi in self._groups:
            y = self._params[gi]
            if kind == "square":
                h[gi] = 2.0
            elif kind == "quadratic_half":
                h[gi] = 1.0
            elif kind == "logistic":
                s = expit(-y * t[gi])
                h[gi] = s * (1.0 - s)
            elif kind == "poisson":
                h[gi] = np.exp(t[gi])
            else:
                raise ValueError("custom components have no Hessian")
        h = h * self._scales
        A = self.A.toarray() if sp.issparse(self.A) else self.A
        return (A.T * h) @ A / self.n

    def __repr__(self):
        kinds = ",".join(k for k, _ in self._groups)
        return f"ErmProblem(n={self.n}, p={self.p}, kinds={kinds})"


def spectral_lipschitz(A, lips, dense_limit=3000) -> float:
    """``(1/n) lambda_max(sum_i L_i a_i a_i^T)``; falls back to the squared-norm bound."""
    n = A.shape[0]
    w = np.sqrt(np.asarray(lips, float))
    if sp.issparse(A):
        B = sp.diags(w) @ A
    else:
        B = A * w[:, None]
    try:
        if min(B.shape) <= dense_limit:
            Bd = B.toarray() if sp.issparse(B) else B
            G = Bd.T @ Bd if Bd.shape[1] <= Bd.shape[0] else Bd @ Bd.T
            top = float(np.linalg.eigvalsh(G)[-1])
        else:
            from scipy.sparse.linalg import svds

            s = svds(B, k=1, return_singular_vectors=False, random_state=0)
            top = float(s[0]) ** 2 * (1.0 + 1e-6)
        return max(top, 0.0) / n
    except Exception:
        if sp.issparse(B):
            return float(B.multiply(B).sum() / n)
        return float(np.sum(B * B) / n)


# ---------------------------------------------------------------------------
# batch schedules


@dataclass(frozen=True)
class TheoremSchedule:
    """``m_k = ceil(n / (1 + n (1 - rho)^(2 alpha k)))``."""

    rho: float
    alpha: float = 0.5

    def __post_init__(self):
        if not 0 < self.rho < 1 or not 0 < self.alpha < 1:
            raise ValueError("rho and alpha must lie in (0, 1)")


@dataclass(frozen=True)
class GeometricGrowth:
    """``m_k = min(n, ceil(m0 * factor^k))``."""

    m0: float = 1.0
    factor: float = 1.1

    def __post_init__(self):
        if self.m0 <= 0 or self.factor < 1:
            raise ValueError("need m0 > 0 and factor >= 1")


@dataclass(frozen=True)
class FullBatch:
    pass


@dataclass(frozen=True)
class BatchSchedule:
    n: int
    mode: object = field(default_factory=FullBatch)

    def __call__(self, k: int) -> int:
        return batch_size(self, k)

    def horizon(self) -> int:
        """First ``k`` from which the schedule returns ``n`` forever."""
        n, mode = self.n, self.mode
        if isinstance(mode, FullBatch) or n == 1:
            return 1
        if isinstance(mode, GeometricGrowth):
            if mode.factor == 1.0:
                return 1 if mode.m0 >= n - 1 else 2**62
            k = math.ceil(math.log(max((n - 1) / mode.m0, 1.0)) / math.log(mode.factor))
        else:
            # ceil(n / (1 + n q^k)) = n  iff  n q^k < 1/(n-1)
            q = (1.0 - mode.rho) ** (2.0 * mode.alpha)
            k = math.ceil(math.log(1.0 / (n * (n - 1))) / math.log(q))
        k = max(k, 1)
        while batch_size(self, k) < n:
            k += 1
        return k


def batch_size(schedule: BatchSchedule, k: int) -> int:
    """Batch size ``m_k`` at iteration ``k >= 1``, clamped to ``[1, n]``."""
    n, mode = schedule.n, schedule.mode
    if isinstance(mode, FullBatch):
        m = n
    elif isinstance(mode, GeometricGrowth):
        m = math.ceil(mode.m0 * mode.factor ** min(k, 10_000) - 1e-12)
    elif isinstance(mode, TheoremSchedule):
        q = (1.0 - mode.rho) ** (2.0 * mode.alpha * k)
        m = math.ceil(n / (1.0 + n * q) - 1e-12)
    else:
        raise TypeError(f"unknown schedule mode {mode!r}")
    return int(min(max(m, 1), n))


# ---------------------------------------------------------------------------
# constants


@dataclass
class ConstantsReport:
    """Desk-scale constants of the linear-rate analysis.

    ``grad_bound`` and ``c2_sup`` are heuristic suprema (vertices plus random
    convex combinations).  ``theta``-dependent fields are ``None`` when the
    Hoffman constant is out of reach.  The drop-step probability exponent of
    the rate analysis is an assumption about the run, not a computable
    constant, and is not reported.  The bound ``L <= (sum_i L_i ||a_i||)/n``
    sometimes quoted for the gradient Lipschitz constant is not used; ``lips``
    is the spectral value.
    """

    diameter: float
    grad_bound: float
    lips: float
    c1: float
    c2_sup: float
    sigma_min: float
    omega: Optional[float]
    theta: Optional[float]
    kappa: Optional[float]
    rho: Optional[float]
    rho_hat: Optional[float]
    vertex_budget: int
    n_blocks: int = 1
    blocks_sampled: int = 1

    def to_dict(self) -> dict:
        return {k: ("unavailable" if v is None else v) for k, v in asdict(self).items()}


def estimate_constants(problem: ErmProblem, spec: PolytopeSpec, *, samples=1000, seed=0,
                       caratheodory=False, theta=None, rho=None, blocks_sampled=None) -> ConstantsReport:
    """Compute ``D, G, L, C_1, C_2, theta, kappa, Omega, rho, rho_hat``.

    Parameters
    ----------
    samples : int
        Random convex combinations of vertices added to the vertex set when
        approximating the suprema of ``G`` and ``C_2``.
    theta : float, optional
        Hoffman constant to use instead of brute force.
    rho : float, optional
        Overrides the computed rate (reported as given).
    blocks_sampled : int, optional
        ``r`` for the block rate; defaults to the number of blocks.
    """
    verts = np.array([v.coords for v in spec.vertices()])
    nv = len(verts)
    diffs = verts[:, None, :] - verts[None, :, :]
    D = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diffs, diffs))))
    rng = make_rng(seed, 7)
    pts = [verts]
    if samples and nv > 1:
        w = rng.dirichlet(np.full(nv, 0.5), size=samples)
        pts.append(w @ verts)
        pairs = rng.integers(0, nv, size=(samples, 2))
        lam = rng.random(samples)[:, None]
        pts.append(lam * verts[pairs[:, 0]] + (1 - lam) * verts[pairs[:, 1]])
    pts = np.vstack(pts)
    n = problem.n
    G, C2 = 0.0, 0.0
    for x in pts:
        t = problem.margins(x)
        G = max(G, float(np.linalg.norm(problem.derivs(t))) / n)
        if n >= 2:
            C2 = max(C2, problem._variance_bracket(t))
    A = problem.A.toarray() if sp.issparse(problem.A) else problem.A
    normA = float(np.linalg.norm(A, 2))
    normb = float(np.linalg.norm(problem.b))
    L = problem.lips_total
    C1 = G * D * normA + D * normb
    try:
        omega = compute_omega(spec).omega
    except PolytopeError:
        omega = None
    if theta is None:
        stack = np.vstack([spec.rows, A, problem.b[None, :]])
        if stack.shape[0] <= MAX_HOFFMAN_ROWS:
            theta = compute_hoffman(stack)
    sigma = problem.sigma_min
    kappa = None
    if theta is not None and sigma > 0:
        kappa = theta ** 2 * (D * normb + 3 * G * D * normA + (2 * n / sigma) * (G ** 2 + 1))
    N = spec.dim + 1 if caratheodory else nv
    q = len(spec.blocks)
    r = q if blocks_sampled is None else int(blocks_sampled)
    rho_hat = None
    if rho is None and kappa is not None and omega is not None:
        denom = 8 * N ** 2 * kappa * D * max(G, L * D)
        rho = omega ** 2 / denom
        rho_hat = r * omega ** 2 / (denom * q ** 2)
    return ConstantsReport(D, G, L, C1, C2, sigma, omega, theta, kappa, rho, rho_hat, N, q, r)
