"""Graph-guided fused LASSO for multi-task regression.

Objective::

    1/2 ||Y - X B||_F^2 + gamma sum_{e=(m,l)} |r_ml| sum_j |B_jm - sign(r_ml) B_jl| + lam ||B||_1

The task graph joins tasks whose sample correlation is at least ``tau`` in
absolute value.  Every connected component of the graph becomes one block
of a product polytope: the component's columns of ``B`` plus the auxiliary
variables that lift the absolute values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import erm
from ..erm import ErmProblem, make_rng
from ..polytopes import lifted_graph_l1_ball, product


@dataclass
class GflassoInstance:
    X: np.ndarray
    Y: np.ndarray
    B_true: np.ndarray
    tau: float
    corr: np.ndarray
    edges: list  # (m, l, r_ml) with m < l
    components: list  # sorted task lists
    lam: float = 30.0
    gamma: float = 30.0

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def n_tasks(self):
        return self.Y.shape[1]

    def objective(self, B) -> float:
        """True (unsmoothed) GFLASSO objective."""
        R = self.Y - self.X @ B
        val = 0.5 * float(np.sum(R * R)) + self.lam * float(np.abs(B).sum())
        for m, l, r in self.edges:
            val += self.gamma * abs(r) * float(np.abs(B[:, m] - np.sign(r) * B[:, l]).sum())
        return val

    def save(self, directory):
        """Write X, Y, B_true as CSV and the graph as JSON."""
        os.makedirs(directory, exist_ok=True)
        np.savetxt(os.path.join(directory, "X.csv"), self.X, delimiter=",")
        np.savetxt(os.path.join(directory, "Y.csv"), self.Y, delimiter=",")
        np.savetxt(os.path.join(directory, "B_true.csv"), self.B_true, delimiter=",")
        with open(os.path.join(directory, "graph.json"), "w") as fh:
            json.dump({"edges": [[int(m), int(l), float(r)] for m, l, r in self.edges],
                       "tau": self.tau, "lam": self.lam, "gamma": self.gamma}, fh, indent=1)


def load_gflasso(directory) -> GflassoInstance:
    X = np.atleast_2d(np.loadtxt(os.path.join(directory, "X.csv"), delimiter=","))
    Y = np.atleast_2d(np.loadtxt(os.path.join(directory, "Y.csv"), delimiter=","))
    B = np.atleast_2d(np.loadtxt(os.path.join(directory, "B_true.csv"), delimiter=","))
    with open(os.path.join(directory, "graph.json")) as fh:
        g = json.load(fh)
    return make_instance(X, Y, g["tau"], B_true=B, lam=g["lam"], gamma=g["gamma"])


def correlation_graph(Y, tau):
    """Edges ``(m, l, r_ml)`` with ``|r_ml| >= tau`` and the connected components."""
    corr = np.atleast_2d(np.corrcoef(np.atleast_2d(Y), rowvar=False))
    K = corr.shape[0]
    edges = [(m, l, float(corr[m, l])) for m in range(K) for l in range(m + 1, K)
             if abs(corr[m, l]) >= tau]
    parent = list(range(K))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m, l, _ in edges:
        ra, rb = find(m), find(l)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for k in range(K):
        groups.setdefault(find(k), []).append(k)
    comps = sorted(groups.values(), key=lambda c: c[0])
    return corr, edges, comps


def make_instance(X, Y, tau, B_true=None, lam=30.0, gamma=30.0) -> GflassoInstance:
    corr, edges, comps = correlation_graph(Y, tau)
    if B_true is None:
        B_true = np.zeros((X.shape[1], Y.shape[1]))
    return GflassoInstance(np.asarray(X, float), np.asarray(Y, float), np.asarray(B_true, float),
                           float(tau), corr, edges, comps, float(lam), float(gamma))


def gen_gflasso_data(seed=0, N=200, J=50, K=20, tau=0.7, group_size=5, lam=30.0, gamma=30.0) -> GflassoInstance:
    """Simulated multi-task association data with block-correlated outputs.

    Tasks are split into consecutive groups of ``group_size``; each group
    shares a random support of ``J // (n_groups + 1)`` features
    (disjoint across groups) with coefficients equal to one.  ``X`` and the
    noise are standard normal.
    """
    rng = make_rng(seed, 0)
    X = rng.standard_normal((N, J))
    n_groups = max(1, -(-K // group_size))
    support = max(1, J // (n_groups + 1))
    perm = rng.permutation(J)
    B = np.zeros((J, K))
    for gi in range(n_groups):
        feats = perm[gi * support:(gi + 1) * support]
        tasks = np.arange(gi * group_size, min((gi + 1) * group_size, K))
        B[np.ix_(feats, tasks)] = 1.0
    Y = X @ B + rng.standard_normal((N, K))
    return make_instance(X, Y, tau, B, lam, gamma)


@dataclass
class GflassoLayout:
    """Where each component's variables live in the lifted vector.

    For component ``c`` with tasks ``T_c`` and edges ``E_c``, the block is
    feature-major: for feature ``j`` the slots ``(b, u, v)`` hold
    ``B[j, T_c]``, their absolute-value bounds and one bound per edge.
    """

    offsets: list
    tasks: list
    edges: list  # per component: list of (local m, local l, sign, |r|)
    n_features: int

    def group_width(self, c):
        return 2 * len(self.tasks[c]) + len(self.edges[c])

    def coefficients(self, x) -> np.ndarray:
        """Recover ``B`` from a lifted point."""
        x = np.asarray(x, dtype=float)
        K = sum(len(t) for t in self.tasks)
        B = np.zeros((self.n_features, K))
        for c, tasks in enumerate(self.tasks):
            w = self.group_width(c)
            blk = x[self.offsets[c]:self.offsets[c] + self.n_features * w].reshape(self.n_features, w)
            B[:, tasks] = blk[:, :len(tasks)]
        return B

    def lift(self, B) -> np.ndarray:
        """Tightest lifted point for a coefficient matrix."""
        parts = []
        for c, tasks in enumerate(self.tasks):
            Bc = B[:, tasks]
            cols = [Bc, np.abs(Bc)]
            if self.edges[c]:
                cols.append(np.column_stack([np.abs(Bc[:, m] - s * Bc[:, l]) for m, l, s, _ in self.edges[c]]))
            parts.append(np.hstack(cols).ravel())
        return np.concatenate(parts)


def build_gflasso(inst: GflassoInstance):
    """Lifted finite-sum problem with one product block per task component.

    Each (sample, task) pair is one component ``n/2 (t - Y_ik)^2`` so that
    ``F`` equals the GFLASSO objective exactly; ``n = N K``.  The block
    budget is ``||Y_c||_F^2 / 2``, an upper bound on the penalty of any
    point that improves on ``B = 0``.

    Returns
    -------
    problem : ErmProblem
    polytope : PolytopeSpec
        Product of lifted graph l1-balls, one per component.
    layout : GflassoLayout
    """
    X, Y = inst.X, inst.Y
    N, J = X.shape
    K = Y.shape[1]
    if not inst.lam > 0:
        raise ValueError("l1 penalty must be positive")
    n = N * K
    blocks, offsets, tasks_all, edges_all = [], [], [], []
    b_parts = []
    rows, cols, vals = [], [], []
    pos = 0
    task_col = {}
    for comp in inst.components:
        if not comp:
            raise ValueError("empty component")
        local = {k: i for i, k in enumerate(comp)}
        cedges = []
        if inst.gamma > 0:
            for m, l, r in inst.edges:
                if m in local and l in local:
                    cedges.append((local[m], local[l], 1 if r >= 0 else -1, abs(r)))
        nc = len(comp)
        w = 2 * nc + len(cedges)
        edge_w = [inst.gamma * a for *_, a in cedges]
        R = 0.5 * float(np.sum(Y[:, comp] ** 2))
        blocks.append(lifted_graph_l1_ball(R, nc, [(m, l, s) for m, l, s, _ in cedges],
                                           [inst.lam] * nc, edge_w, J))
        group_b = np.concatenate([np.zeros(nc), np.full(nc, inst.lam), np.array(edge_w)])
        b_parts.append(np.tile(group_b, J))
        for i, k in enumerate(comp):
            task_col[k] = pos + np.arange(J) * w + i
        offsets.append(pos)
        tasks_all.append(list(comp))
        edges_all.append(cedges)
        pos += J * w
    for k in range(K):
        r0 = k * N
        rows.append(np.repeat(np.arange(r0, r0 + N), J))
        cols.append(np.tile(task_col[k], N))
        vals.append(X.ravel())
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, pos))
    targets = Y.T.ravel()
    comps = [erm.quadratic_half(v, scale=float(n)) for v in targets]
    lips = float(np.linalg.eigvalsh(X.T @ X)[-1])
    problem = ErmProblem(comps, A, np.concatenate(b_parts), lips_total=lips)
    layout = GflassoLayout(offsets, tasks_all, edges_all, J)
    return problem, product(blocks), layout
