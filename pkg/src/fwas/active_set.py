"""Vertex representation of an iterate and its update rules."""

from __future__ import annotations

import warnings

import numpy as np

from .polytopes import Vertex, first_min

EPS_DROP = 1e-12
WEIGHT_SLACK = 1e-10


class InvariantError(RuntimeError):
    """Raised when solver state violates a structural invariant."""


class ActiveSet:
    """Convex combination ``x = sum_v mu_v v`` keyed by vertex id.

    Entries are kept in insertion order; ties in :meth:`away` go to the
    lowest vertex id regardless of that order.
    """

    def __init__(self, entries=None):
        self._entries = {}
        if entries:
            for v, w in entries:
                self._entries[v.id] = (v, float(w))

    @classmethod
    def singleton(cls, v: Vertex) -> "ActiveSet":
        return cls([(v, 1.0)])

    def __len__(self):
        return len(self._entries)

    def __contains__(self, vid):
        return vid in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def copy(self) -> "ActiveSet":
        out = ActiveSet()
        out._entries = dict(self._entries)
        return out

    def weight(self, vid) -> float:
        e = self._entries.get(vid)
        return 0.0 if e is None else e[1]

    @property
    def ids(self):
        return list(self._entries)

    def weights(self) -> dict:
        return {k: w for k, (_, w) in self._entries.items()}

    def reconstruct(self) -> np.ndarray:
        if not self._entries:
            raise InvariantError("empty active set")
        it = iter(self._entries.values())
        v, w = next(it)
        x = w * v.coords
        for v, w in it:
            x = x + w * v.coords
        return x

    def away(self, c):
        """Active vertex maximizing ``<c, v>`` and its weight."""
        if not self._entries:
            raise InvariantError("away vertex requested from an empty active set")
        c = np.asarray(c, dtype=float)
        ids = sorted(self._entries)
        vals = [-float(c @ self._entries[vid][0].coords) for vid in ids]
        return self._entries[ids[first_min(vals)]]

    # -- weight updates ------------------------------------------------------

    def update(self, kind: str, gamma: float, p: Vertex | None = None, u: Vertex | None = None):
        """Apply the vertex representation update in place.

        ``kind`` is ``"fw"`` (move toward ``p``) or ``"away"`` (move away
        from ``u``).  Returns True when a vertex was dropped.
        """
        gamma = float(gamma)
        dropped = False
        if kind == "away":
            if u is None or u.id not in self._entries:
                raise InvariantError("away vertex is not active")
            scale = 1.0 + gamma
            new = {k: (v, w * scale) for k, (v, w) in self._entries.items()}
            v, w = new[u.id]
            w = w - gamma
            if w < -WEIGHT_SLACK:
                raise InvariantError(f"away step overshoots: weight {w:.3e}")
            if w <= EPS_DROP:
                del new[u.id]
                dropped = True
            else:
                new[u.id] = (v, w)
        elif kind == "fw":
            if p is None:
                raise InvariantError("FW update needs the target vertex")
            if gamma > 1.0 + WEIGHT_SLACK or gamma < 0:
                raise InvariantError(f"FW step {gamma} outside [0, 1]")
            if gamma >= 1.0:
                self._entries = {p.id: (p, 1.0)}
                return len(self._entries) == 0
            scale = 1.0 - gamma
            new = {}
            for k, (v, w) in self._entries.items():
                w = w * scale
                if w <= EPS_DROP:
                    dropped = True
                    continue
                new[k] = (v, w)
            w_p = (new[p.id][1] if p.id in new else 0.0) + gamma
            if w_p > EPS_DROP:
                new[p.id] = (p, w_p)
            else:
                new.pop(p.id, None)
            if not new:
                raise InvariantError("FW update emptied the active set")
        else:
            raise ValueError(f"unknown update kind {kind!r}")
        total = sum(w for _, w in new.values())
        self._entries = {k: (v, w / total) for k, (v, w) in new.items()}
        return dropped

    def check(self, x=None, tol=1e-8):
        """Raise :class:`InvariantError` unless weights form a simplex (and reconstruct ``x``)."""
        ws = np.array([w for _, w in self._entries.values()])
        if ws.size == 0 or np.any(ws <= 0) or abs(ws.sum() - 1.0) > WEIGHT_SLACK:
            raise InvariantError(f"invalid active-set weights (sum {ws.sum():.3e})")
        if x is not None:
            err = float(np.linalg.norm(self.reconstruct() - x))
            if err > tol:
                raise InvariantError(f"active set reconstructs x with error {err:.3e}")


def vru_update(active: ActiveSet, kind: str, gamma: float, p=None, u=None) -> ActiveSet:
    """Functional form of :meth:`ActiveSet.update`; returns a new active set."""
    out = active.copy()
    out.update(kind, gamma, p, u)
    return out


def caratheodory_reduce(active: ActiveSet, x=None, tol=1e-10):
    """Rewrite the combination with at most ``p + 1`` affinely independent vertices.

    Returns ``(reduced, ok)``; ``ok`` is False when a numerical rank failure
    left the input unchanged.
    """
    entries = sorted(active, key=lambda e: e[0].id)
    if not entries:
        raise InvariantError("empty active set")
    p = entries[0][0].coords.shape[0]
    if len(entries) <= p + 1:
        return active.copy(), True
    verts = [e[0] for e in entries]
    mu = np.array([e[1] for e in entries])
    target = active.reconstruct() if x is None else np.asarray(x, float)
    while True:
        V = np.array([v.coords for v in verts])
        M = np.vstack([V.T, np.ones(len(verts))])
        _, s, vt = np.linalg.svd(M)
        rank = int(np.sum(s > tol * max(s[0], 1.0)))
        if rank == len(verts):
            break
        z = vt[-1]
        # two shift directions (z and -z); each drives some weight to zero
        best = None
        for sign in (1.0, -1.0):
            zz = sign * z
            pos = zz > tol
            if not np.any(pos):
                continue
            t = float(np.min(mu[pos] / zz[pos]))
            new = mu - t * zz
            hits = np.flatnonzero(pos & (new <= tol * max(1.0, mu.max())))
            rest = np.delete(new, hits)
            # prefer the shift that leaves the largest smallest weight
            key = (-(rest.min() if rest.size else 0.0), t, min(verts[i].id for i in hits) if hits.size else 0)
            if best is None or key < best[0]:
                best = (key, new, hits)
        if best is None:
            warnings.warn("Caratheodory reduction hit a rank failure", RuntimeWarning)
            return active.copy(), False
        _, new, hits = best
        new[hits] = 0.0
        keep = new > 0
        verts = [v for v, k in zip(verts, keep) if k]
        mu = np.clip(new[keep], 0.0, None)
        mu = mu / mu.sum()
    out = ActiveSet(list(zip(verts, mu)))
    if np.linalg.norm(out.reconstruct() - target) > 1e-8:
        warnings.warn("Caratheodory reduction lost accuracy; keeping the input", RuntimeWarning)
        return active.copy(), False
    return out, True
