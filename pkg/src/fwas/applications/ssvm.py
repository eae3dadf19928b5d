"""Structural SVM on chain-structured sequences, solved in the dual.

The dual variable of example ``i`` lives on the simplex over all labelings
of that sequence.  It is never stored densely: each example keeps the
labelings it has visited (an :class:`~fwas.active_set.ActiveSet` keyed by
the labeling's lexicographic rank) together with the primal pieces
``w_i = sum_y alpha_i(y) psi_i(y) / (lam n)`` and
``l_i = sum_y alpha_i(y) L_i(y) / n``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from ..active_set import ActiveSet, InvariantError
from ..erm import BatchSchedule, FullBatch, batch_size, make_rng, sample_without_replacement
from ..polytopes import Vertex
from ..trace import TraceRecord

log = logging.getLogger("fwas")

MAX_ACTIVE_LABELS = 500
TIE_TOL = 1e-12


@dataclass
class SsvmDataset:
    """Sequences with discrete observations and labels.

    Features are one-hot(observation) x one-hot(label) per position plus
    one-hot(label pair) per transition, so ``d = n_obs * n_labels + n_labels^2``.
    The task loss is the Hamming distance divided by the sequence length.
    """

    observations: list
    labels: list
    n_labels: int
    n_obs: int

    def __post_init__(self):
        self.observations = [np.asarray(o, dtype=np.int64) for o in self.observations]
        self.labels = [np.asarray(y, dtype=np.int64) for y in self.labels]
        if len(self.observations) != len(self.labels):
            raise ValueError("one label sequence per observation sequence")
        for o, y in zip(self.observations, self.labels):
            if o.size == 0 or o.shape != y.shape:
                raise ValueError("sequences must be non-empty and aligned")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.n_obs * self.n_labels + self.n_labels ** 2

    def feature_indices(self, i, y):
        o = self.observations[i]
        y = np.asarray(y, dtype=np.int64)
        S = self.n_labels
        unary = o * S + y
        pair = self.n_obs * S + y[:-1] * S + y[1:]
        return np.concatenate([unary, pair])

    def phi(self, i, y) -> np.ndarray:
        return np.bincount(self.feature_indices(i, y), minlength=self.dim).astype(float)

    def psi(self, i, y) -> np.ndarray:
        """``phi(x_i, y_i) - phi(x_i, y)``."""
        return self.phi(i, self.labels[i]) - self.phi(i, y)

    def loss(self, i, y) -> float:
        gold = self.labels[i]
        return float(np.count_nonzero(np.asarray(y) != gold)) / gold.size

    def label_id(self, y) -> int:
        """Rank of a labeling in lexicographic order."""
        code = 0
        for s in np.asarray(y).tolist():
            code = code * self.n_labels + s
        return code

    def save_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"n_labels": self.n_labels, "n_obs": self.n_obs}) + "\n")
            for o, y in zip(self.observations, self.labels):
                fh.write(json.dumps({"x": o.tolist(), "y": y.tolist()}) + "\n")


def load_ssvm_jsonl(path) -> SsvmDataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        obs, labs = [], []
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                obs.append(rec["x"])
                labs.append(rec["y"])
    return SsvmDataset(obs, labs, header["n_labels"], header["n_obs"])


def gen_ssvm_data(seed=0, n=200, n_labels=5, n_obs=8, min_len=6, max_len=10, noise=0.3) -> SsvmDataset:
    """Noisy hidden-Markov sequences.

    Labels follow a Markov chain with a random sticky transition matrix;
    label ``s`` emits observation ``s mod n_obs`` with probability
    ``1 - noise`` and a uniformly random observation otherwise.
    """
    rng = make_rng(seed, 0)
    S = n_labels
    trans = rng.dirichlet(np.ones(S), size=S) + 2.0 * np.eye(S)
    trans /= trans.sum(axis=1, keepdims=True)
    obs, labs = [], []
    for _ in range(n):
        T = int(rng.integers(min_len, max_len + 1))
        y = np.empty(T, dtype=np.int64)
        y[0] = rng.integers(S)
        for t in range(1, T):
            y[t] = rng.choice(S, p=trans[y[t - 1]])
        flip = rng.random(T) < noise
        o = np.where(flip, rng.integers(0, n_obs, size=T), y % n_obs)
        obs.append(o)
        labs.append(y)
    return SsvmDataset(obs, labs, S, n_obs)


# ---------------------------------------------------------------------------
# decoding


def _split_weights(w, ds: SsvmDataset):
    S = ds.n_labels
    unary = w[:ds.n_obs * S].reshape(ds.n_obs, S)
    pair = w[ds.n_obs * S:].reshape(S, S)
    return unary, pair


@njit(cache=True)
def _chain_argmax(U, pair, tol):
    """Lexicographically smallest maximizer of ``sum_t U[t, y_t] + sum_t pair[y_{t-1}, y_t]``."""
    T, S = U.shape
    V = np.empty((T, S))
    V[T - 1] = U[T - 1]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            best = -np.inf
            for s2 in range(S):
                val = pair[s, s2] + V[t + 1, s2]
                if val > best:
                    best = val
            V[t, s] = U[t, s] + best
    y = np.empty(T, dtype=np.int64)
    for t in range(T):
        top = -np.inf
        for s in range(S):
            val = V[t, s] if t == 0 else pair[y[t - 1], s] + V[t, s]
            if val > top:
                top = val
        thresh = top - tol * (1.0 + abs(top))
        for s in range(S):
            val = V[t, s] if t == 0 else pair[y[t - 1], s] + V[t, s]
            if val >= thresh:
                y[t] = s
                break
    return y


def viterbi_decode(w, ds: SsvmDataset, i: int, loss_augmented=True, mask=None) -> np.ndarray:
    """Highest-scoring labeling of sequence ``i`` under weights ``w``.

    The score is ``<w, phi(x_i, y)>`` plus, when ``loss_augmented``, the
    normalized Hamming loss against the gold labels; equivalently the
    maximizer of ``L_i(y) - <w, psi_i(y)>``.  ``mask`` (coordinate indices)
    zeroes every other weight first.  Ties go to the lexicographically
    smallest labeling: values are accumulated backward and labels chosen
    forward, smallest index first.
    """
    w = np.asarray(w, dtype=float)
    if mask is not None:
        wm = np.zeros_like(w)
        wm[mask] = w[mask]
        w = wm
    o = ds.observations[i]
    T = o.size
    if T == 0:
        raise ValueError("empty sequence")
    unary_w, pair = _split_weights(w, ds)
    U = unary_w[o]
    if loss_augmented:
        U = U + 1.0 / T
        U[np.arange(T), ds.labels[i]] -= 1.0 / T
    return _chain_argmax(np.ascontiguousarray(U), np.ascontiguousarray(pair), TIE_TOL)


def decode_all(w, ds: SsvmDataset, loss_augmented=True) -> list:
    """Loss-augmented decode of every sequence, batched by length."""
    w = np.asarray(w, dtype=float)
    unary_w, pair = _split_weights(w, ds)
    out = [None] * ds.n
    by_len = {}
    for i, o in enumerate(ds.observations):
        by_len.setdefault(o.size, []).append(i)
    for T, idx in by_len.items():
        obs = np.array([ds.observations[i] for i in idx])
        gold = np.array([ds.labels[i] for i in idx])
        U = unary_w[obs]  # B x T x S
        if loss_augmented:
            U = U + 1.0 / T
            np.put_along_axis(U, gold[..., None], np.take_along_axis(U, gold[..., None], 2) - 1.0 / T, 2)
        V = np.empty_like(U)
        V[:, -1] = U[:, -1]
        for t in range(T - 2, -1, -1):
            V[:, t] = U[:, t] + np.max(pair[None] + V[:, t + 1][:, None, :], axis=2)
        Y = np.empty((len(idx), T), dtype=np.int64)
        Y[:, 0] = _batched_first(V[:, 0])
        for t in range(1, T):
            Y[:, t] = _batched_first(pair[Y[:, t - 1]] + V[:, t])
        for row, i in enumerate(idx):
            out[i] = Y[row]
    return out


def _batched_first(M):
    top = M.max(axis=1, keepdims=True)
    return np.argmax(M >= top - TIE_TOL * (1.0 + np.abs(top)), axis=1)


# ---------------------------------------------------------------------------
# state and gap


@dataclass
class SsvmState:
    w: np.ndarray
    ell: float
    w_i: np.ndarray
    ell_i: np.ndarray
    actives: list
    w_avg: np.ndarray
    ell_avg: float
    lam: float

    def dual_objective(self, averaged=False) -> float:
        w, ell = (self.w_avg, self.ell_avg) if averaged else (self.w, self.ell)
        return 0.5 * self.lam * float(w @ w) - ell

    def check(self, tol=1e-10):
        if np.max(np.abs(self.w - self.w_i.sum(axis=0))) > tol * max(1.0, np.abs(self.w).max()):
            raise InvariantError("w drifted from the sum of per-example pieces")
        if abs(self.ell - self.ell_i.sum()) > tol:
            raise InvariantError("loss term drifted from the sum of per-example pieces")
        for a in self.actives:
            a.check()


def init_state(ds: SsvmDataset, lam: float) -> SsvmState:
    """Every example starts at its gold labeling: ``w = 0`` and ``l = 0``."""
    d = ds.dim
    actives = []
    for i in range(ds.n):
        y = ds.labels[i]
        actives.append(ActiveSet.singleton(Vertex(ds.label_id(y), np.zeros(d + 1))))
    return SsvmState(np.zeros(d), 0.0, np.zeros((ds.n, d)), np.zeros(ds.n), actives,
                     np.zeros(d), 0.0, float(lam))


def duality_gap(w, ell, ds: SsvmDataset, lam: float):
    """``(gap, relative gap)`` of the dual point with primal pieces ``(w, l)``.

    ``gap = lam <w, w - w_s> - l + l_s`` where ``(w_s, l_s)`` comes from
    loss-augmented decoding of every example under ``w``.  The relative gap
    divides by the absolute dual objective ``lam ||w||^2 / 2 - l`` (infinite
    when that is zero).
    """
    n = ds.n
    w = np.asarray(w, dtype=float)
    ys = decode_all(w, ds, loss_augmented=True)
    psi_sum = np.zeros(ds.dim)
    loss_sum = 0.0
    for i, y in enumerate(ys):
        psi_sum += ds.psi(i, y)
        loss_sum += ds.loss(i, y)
    w_s = psi_sum / (lam * n)
    l_s = loss_sum / n
    gap = lam * float(w @ (w - w_s)) - ell + l_s
    dual = 0.5 * lam * float(w @ w) - ell
    rel = abs(gap / dual) if dual != 0 else np.inf
    return gap, rel


def ssvm_duality_gap(state: SsvmState, ds: SsvmDataset, averaged=False):
    if averaged:
        return duality_gap(state.w_avg, state.ell_avg, ds, state.lam)
    return duality_gap(state.w, state.ell, ds, state.lam)


# ---------------------------------------------------------------------------
# solver


@dataclass
class SsvmConfig:
    """Run parameters of the structural-SVM solvers.

    ``mask_schedule`` sizes the coordinate mask over ``{0..d-1}``
    (``FullBatch()`` disables masking).  ``check_every`` is in iterations
    (default: one pass); a trace row is written at every check.
    ``target_rel_gap`` stops the run once the relative gap of the
    monitored iterate (averaged unless ``averaging`` is off) reaches it.
    """

    max_passes: float = 50.0
    mask_schedule: object = field(default_factory=FullBatch)
    seed: int = 0
    check_every: Optional[int] = None
    target_rel_gap: float = 0.0
    averaging: bool = True
    away_steps: bool = True
    debug: bool = False
    record_time: bool = True


@dataclass
class SsvmRunResult:
    state: SsvmState
    trace: list
    gaps: list = field(default_factory=list)  # (passes, gap, relative gap) of the monitored iterate


def run_ssvm_bcfwas(ds: SsvmDataset, lam: float, config: SsvmConfig) -> SsvmRunResult:
    """Block-coordinate FW with away-steps on the structural-SVM dual.

    Each iteration samples a coordinate mask, picks one example uniformly,
    decodes the FW labeling under the masked weights, finds the away
    labeling among the example's visited labelings, and takes the exactly
    line-searched step (clipped to ``[0, gamma_max]``) in the better of the
    two directions.  The FW/away choice compares the masked directional
    decreases ``lam <w_J, d> - e`` of the two candidates.

    With ``away_steps=False`` this is plain block-coordinate FW.
    """
    if not lam > 0:
        raise ValueError("regularization must be positive")
    n, d = ds.n, ds.dim
    state = init_state(ds, lam)
    mask_sched = BatchSchedule(d, config.mask_schedule)
    mask_rng = make_rng(config.seed, 0)
    pick_rng = make_rng(config.seed, 1)
    check_every = n if config.check_every is None else int(config.check_every)
    max_iter = int(round(config.max_passes * n))
    lam_n = lam * n
    trace, gaps = [], []
    start = time.perf_counter()
    w, w_i, ell_i = state.w, state.w_i, state.ell_i
    picks = pick_rng.integers(0, n, size=max_iter)
    neg1 = np.array([-1.0])

    def record(k, label_counts):
        gap, rel = ssvm_duality_gap(state, ds, averaged=config.averaging)
        if gap < -1e-10:
            raise InvariantError(f"negative duality gap {gap:.3e}")
        passes = k / n
        gaps.append((passes, gap, rel))
        millis = (time.perf_counter() - start) * 1e3 if config.record_time else 0.0
        kinds = ";".join(f"{key}={v}" for key, v in sorted(label_counts.items()))
        trace.append(TraceRecord(k, state.dual_objective(config.averaging), rel, int(last_m[0]),
                                 float(last_gamma[0]), kinds or "Null",
                                 sum(len(a) for a in state.actives), passes, millis))
        return rel

    last_m, last_gamma = [d], [0.0]
    counts = {}
    record(0, counts)
    for k in range(1, max_iter + 1):
        m = batch_size(mask_sched, k)
        last_m[0] = m
        if m < d:
            J = sample_without_replacement(mask_rng, d, m)
            wJ = np.zeros(d)
            wJ[J] = w[J]
        else:
            wJ = w
        i = int(picks[k - 1])
        y_p = viterbi_decode(wJ, ds, i, loss_augmented=True)
        pid = ds.label_id(y_p)
        active = state.actives[i]
        if pid in active:
            p_vert = next(v for v, _ in active if v.id == pid)
        else:
            p_vert = Vertex(pid, np.concatenate([ds.psi(i, y_p), [ds.loss(i, y_p)]]))
        psi_p, loss_p = p_vert.coords[:d], p_vert.coords[d]
        d_fw = psi_p / lam_n - w_i[i]
        e_fw = loss_p / n - ell_i[i]
        kind = "fw"
        if config.away_steps and len(active) > 1:
            u_vert, mu_u = active.away(np.concatenate([wJ, neg1]))
            psi_u, loss_u = u_vert.coords[:d], u_vert.coords[d]
            d_aw = w_i[i] - psi_u / lam_n
            e_aw = ell_i[i] - loss_u / n
            if lam * float(wJ @ d_fw) - e_fw > lam * float(wJ @ d_aw) - e_aw and mu_u < 1.0:
                kind = "away"
        if kind == "fw":
            dvec, e, gmax = d_fw, e_fw, 1.0
        else:
            dvec, e, gmax = d_aw, e_aw, mu_u / (1.0 - mu_u)
        dd = float(dvec @ dvec)
        if dd > 1e-300:
            gamma = (-lam * float(w @ dvec) + e) / (lam * dd)
        else:
            gamma = gmax if e > 0 else 0.0
        gamma = max(0.0, min(gamma, gmax))
        if gamma > 0:
            w_i[i] += gamma * dvec
            ell_i[i] += gamma * e
            w += gamma * dvec
            state.ell += gamma * e
            if kind == "fw":
                active.update("fw", gamma, p=p_vert)
                label = "FullFW" if gamma >= 1.0 else "FW"
            else:
                active.update("away", gamma, u=u_vert)
                label = "Drop" if gamma >= gmax else "Away"
            if len(active) > MAX_ACTIVE_LABELS:
                raise InvariantError(f"example {i} tracks more than {MAX_ACTIVE_LABELS} labelings")
        else:
            label = "Null"
        counts[label] = counts.get(label, 0) + 1
        last_gamma[0] = gamma
        if config.averaging:
            rho = 2.0 / (k + 1)
            state.w_avg = (1.0 - rho) * state.w_avg + rho * w
            state.ell_avg = (1.0 - rho) * state.ell_avg + rho * state.ell
        else:
            state.w_avg = w.copy()
            state.ell_avg = state.ell
        if config.debug:
            state.check()
        if k % check_every == 0 or k == max_iter:
            rel = record(k, counts)
            counts = {}
            if rel <= config.target_rel_gap:
                break
    log.info("ssvm stopped after %d iterations", k if max_iter else 0)
    return SsvmRunResult(state, trace, gaps)
