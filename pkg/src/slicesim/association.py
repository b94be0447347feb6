"""User-ORU association: tau metric, IQRA, LIQRA and the max-SNR baseline.

All selectors work on one slice at a time and return 1-based association
vectors (``v[k] = m``) alongside the one-hot matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .network import SliceId, enumerate_associations, vector_to_matrix
from .phy import McsTable, NR_MU0, Numerology, prbs_required
from .scheduler import ScheduleResult, grant_order, schedule
from .snapshot import NetworkSnapshot


class InfeasibleAssociation(RuntimeError):
    pass


@dataclass(frozen=True)
class WeightPair:
    w1: float
    w2: float


@dataclass(frozen=True)
class SliceParams:
    """Everything association needs to know about one slice."""

    slice: SliceId
    users: np.ndarray  # 0-based global user indices, ascending
    prb_budget: int
    lut: McsTable
    fronthaul_cap: float = math.inf  # bits/s
    beta: float = 0.01
    floor: float = 1e3
    tau_cap: float = 100.0
    scoring: Literal["raw", "minmax"] = "raw"
    tau_weighting: Literal["per_user", "per_oru"] = "per_user"
    prb_scope: Literal["per_oru", "network"] = "per_oru"
    enumeration_cap: int = 50_000
    numerology: Numerology = NR_MU0

    @property
    def tti_s(self) -> float:
        return self.numerology.tti_ms * 1e-3


@dataclass
class TauState:
    global_: np.ndarray  # tau^g per ORU
    last: np.ndarray  # tau observed in the latest TTI

    @classmethod
    def initial(cls, M: int) -> "TauState":
        return cls(np.zeros(M), np.zeros(M))

    def commit(self, tau_now) -> None:
        tau_now = np.asarray(tau_now, dtype=float)
        self.last = tau_now.copy()
        self.global_ = update_tau_global(self.global_, tau_now)


def compute_tau(c_m, j_m, cap: float = 100.0):
    """Buffered bits over transmitted bits, with total conventions for J = 0."""
    c = np.asarray(c_m, dtype=float)
    j = np.asarray(j_m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(j > 0, c / np.where(j > 0, j, 1.0), np.where(c > 0, cap, 0.0))
    return float(tau) if tau.ndim == 0 else tau


def update_tau_global(prev, tau_now):
    out = (np.asarray(tau_now, dtype=float) + np.asarray(prev, dtype=float)) / 2
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LinkTable:
    """Per (slice user, ORU) link quantities for one snapshot."""

    sinr_db: np.ndarray  # (K_s, M)
    mcs: np.ndarray  # (K_s, M) LUT row index
    b_prb: np.ndarray  # (K_s, M) bits per PRB
    required: np.ndarray  # (K_s, M) PRBs to empty the buffer
    buffer_bits: np.ndarray  # (K_s,)
    avg: np.ndarray  # (K_s,) PF averages


def link_table(snapshot: NetworkSnapshot, params: SliceParams) -> LinkTable:
    users = params.users
    sinr = snapshot.sinr()[users]
    with np.errstate(divide="ignore"):
        sinr_db = 10 * np.log10(sinr)
    mcs = params.lut.index(sinr_db)
    b_prb = params.lut.bits_per_prb_table(params.numerology)[mcs]
    b_k = snapshot.buffer_bits[users].astype(np.int64)
    req = prbs_required(b_k[:, None], b_prb)
    avg = snapshot.pf_avg.get(params.slice)
    if avg is None:
        avg = np.full(users.size, params.floor)
    return LinkTable(sinr_db, mcs, b_prb, req, b_k, np.asarray(avg, dtype=float))


def schedule_slice(serving, links: LinkTable, params: SliceParams, M: int) -> ScheduleResult:
    """PF schedule for a committed 0-based serving vector."""
    serving = np.asarray(serving)
    n = serving.size
    rows = np.arange(n)
    req = links.required[rows, serving]
    bpp = links.b_prb[rows, serving]
    prb = np.zeros(n, dtype=np.int64)
    tx = np.zeros(n, dtype=np.int64)
    groups = [np.arange(n)] if params.prb_scope == "network" else \
        [np.flatnonzero(serving == m) for m in range(M)]
    for g in groups:
        if g.size == 0:
            continue
        res = schedule(req[g], bpp[g], links.buffer_bits[g], links.avg[g], params.prb_budget,
                       params.beta, params.floor, params.tti_s)
        prb[g] = res.prb
        tx[g] = res.tx_bits
    return ScheduleResult(prb, tx)


def oru_tau(serving, sched: ScheduleResult, links: LinkTable, M: int, cap: float):
    """Per-ORU C_m, J_m and tau_m for a serving vector and its schedule."""
    serving = np.asarray(serving)
    C = np.bincount(serving, weights=links.buffer_bits, minlength=M)
    J = np.bincount(serving, weights=sched.tx_bits, minlength=M)
    return C, J, compute_tau(C, J, cap)


@dataclass(frozen=True)
class CandidateScore:
    index: int
    vector: np.ndarray  # 1-based
    ad: float  # raw-mode AD
    prb_term: int
    tau_term: float
    feasible: bool
    prb_assigned: np.ndarray
    tau_global: np.ndarray  # tau^g_{m,i}


def _tau_term(counts, tau_g, weighting: str) -> float:
    # sequential in ORU order so every code path rounds identically
    total = 0.0
    for m in range(len(tau_g)):
        n = int(counts[m])
        if n == 0:
            continue
        total = total + (n * float(tau_g[m]) if weighting == "per_user" else float(tau_g[m]))
    return total


def evaluate_candidate(vector, weights: WeightPair, snapshot: NetworkSnapshot, params: SliceParams,
                       index: int = -1, links: LinkTable | None = None) -> CandidateScore:
    vector = np.asarray(vector, dtype=int)
    M = snapshot.M
    vector_to_matrix(vector, M)  # validates range
    links = links or link_table(snapshot, params)
    serving = vector - 1
    sched = schedule_slice(serving, links, params, M)
    _, _, tau = oru_tau(serving, sched, links, M, params.tau_cap)
    prev = snapshot.tau_global.get(params.slice, np.zeros(M))
    tau_g = (tau + prev) / 2
    counts = np.bincount(serving, minlength=M)
    prb_term = int(sched.prb.sum())
    tau_term = _tau_term(counts, tau_g, params.tau_weighting)
    ad = weights.w1 * prb_term - weights.w2 * tau_term
    feasible = _feasible(serving, sched, params, M)
    return CandidateScore(index, vector, ad, prb_term, tau_term, feasible, sched.prb, tau_g)


def _feasible(serving, sched: ScheduleResult, params: SliceParams, M: int) -> bool:
    if params.prb_scope == "network":
        ok = sched.prb.sum() <= params.prb_budget
    else:
        ok = bool((np.bincount(serving, weights=sched.prb, minlength=M) <= params.prb_budget).all())
    if ok and math.isfinite(params.fronthaul_cap):
        ok = sched.tx_bits.sum() / params.tti_s <= params.fronthaul_cap
    return bool(ok)


def minmax(x, axis=None):
    x = np.asarray(x, dtype=float)
    lo = np.min(x, axis=axis, keepdims=True)
    hi = np.max(x, axis=axis, keepdims=True)
    span = hi - lo
    return np.where(span > 0, (x - lo) / np.where(span > 0, span, 1.0), 0.0)


@dataclass(frozen=True)
class IqraResult:
    vector: np.ndarray  # 1-based winner
    matrix: np.ndarray
    index: int
    ad: float
    schedule: ScheduleResult
    tau_now: np.ndarray  # realized tau_m of the winner, for the tau^g commit
    n_candidates: int


def subset_schedules(links: LinkTable, m: int, params: SliceParams):
    """PF outcome at ORU m for every subset of slice users (bitmask-indexed).

    Returns (prb (2**K, K), tx (2**K, K)). One merged grant order serves all
    subsets: a subset's grants are the first `budget` entries of that order
    belonging to its members.
    """
    K = params.users.size
    n_masks = 1 << K
    req = links.required[:, m]
    bpp = links.b_prb[:, m]
    cap = np.minimum(req, params.prb_budget)
    order = grant_order(cap, bpp, links.buffer_bits, links.avg, params.beta, params.floor, params.tti_s)
    masks = np.arange(n_masks)[:, None]
    member = ((masks >> order[None, :]) & 1).astype(bool)  # (2**K, L)
    take = member & (np.cumsum(member, axis=1) <= params.prb_budget)
    onehot = order[:, None] == np.arange(K)[None, :]  # (L, K)
    prb = take.astype(np.int64) @ onehot.astype(np.int64)
    tx = np.minimum(links.buffer_bits[None, :], prb * bpp[None, :])
    return prb, tx


def _candidate_table(snapshot: NetworkSnapshot, params: SliceParams, links: LinkTable):
    """Score every candidate from per-(ORU, user subset) schedules.

    With per-ORU budgets an ORU's schedule depends only on which slice users it
    serves, so M tables over 2**K subsets cover all M**K candidates.
    """
    K, M = params.users.size, snapshot.M
    vectors = enumerate_associations(K, M, params.enumeration_cap)
    serving = vectors - 1
    n_masks = 1 << K
    prev = snapshot.tau_global.get(params.slice, np.zeros(M))
    bits = (np.arange(n_masks)[:, None] >> np.arange(K)[None, :]) & 1  # (2**K, K)
    counts_tab = bits.sum(axis=1)
    C_tab = bits @ links.buffer_bits
    prb_tab = np.zeros((M, n_masks), dtype=np.int64)
    tx_tab = np.zeros((M, n_masks), dtype=np.int64)
    ok_tab = np.ones((M, n_masks), dtype=bool)
    tau_tab = np.zeros((M, n_masks))
    for m in range(M):
        prb, tx = subset_schedules(links, m, params)
        prb_tab[m] = prb.sum(axis=1)
        tx_tab[m] = tx.sum(axis=1)
        ok_tab[m] = prb_tab[m] <= params.prb_budget
        tau_tab[m] = compute_tau(C_tab, tx_tab[m], params.tau_cap)
    tau_g_tab = (tau_tab + prev[:, None]) / 2
    bitw = 1 << np.arange(K)
    masks = np.stack([((serving == m) * bitw).sum(axis=1) for m in range(M)], axis=1)  # (I, M)

    prb_term = np.zeros(len(vectors), dtype=np.int64)
    tau_term = np.zeros(len(vectors))
    tx_total = np.zeros(len(vectors), dtype=np.int64)
    feasible = np.ones(len(vectors), dtype=bool)
    for m in range(M):
        mk = masks[:, m]
        prb_term += prb_tab[m, mk]
        tx_total += tx_tab[m, mk]
        feasible &= ok_tab[m, mk]
        n = counts_tab[mk]
        term = n * tau_g_tab[m, mk] if params.tau_weighting == "per_user" else tau_g_tab[m, mk]
        tau_term = tau_term + np.where(n > 0, term, 0.0)
    if math.isfinite(params.fronthaul_cap):
        feasible &= tx_total / params.tti_s <= params.fronthaul_cap
    return vectors, prb_term, tau_term, feasible


def _candidate_table_generic(snapshot, params, links):
    K, M = params.users.size, snapshot.M
    vectors = enumerate_associations(K, M, params.enumeration_cap)
    scores = [evaluate_candidate(v, WeightPair(1.0, 1.0), snapshot, params, i, links)
              for i, v in enumerate(vectors)]
    return (vectors, np.array([s.prb_term for s in scores]), np.array([s.tau_term for s in scores]),
            np.array([s.feasible for s in scores]))


def ad_values(weights: WeightPair, prb_term, tau_term, feasible, scoring: str) -> np.ndarray:
    if scoring == "minmax":
        p = minmax(prb_term[feasible]) if feasible.any() else prb_term
        t = minmax(tau_term[feasible]) if feasible.any() else tau_term
        P = np.zeros(len(prb_term))
        T = np.zeros(len(tau_term))
        P[feasible] = p
        T[feasible] = t
        ad = weights.w1 * P - weights.w2 * T
    else:
        ad = weights.w1 * prb_term - weights.w2 * tau_term
    return np.where(feasible, ad, -np.inf)


def iqra_select(weights: WeightPair, snapshot: NetworkSnapshot, params: SliceParams) -> IqraResult:
    """Exhaustive weighted selection over all M**K association vectors."""
    links = link_table(snapshot, params)
    M = snapshot.M
    if params.prb_scope == "per_oru":
        vectors, prb_term, tau_term, feasible = _candidate_table(snapshot, params, links)
    else:
        vectors, prb_term, tau_term, feasible = _candidate_table_generic(snapshot, params, links)
    if not feasible.any():
        raise InfeasibleAssociation(f"no feasible association for slice {params.slice.value}")
    ad = ad_values(weights, prb_term, tau_term, feasible, params.scoring)
    best = int(np.argmax(ad))  # first maximum = lowest index
    v = vectors[best]
    sched = schedule_slice(v - 1, links, params, M)
    _, _, tau_now = oru_tau(v - 1, sched, links, M, params.tau_cap)
    return IqraResult(v, vector_to_matrix(v, M), best, float(ad[best]), sched, tau_now, len(vectors))


def liqra_scores(weights: WeightPair, snapshot: NetworkSnapshot, params: SliceParams) -> np.ndarray:
    """Per-user score matrix (K_s, M) for the low-complexity selector."""
    M = snapshot.M
    with np.errstate(divide="ignore"):
        zeta_db = 10 * np.log10(snapshot.snr()[params.users])
    tau_g = np.broadcast_to(snapshot.tau_global.get(params.slice, np.zeros(M)), zeta_db.shape)
    if params.scoring == "minmax":
        zeta_db = minmax(zeta_db, axis=1)
        tau_g = minmax(tau_g, axis=1)
    return weights.w1 * zeta_db - weights.w2 * tau_g


def liqra_select(weights: WeightPair, snapshot: NetworkSnapshot, params: SliceParams):
    """Independent per-user argmax; returns (vector, matrix)."""
    v = np.argmax(liqra_scores(weights, snapshot, params), axis=1) + 1
    return v, vector_to_matrix(v, snapshot.M)


def max_snr_select(snapshot: NetworkSnapshot, params: SliceParams):
    v = np.argmax(snapshot.snr()[params.users], axis=1) + 1
    return v, vector_to_matrix(v, snapshot.M)
