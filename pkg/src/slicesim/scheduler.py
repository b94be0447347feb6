"""Greedy proportional-fair PRB allocation within a slice budget."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PfState:
    """Exponentially averaged served rate per user (bits/s)."""

    avg: np.ndarray
    beta: float = 0.01
    floor: float = 1e3

    @classmethod
    def initial(cls, n: int, beta: float = 0.01, floor: float = 1e3) -> "PfState":
        return cls(np.full(n, floor, dtype=float), beta, floor)

    def copy(self) -> "PfState":
        return PfState(self.avg.copy(), self.beta, self.floor)


def update_pf_state(pf: PfState, served_bits, tti_s: float = 1e-3) -> PfState:
    rate = np.asarray(served_bits, dtype=float) / tti_s
    avg = (1 - pf.beta) * pf.avg + pf.beta * rate
    return PfState(np.maximum(avg, pf.floor), pf.beta, pf.floor)


@dataclass(frozen=True)
class ScheduleResult:
    prb: np.ndarray  # PRBs granted per user
    tx_bits: np.ndarray  # bits sent per user

    @property
    def total_prb(self) -> int:
        return int(self.prb.sum())


def metric_table(cap, b_prb, buffer_bits, avg, beta: float, floor: float, tti_s: float):
    """PF metric of each user's n-th PRB (n < cap), shape (users, max cap).

    Each row is nonincreasing: the running average includes the bits granted
    so far in this TTI.
    """
    n_max = int(cap.max()) if cap.size else 0
    pos = np.arange(n_max)
    granted = np.minimum(pos[None, :] * b_prb[:, None], buffer_bits[:, None])
    denom = np.maximum(floor, (1 - beta) * avg[:, None] + beta * granted / tti_s)
    rate = b_prb / tti_s
    return rate[:, None] / denom, pos[None, :] < cap[:, None]


def grant_order(cap, b_prb, buffer_bits, avg, beta: float, floor: float, tti_s: float) -> np.ndarray:
    """User index of every grantable PRB, in the order greedy PF hands them out.

    Greedy PF over nonincreasing per-user metric sequences is a k-way merge, so
    the order is a sort by (metric desc, user asc, position asc).
    """
    metric, valid = metric_table(cap, b_prb, buffer_bits, avg, beta, floor, tti_s)
    users = np.broadcast_to(np.arange(cap.size)[:, None], metric.shape)
    pos = np.broadcast_to(np.arange(metric.shape[1])[None, :], metric.shape)
    m, u, p = -metric[valid], users[valid], pos[valid]
    return u[np.lexsort((p, u, m))]


def schedule(required, b_prb, buffer_bits, avg, budget: int, beta: float = 0.01,
             floor: float = 1e3, tti_s: float = 1e-3) -> ScheduleResult:
    """Grant PRBs one at a time to the user with the highest PF metric.

    The metric is achievable rate over the running average, where the average
    already includes what the user was granted earlier in this TTI. Users never
    receive more than `required` PRBs; ties go to the lower array index.
    """
    required = np.asarray(required, dtype=np.int64)
    b_prb = np.asarray(b_prb, dtype=np.int64)
    buffer_bits = np.asarray(buffer_bits, dtype=np.int64)
    avg = np.asarray(avg, dtype=float)
    budget = int(budget)
    if required.sum() <= budget:
        prb = required.copy()
    elif required.size == 1:
        prb = np.minimum(required, budget)
    else:
        cap = np.minimum(required, budget)
        order = grant_order(cap, b_prb, buffer_bits, avg, beta, floor, tti_s)
        prb = np.bincount(order[:budget], minlength=required.size).astype(np.int64)
    tx = np.minimum(buffer_bits, prb * b_prb)
    return ScheduleResult(prb, tx)
