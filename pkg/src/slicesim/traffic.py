"""Periodic deterministic packet generation and per-user FIFO buffers.

Times are in milliseconds. Arrivals falling inside TTI [t, t + tti) are
enqueued at the TTI boundary t, which is also their recorded arrival time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .network import UserSpec

_EPS = 1e-9


@dataclass
class Packet:
    owner: int
    size: int
    arrival_ts: float
    tx_start_ts: Optional[float] = None
    tx_end_ts: Optional[float] = None
    sent: int = 0

    @property
    def remaining(self) -> int:
        return self.size - self.sent

    @property
    def in_flight(self) -> bool:
        return self.sent > 0 and self.tx_end_ts is None


@dataclass
class UserBuffer:
    queue: deque = field(default_factory=deque)
    bits: int = 0  # B_k, unsent bits of all queued packets

    def __len__(self) -> int:
        return len(self.queue)

    def push(self, packets) -> None:
        for p in packets:
            self.queue.append(p)
            self.bits += p.remaining

    def check(self) -> None:
        assert self.bits == sum(p.remaining for p in self.queue), "buffer bit count out of sync"


def arrivals_in_tti(t: float, interval: float, tti: float = 1.0) -> int:
    """Number of arrival instants n*interval (n >= 0) inside [t, t + tti)."""
    first = math.ceil(t / interval - _EPS)
    end = math.ceil((t + tti) / interval - _EPS)
    return max(0, end - first)


def generate_arrivals(t: float, spec: UserSpec, tti: float = 1.0) -> list[Packet]:
    n = arrivals_in_tti(t, spec.arrival_interval, tti)
    return [Packet(owner=spec.id, size=spec.packet_size, arrival_ts=t) for _ in range(n)]


def drop_expired(buffer: UserBuffer, t: float, d_max: float) -> list[Packet]:
    """Remove unsent packets older than d_max (strictly) and return them."""
    if not buffer.queue:
        return []
    dropped = []
    kept = deque()
    for p in buffer.queue:
        if p.sent == 0 and t - p.arrival_ts > d_max + _EPS:
            dropped.append(p)
            buffer.bits -= p.remaining
        else:
            kept.append(p)
    buffer.queue = kept
    return dropped


def dequeue_bits(buffer: UserBuffer, bits: int, t: float, tti: float = 1.0) -> list[tuple[Packet, bool]]:
    """Send up to `bits` from the head of the queue during TTI [t, t + tti).

    Completed packets are popped with tx_end_ts = t + tti; a partially sent
    head packet stays queued with its progress recorded.
    """
    out = []
    budget = int(bits)
    while budget > 0 and buffer.queue:
        p = buffer.queue[0]
        if p.tx_start_ts is None:
            p.tx_start_ts = t
        take = min(budget, p.remaining)
        p.sent += take
        budget -= take
        buffer.bits -= take
        if p.remaining == 0:
            p.tx_end_ts = t + tti
            buffer.queue.popleft()
            out.append((p, True))
        else:
            out.append((p, False))
    return out
