"""Per-packet and per-user KPIs, windowed aggregation and ECCDF export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .traffic import Packet


class UndefinedDelay(ValueError):
    """Delay requested for a packet that never finished transmission."""


def packet_delay(p: Packet, t_symb: float) -> float:
    """Queueing + transmission + processing delay in ms."""
    if p.tx_start_ts is None or p.tx_end_ts is None:
        raise UndefinedDelay(f"packet of user {p.owner} arriving at {p.arrival_ts} was never sent")
    d_que = p.tx_start_ts - p.arrival_ts
    d_tx = p.tx_end_ts - p.tx_start_ts
    return d_que + d_tx + 2 * t_symb


def user_mean_delay(delays) -> float | None:
    """Mean delay; None when no packet completed (callers pick a sentinel)."""
    delays = np.asarray(list(delays), dtype=float)
    if delays.size == 0:
        return None
    return float(delays.mean())


def user_throughput(prb_assigned: int, b_prb: int, tti_ms: float = 1.0,
                    served_bits: int | None = None) -> float:
    bits = prb_assigned * b_prb
    if served_bits is not None:
        bits = min(bits, served_bits)
    return bits / (tti_ms * 1e-3)


@dataclass(frozen=True)
class KpiWindow:
    throughput: np.ndarray  # bits/s
    delay: np.ndarray  # ms, nan where no packet completed
    ber: np.ndarray  # bit-weighted, nan where nothing was sent
    pdr: np.ndarray
    success_rate: np.ndarray
    completed: np.ndarray
    dropped: np.ndarray
    T: int


class KpiLog:
    """Per-TTI, per-user event counters for a whole run."""

    FIELDS = ("tx_bits", "prb", "ber_bits", "dropped", "completed", "delay_sum")

    def __init__(self, n_tti: int, K: int):
        self.K = K
        self.n = 0
        self.tx_bits = np.zeros((n_tti, K), dtype=np.int64)
        self.prb = np.zeros((n_tti, K), dtype=np.int64)
        self.ber_bits = np.zeros((n_tti, K))
        self.dropped = np.zeros((n_tti, K), dtype=np.int64)
        self.completed = np.zeros((n_tti, K), dtype=np.int64)
        self.delay_sum = np.zeros((n_tti, K))

    def record(self, tx_bits, prb, ber, dropped, completed, delay_sum) -> None:
        i = self.n
        self.tx_bits[i] = tx_bits
        self.prb[i] = prb
        self.ber_bits[i] = np.asarray(ber) * np.asarray(tx_bits)
        self.dropped[i] = dropped
        self.completed[i] = completed
        self.delay_sum[i] = delay_sum
        self.n += 1

    def rows(self, start: int, end: int) -> dict:
        return {f: getattr(self, f)[start:end] for f in self.FIELDS}


def window_summary(events: dict, T: int, tti_ms: float = 1.0) -> KpiWindow:
    """Aggregate the last T TTI rows of `events` (a KpiLog.rows mapping)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    ev = {k: np.asarray(v)[-T:] for k, v in events.items()}
    tx = ev["tx_bits"].sum(axis=0)
    done = ev["completed"].sum(axis=0)
    drop = ev["dropped"].sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        delay = np.where(done > 0, ev["delay_sum"].sum(axis=0) / np.maximum(done, 1), np.nan)
        ber = np.where(tx > 0, ev["ber_bits"].sum(axis=0) / np.maximum(tx, 1), np.nan)
    total = done + drop
    pdr = np.where(total > 0, drop / np.maximum(total, 1), 0.0)
    span_s = ev["tx_bits"].shape[0] * tti_ms * 1e-3
    return KpiWindow(tx / span_s, delay, ber, pdr, 1 - pdr, done, drop, ev["tx_bits"].shape[0])


def eccdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and 1 - i/n for i = 1..n."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("ECCDF of an empty sequence")
    n = x.size
    return x, 1.0 - np.arange(1, n + 1) / n


def emit_eccdf(values, path, label: str | None = None, header: str | None = None) -> Path:
    x, p = eccdf(values)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        if header:
            f.write(f"# {header}\n")
        w = csv.writer(f)
        w.writerow(["algorithm", "value", "ccdf"] if label is not None else ["value", "ccdf"])
        for xi, pi in zip(x, p):
            row = [repr(float(xi)), repr(float(pi))]
            w.writerow([label, *row] if label is not None else row)
    return path
