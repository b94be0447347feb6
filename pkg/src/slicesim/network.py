"""Static network description: users, ORUs, slice budgets and association space.

Association vectors follow the 1-based convention ``v[k] = m`` (user k is served
by ORU m, m in 1..M). Matrices are K x M one-hot int arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .config import SimConfig


class SliceId(str, enum.Enum):
    E = "eMBB"
    U = "URLLC"


@dataclass(frozen=True)
class UserSpec:
    id: int  # 1..K over the whole network
    slice: SliceId
    r_min: float  # bits/s
    d_max: float  # ms
    packet_size: int  # bits
    arrival_interval: float  # ms
    speed: float  # km/h

    def __post_init__(self):
        for name in ("r_min", "d_max", "packet_size", "arrival_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"UserSpec.{name} must be > 0")
        if self.speed < 0:
            raise ValueError("UserSpec.speed must be >= 0")


@dataclass(frozen=True)
class OruSpec:
    id: int  # 1..M
    position: tuple[float, float]
    height: float
    tx_power: float  # mW

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError("OruSpec.tx_power must be > 0")


@dataclass(frozen=True)
class SliceBudget:
    slice: SliceId
    prb_count: int
    fronthaul_cap: float = math.inf  # bits/s

    def __post_init__(self):
        if self.prb_count < 1:
            raise ValueError("SliceBudget.prb_count must be >= 1")


class EnumerationCapExceeded(ValueError):
    """M**K exceeds the configured candidate cap; use LIQRA at this scale."""


def grid_positions(count: int, spacing: float, area: tuple[float, float]) -> list[tuple[float, float]]:
    """Square grid with `spacing`, centred in the area."""
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    x0 = area[0] / 2 - spacing * (cols - 1) / 2
    y0 = area[1] / 2 - spacing * (rows - 1) / 2
    return [(x0 + spacing * (i % cols), y0 + spacing * (i // cols)) for i in range(count)]


@dataclass(frozen=True)
class Network:
    users: tuple[UserSpec, ...]
    orus: tuple[OruSpec, ...]
    budgets: dict
    area: tuple[float, float]
    ue_height: float

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def M(self) -> int:
        return len(self.orus)

    def slice_users(self, s: SliceId) -> np.ndarray:
        """0-based indices of the users belonging to slice `s`."""
        return np.array([i for i, u in enumerate(self.users) if u.slice == s], dtype=int)

    @property
    def tx_power(self) -> np.ndarray:
        return np.array([o.tx_power for o in self.orus], dtype=float)

    @property
    def oru_xy(self) -> np.ndarray:
        return np.array([o.position for o in self.orus], dtype=float)

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Network":
        net = cfg.network
        positions = net.oru_positions_m or grid_positions(net.oru_count, net.oru_spacing_m, net.area_m)
        orus = tuple(
            OruSpec(id=i + 1, position=tuple(map(float, p)), height=net.oru_height_m,
                    tx_power=net.oru_tx_power_mw)
            for i, p in enumerate(positions)
        )
        users = []
        budgets = {}
        for sid in SliceId:
            sc = getattr(cfg.slices, sid.value)
            for _ in range(sc.users):
                users.append(UserSpec(
                    id=len(users) + 1, slice=sid, r_min=sc.r_min_mbps * 1e6, d_max=sc.d_max_ms,
                    packet_size=sc.packet_size_bytes * 8, arrival_interval=sc.arrival_interval_ms,
                    speed=sc.speed_kmh,
                ))
            cap = math.inf if sc.fronthaul_cap_bps is None else sc.fronthaul_cap_bps
            budgets[sid] = SliceBudget(sid, sc.prb_count, cap)
        return cls(tuple(users), orus, budgets, tuple(net.area_m), net.ue_height_m)


def enumerate_associations(K: int, M: int, cap: int = 50_000) -> np.ndarray:
    """All M**K association vectors (1-based ORU ids) in lexicographic order."""
    if K < 1 or M < 1:
        raise ValueError("K and M must be >= 1")
    count = M ** K
    if count > cap:
        raise EnumerationCapExceeded(
            f"M**K = {M}**{K} = {count} candidates exceeds cap {cap}"
        )
    # mixed-radix digits of 0..count-1, most significant digit first
    idx = np.arange(count)
    powers = M ** np.arange(K - 1, -1, -1)
    return (idx[:, None] // powers[None, :]) % M + 1


def vector_to_matrix(v, M: int) -> np.ndarray:
    v = np.asarray(v, dtype=int)
    if v.ndim != 1:
        raise ValueError("association vector must be 1-D")
    if np.any(v < 1) or np.any(v > M):
        raise ValueError(f"association vector entries must be in 1..{M}, got {v.tolist()}")
    A = np.zeros((v.size, M), dtype=int)
    A[np.arange(v.size), v - 1] = 1
    return A


def matrix_to_vector(A) -> np.ndarray:
    A = np.asarray(A)
    check_one_hot(A)
    return np.argmax(A, axis=1) + 1


def check_one_hot(A) -> None:
    A = np.asarray(A)
    if A.ndim != 2 or not np.isin(A, (0, 1)).all() or not (A.sum(axis=1) == 1).all():
        raise ValueError("association matrix rows must be one-hot")
