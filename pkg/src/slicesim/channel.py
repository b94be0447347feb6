"""User mobility, large-scale pathloss/shadowing, Rayleigh fading, SINR/SNR."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ChannelConfig

SPEED_OF_LIGHT = 299_792_458.0


@dataclass
class MobilityState:
    """Random-waypoint mobility. Positions and waypoints in metres, speed in m/s."""

    position: np.ndarray  # (K, 2)
    waypoint: np.ndarray  # (K, 2)
    speed: np.ndarray  # (K,)
    area: tuple[float, float]

    @property
    def heading(self) -> np.ndarray:
        d = self.waypoint - self.position
        return np.arctan2(d[:, 1], d[:, 0])

    def copy(self) -> "MobilityState":
        return MobilityState(self.position.copy(), self.waypoint.copy(), self.speed.copy(), self.area)

    @classmethod
    def initial(cls, speeds_kmh, area, rng: np.random.Generator) -> "MobilityState":
        speeds = np.asarray(speeds_kmh, dtype=float) / 3.6
        K = speeds.size
        pos = rng.uniform((0.0, 0.0), area, size=(K, 2))
        wp = rng.uniform((0.0, 0.0), area, size=(K, 2))
        return cls(pos, wp, speeds, tuple(area))


def step_mobility(state: MobilityState, dt_ms: float, rng: np.random.Generator) -> MobilityState:
    """Advance every user by a path length of exactly speed * dt.

    Users that reach their waypoint draw a new one uniformly in the area and
    spend the remaining distance heading towards it.
    """
    if dt_ms <= 0:
        raise ValueError("dt must be > 0")
    out = state.copy()
    remaining = out.speed * dt_ms * 1e-3
    active = remaining > 0
    while active.any():
        delta = out.waypoint - out.position
        dist = np.hypot(delta[:, 0], delta[:, 1])
        reach = active & (dist <= remaining)
        move = active & ~reach
        if move.any():
            frac = remaining[move] / dist[move]
            out.position[move] += delta[move] * frac[:, None]
            remaining[move] = 0.0
        if reach.any():
            out.position[reach] = out.waypoint[reach]
            remaining[reach] -= dist[reach]
            idx = np.flatnonzero(reach)
            out.waypoint[idx] = rng.uniform((0.0, 0.0), out.area, size=(idx.size, 2))
        active = remaining > 0
    return out


def reference_loss_db(carrier_hz: float, d0: float = 1.0) -> float:
    """Free-space loss at the reference distance."""
    return 20 * math.log10(4 * math.pi * d0 * carrier_hz / SPEED_OF_LIGHT)


def pathloss_db(distance, exponent: float = 3.5, carrier_hz: float = 26e9, d0: float = 1.0):
    """Log-distance pathloss, clamped below at the reference distance."""
    d = np.maximum(np.asarray(distance, dtype=float), d0)
    return reference_loss_db(carrier_hz, d0) + 10 * exponent * np.log10(d / d0)


def distances(user_xy: np.ndarray, oru_xy: np.ndarray, oru_height: np.ndarray | float,
              ue_height: float) -> np.ndarray:
    """3-D user-ORU distances (K, M) from planar positions and antenna heights."""
    d2 = np.linalg.norm(user_xy[:, None, :] - oru_xy[None, :, :], axis=2)
    dh = np.asarray(oru_height, dtype=float) - ue_height
    return np.sqrt(d2 ** 2 + dh ** 2)


def rayleigh_power(rng: np.random.Generator, shape) -> np.ndarray:
    """|h|^2 for h circularly-symmetric complex Gaussian with unit variance."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re * re + im * im) / 2.0


@dataclass(frozen=True)
class ChannelState:
    gain: np.ndarray  # (K, M) linear power gain incl. fading
    distance: np.ndarray  # (K, M) metres
    tti: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.gain).all() and (self.gain > 0).all()):
            raise ValueError("channel gains must be finite and positive")

    @property
    def gain_db(self) -> np.ndarray:
        return 10 * np.log10(self.gain)


@dataclass
class ChannelModel:
    """Draws per-TTI channel states; shadowing is held for `shadowing_period_tti`."""

    cfg: ChannelConfig
    oru_xy: np.ndarray
    oru_height: np.ndarray
    ue_height: float
    fading_rng: np.random.Generator
    shadow_rng: np.random.Generator
    _shadow: np.ndarray | None = field(default=None, init=False)

    def draw(self, mobility: MobilityState, tti: int) -> ChannelState:
        d = distances(mobility.position, self.oru_xy, self.oru_height, self.ue_height)
        K, M = d.shape
        if self._shadow is None or tti % self.cfg.shadowing_period_tti == 0:
            self._shadow = self.shadow_rng.normal(0.0, 1.0, size=(K, M)) * self.cfg.shadowing_std_db
        h2 = rayleigh_power(self.fading_rng, (K, M))
        return draw_gain(d, self._shadow, h2, self.cfg, tti)


def draw_gain(d, shadow_db, h2, cfg: ChannelConfig, tti: int = 0) -> ChannelState:
    pl = pathloss_db(d, cfg.pathloss_exponent, cfg.carrier_ghz * 1e9, cfg.reference_distance_m)
    gain = 10 ** (-(pl + shadow_db) / 10) * h2
    # guard against a zero fading draw
    gain = np.maximum(gain, np.finfo(float).tiny)
    return ChannelState(gain=gain, distance=np.asarray(d, dtype=float), tti=tti)


def sinr_matrix(gain: np.ndarray, powers: np.ndarray, sigma2: float) -> np.ndarray:
    """Linear SINR (K, M); every other ORU interferes at full power."""
    rx = gain * powers[None, :]
    total = rx.sum(axis=1, keepdims=True)
    interference = np.maximum(total - rx, 0.0)
    return rx / (interference + sigma2)


def snr_matrix(gain: np.ndarray, powers: np.ndarray, sigma2: float) -> np.ndarray:
    return gain * powers[None, :] / sigma2


def sinr(k: int, m: int, channel: ChannelState, powers, sigma2: float) -> float:
    powers = np.asarray(powers, dtype=float)
    row = channel.gain[k] * powers
    interference = row.sum() - row[m]
    return float(row[m] / (interference + sigma2))


def snr(k: int, m: int, channel: ChannelState, power: float, sigma2: float) -> float:
    return float(power * channel.gain[k, m] / sigma2)


def db(x):
    return 10 * np.log10(x)


def from_db(x):
    return 10 ** (np.asarray(x, dtype=float) / 10)
