"""Configuration schema and loading.

A config is one YAML document whose sections mirror the simulation and agent
parameter tables. Omitted fields take the shipped defaults; unknown keys are
rejected so typos in experiment files fail loudly.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SCHEMA_VERSION = 1
PRB_BANDWIDTH_HZ = 180e3


class ConfigError(ValueError):
    """Raised for malformed or contradictory configuration documents."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SliceConfig(_Section):
    users: int = Field(5, ge=0)
    r_min_mbps: float = Field(gt=0)
    d_max_ms: float = Field(gt=0)
    packet_size_bytes: int = Field(gt=0)
    arrival_interval_ms: float = Field(gt=0)
    speed_kmh: float = Field(30.0, ge=0)
    prb_count: int = Field(ge=1)
    fronthaul_cap_bps: Optional[float] = Field(None, gt=0)
    alpha: float = Field(ge=0, le=1)


def _embb() -> SliceConfig:
    return SliceConfig(
        users=5, r_min_mbps=16.0, d_max_ms=10.0, packet_size_bytes=1024,
        arrival_interval_ms=0.5, prb_count=32, alpha=0.7,
    )


def _urllc() -> SliceConfig:
    return SliceConfig(
        users=5, r_min_mbps=3.8, d_max_ms=2.0, packet_size_bytes=480,
        arrival_interval_ms=1.0, prb_count=15, alpha=0.4,
    )


class SlicesConfig(_Section):
    eMBB: SliceConfig = Field(default_factory=_embb)
    URLLC: SliceConfig = Field(default_factory=_urllc)


class NetworkConfig(_Section):
    oru_count: int = Field(4, ge=1)
    oru_spacing_m: float = Field(50.0, gt=0)
    oru_height_m: float = Field(3.0, ge=0)
    oru_tx_power_mw: float = Field(200.0, gt=0)
    # explicit positions override the square-grid placement
    oru_positions_m: Optional[list[tuple[float, float]]] = None
    area_m: tuple[float, float] = (100.0, 100.0)
    ue_height_m: float = Field(1.5, ge=0)
    total_bandwidth_mhz: float = Field(10.0, gt=0)
    prb_scope: Literal["per_oru", "network"] = "per_oru"

    @model_validator(mode="after")
    def _check(self):
        if self.area_m[0] <= 0 or self.area_m[1] <= 0:
            raise ValueError("area_m must be positive")
        if self.oru_positions_m is not None:
            if len(self.oru_positions_m) != self.oru_count:
                raise ValueError("oru_positions_m length must equal oru_count")
            if len(set(self.oru_positions_m)) != len(self.oru_positions_m):
                raise ValueError("ORU positions must be pairwise distinct")
        return self


class ChannelConfig(_Section):
    noise_dbm: float = -146.424
    # provenance only; noise_dbm is used verbatim
    noise_figure_db: float = 5.0
    boltzmann: float = 1.38e-23
    temperature_k: float = 290.0
    pathloss_exponent: float = Field(3.5, gt=0)
    carrier_ghz: float = Field(26.0, gt=0)
    reference_distance_m: float = Field(1.0, gt=0)
    shadowing_std_db: float = Field(8.0, ge=0)
    shadowing_period_tti: int = Field(100, ge=1)


class PhyConfig(_Section):
    numerology: Literal[0] = 0
    lut_path: Optional[str] = None


class SchedulerConfig(_Section):
    beta: float = Field(0.01, gt=0, le=1)
    floor_bps: float = Field(1e3, gt=0)


class AssociationConfig(_Section):
    enumeration_cap: int = Field(50_000, ge=1)
    tau_cap: float = Field(100.0, ge=0)
    scoring: Literal["raw", "minmax"] = "raw"
    tau_weighting: Literal["per_user", "per_oru"] = "per_user"


class AgentConfig(_Section):
    grid_size: int = Field(10, ge=4, le=16)
    hidden: tuple[int, ...] = (256, 256)
    learning_rate: float = Field(1e-3, gt=0)
    batch_size: int = Field(64, ge=1)
    gamma: float = Field(0.995, ge=0, lt=1)
    eps_start: float = Field(1.0, ge=0, le=1)
    eps_min: float = Field(0.01, ge=0, le=1)
    eps_decay: float = Field(0.99, gt=0, le=1)
    target_update: int = Field(100, ge=1)
    replay_capacity: int = Field(10_000, ge=1)
    warmup: int = Field(200, ge=1)
    gain_db_low: float = -160.0
    gain_db_high: float = -40.0
    packet_cap: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.gain_db_high <= self.gain_db_low:
            raise ValueError("gain_db_high must exceed gain_db_low")
        if self.warmup < self.batch_size:
            raise ValueError("warmup must be at least batch_size")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay_capacity must be at least batch_size")
        return self


class RunConfig(_Section):
    seed: int = 0
    iterations: int = Field(3000, ge=1)
    tti_per_step: int = Field(10, ge=1, le=10)
    kpi_window: Optional[int] = Field(None, ge=1)  # defaults to tti_per_step
    report_window: int = Field(100, ge=1)
    checkpoint_every: int = Field(500, ge=1)
    qos_final_steps: int = Field(500, ge=1)
    debug_traces: bool = False


class SimConfig(_Section):
    schema_version: int = SCHEMA_VERSION
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    slices: SlicesConfig = Field(default_factory=SlicesConfig)
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    phy: PhyConfig = Field(default_factory=PhyConfig)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    association: AssociationConfig = Field(default_factory=AssociationConfig)
    agent: AgentConfig = Field(default_factory=AgentConfig)
    run: RunConfig = Field(default_factory=RunConfig)

    @model_validator(mode="after")
    def _check(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(
                f"schema_version {self.schema_version} unsupported (expected {SCHEMA_VERSION})"
            )
        used = sum(s.prb_count for s in (self.slices.eMBB, self.slices.URLLC)) * PRB_BANDWIDTH_HZ
        total = self.network.total_bandwidth_mhz * 1e6
        if used > total + 1e-6:
            raise ValueError(
                f"slices.prb_count: slice PRB budgets need {used / 1e6:.3f} MHz, "
                f"exceeding total bandwidth {self.network.total_bandwidth_mhz} MHz"
            )
        if self.slices.eMBB.users + self.slices.URLLC.users < 1:
            raise ValueError("slices: at least one user is required")
        return self

    @property
    def kpi_window(self) -> int:
        return self.run.kpi_window or self.run.tti_per_step

    def digest(self) -> str:
        """Short stable hash of the fully resolved config."""
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **sections) -> "SimConfig":
        """Return a copy with nested overrides, e.g. run={"seed": 3}."""
        return SimConfig.model_validate(_merge(self.model_dump(), sections))


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def config_from_dict(data: dict | None) -> SimConfig:
    """Validate a (possibly partial) document layered over the defaults."""
    try:
        return SimConfig.model_validate(_merge(SimConfig().model_dump(), data or {}))
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def load_config(source: str | Path | None = None) -> SimConfig:
    """Parse a YAML document (text or path) into a validated SimConfig.

    ``None`` or an empty document yields the defaults.
    """
    if source is None:
        return SimConfig()
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and source.endswith((".yaml", ".yml"))):
        try:
            text = Path(source).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {source}: {err}") from None
    else:
        text = source
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"parse error: {err}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<root>: document must be a mapping")
    return config_from_dict(data)


def default_config_text() -> str:
    return resources.files("slicesim").joinpath("data/default.yaml").read_text()


def noise_mw(cfg: ChannelConfig) -> float:
    return 10 ** (cfg.noise_dbm / 10)


def is_unbounded(cap: float | None) -> bool:
    return cap is None or math.isinf(cap)
