"""Link abstraction: SINR -> MCS lookup, bits per PRB, PRB demand and BER."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

BITS_PER_SYMBOL = {"QPSK": 2, "QAM16": 4, "QAM64": 6}


@dataclass(frozen=True)
class McsEntry:
    min_sinr_db: float
    modulation: str
    code_rate: Fraction

    @property
    def bits_per_symbol(self) -> int:
        return BITS_PER_SYMBOL[self.modulation]

    @property
    def constellation(self) -> int:
        return 2 ** self.bits_per_symbol

    @property
    def bits_per_re(self) -> Fraction:
        return self.bits_per_symbol * self.code_rate


@dataclass(frozen=True)
class Numerology:
    mu: int = 0
    scs_hz: float = 15e3
    subcarriers_per_prb: int = 12
    symbols_per_slot: int = 14
    slots_per_tti: int = 1
    tti_ms: float = 1.0

    @property
    def re_per_prb(self) -> int:
        return self.subcarriers_per_prb * self.symbols_per_slot * self.slots_per_tti

    @property
    def t_symb_ms(self) -> float:
        return self.tti_ms / (self.symbols_per_slot * self.slots_per_tti)

    @property
    def w_prb_hz(self) -> float:
        return self.scs_hz * self.subcarriers_per_prb


NR_MU0 = Numerology()


class McsTable:
    """Sorted MCS rows with vectorized lookup."""

    def __init__(self, entries):
        entries = list(entries)
        if not entries:
            raise ValueError("MCS table is empty")
        thr = [e.min_sinr_db for e in entries]
        if any(b <= a for a, b in zip(thr, thr[1:])):
            raise ValueError("MCS thresholds must be strictly increasing")
        bpr = [e.bits_per_re for e in entries]
        if any(b <= a for a, b in zip(bpr, bpr[1:])):
            raise ValueError("bits per RE must be strictly increasing down the table")
        self.entries = tuple(entries)
        self.thresholds = np.array(thr, dtype=float)
        self._bpp: dict = {}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i) -> McsEntry:
        return self.entries[i]

    def index(self, sinr_db):
        """Row index for each SINR; below the lowest threshold maps to row 0."""
        idx = np.searchsorted(self.thresholds, sinr_db, side="right") - 1
        return np.maximum(idx, 0)

    def bits_per_prb_table(self, num: Numerology = NR_MU0) -> np.ndarray:
        if num not in self._bpp:
            self._bpp[num] = np.array([bits_per_prb(e, num) for e in self.entries], dtype=np.int64)
        return self._bpp[num]

    def constellations(self) -> np.ndarray:
        return np.array([e.constellation for e in self.entries], dtype=float)


def parse_lut(text: str) -> McsTable:
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(rows)))
    if reader.fieldnames != ["min_sinr_db", "modulation", "code_rate"]:
        raise ValueError(f"bad LUT header {reader.fieldnames}")
    entries = []
    for r in reader:
        mod = r["modulation"].strip().upper()
        if mod not in BITS_PER_SYMBOL:
            raise ValueError(f"unknown modulation {r['modulation']!r}")
        rate = Fraction(r["code_rate"].strip()).limit_denominator(1000)
        if not 0 < rate <= 1:
            raise ValueError(f"code rate out of range: {rate}")
        entries.append(McsEntry(float(r["min_sinr_db"]), mod, rate))
    return McsTable(entries)


def load_lut(path: str | Path | None = None) -> McsTable:
    if path is None:
        text = resources.files("slicesim").joinpath("data/mcs_lut.csv").read_text()
    else:
        text = Path(path).read_text()
    return parse_lut(text)


def select_mcs(sinr_db: float, lut: McsTable) -> McsEntry:
    return lut[int(lut.index(sinr_db))]


def bits_per_prb(mcs: McsEntry, num: Numerology = NR_MU0) -> int:
    # exact rational arithmetic so 168 * 5/6 is 840, not 839
    return math.floor(num.re_per_prb * mcs.bits_per_re)


def prbs_required(b_k, b_prb):
    """ceil(b_k / b_prb) on integers; works elementwise on arrays."""
    b_k = np.asarray(b_k, dtype=np.int64)
    b_prb = np.asarray(b_prb, dtype=np.int64)
    if np.any(b_prb <= 0):
        raise ValueError("bits per PRB must be > 0")
    out = -(-b_k // b_prb)
    return int(out) if out.ndim == 0 else out


def ber(mean_sinr, mcs):
    """Rayleigh-averaged M-QAM bit error rate (Gray coding approximation).

    BER = (2/log2 M)(1 - 1/sqrt M)(1 - sqrt(c/(1+c))),  c = 1.5 * snr / (M - 1)

    `mcs` is an McsEntry or a constellation size (scalar or array).
    """
    g = np.asarray(mean_sinr, dtype=float)
    if np.any(g < 0):
        raise ValueError("mean SINR must be >= 0")
    M = np.asarray(mcs.constellation if isinstance(mcs, McsEntry) else mcs, dtype=float)
    c = 1.5 * g / (M - 1)
    # 1 - sqrt(1 - u) written without cancellation, u = 1 / (1 + c)
    u = 1.0 / (1.0 + c)
    tail = u / (1.0 + np.sqrt(1.0 - u))
    out = (2 / np.log2(M)) * (1 - 1 / np.sqrt(M)) * tail
    return float(out) if out.ndim == 0 else out
