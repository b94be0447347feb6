"""Per-TTI frozen view of the network handed to association and agents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import sinr_matrix, snr_matrix


@dataclass(frozen=True)
class NetworkSnapshot:
    tti: int
    position: np.ndarray  # (K, 2) m
    distance: np.ndarray  # (K, M) m
    gain: np.ndarray  # (K, M) linear
    powers: np.ndarray  # (M,) mW
    sigma2: float  # mW
    buffer_bits: np.ndarray  # (K,)
    packet_count: np.ndarray  # (K,)
    tau_global: dict = field(default_factory=dict)  # slice -> (M,)
    pf_avg: dict = field(default_factory=dict)  # slice -> (K_s,)

    @property
    def K(self) -> int:
        return self.gain.shape[0]

    @property
    def M(self) -> int:
        return self.gain.shape[1]

    def sinr(self) -> np.ndarray:
        return sinr_matrix(self.gain, self.powers, self.sigma2)

    def snr(self) -> np.ndarray:
        return snr_matrix(self.gain, self.powers, self.sigma2)
