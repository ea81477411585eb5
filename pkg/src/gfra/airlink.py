"""Pilot codebook, sparse activity, SNR accounting and received-signal synthesis.

The received block at AP ``m`` is ``Y_m = S diag(a) diag(rho)^(1/2) G_m + W_m``
with ``S`` (L x K) the pilot book, ``G_m`` (K x N) the channel and ``W_m``
white CN(0, sigma^2) noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LargeScaleMap, SmallScaleBlock
from .numerics import SeededRng

__all__ = [
    "PilotBook",
    "ActivityVector",
    "PowerProfile",
    "ReceivedSlot",
    "dbm_to_watts",
    "generate_pilotbook",
    "sample_activity",
    "dominant_ap",
    "snr_per_device",
    "snr_target",
    "synth_slot",
    "pilot_length_from_coherence",
]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def pilot_length_from_coherence(coherence_time_s: float, coherence_bw_hz: float, fraction: float) -> int:
    """L = round(fraction * tau_C * B_C)."""
    return int(round(fraction * coherence_time_s * coherence_bw_hz))


@dataclass(frozen=True)
class PilotBook:
    S: np.ndarray  # (L, K) complex

    @property
    def pilot_length(self) -> int:
        return self.S.shape[0]

    @property
    def num_users(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class ActivityVector:
    a: np.ndarray  # (K,) uint8
    epsilon: float

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.a)


@dataclass(frozen=True)
class PowerProfile:
    rho: np.ndarray  # (K,) watts
    noise_power_w: float

    def __post_init__(self):
        if np.any(np.asarray(self.rho) <= 0):
            raise ValueError("transmit powers must be positive")
        if self.noise_power_w < 0:
            raise ValueError("noise power must be non-negative")

    @classmethod
    def uniform(cls, num_users: int, tx_power_w: float, noise_power_w: float) -> "PowerProfile":
        return cls(rho=np.full(num_users, float(tx_power_w)), noise_power_w=float(noise_power_w))


@dataclass(frozen=True)
class ReceivedSlot:
    Y: np.ndarray  # (M, L, N) complex
    activity: ActivityVector
    block_id: int = 0

    @property
    def num_aps(self) -> int:
        return self.Y.shape[0]


def generate_pilotbook(L: int, K: int, rng: SeededRng) -> PilotBook:
    """Gaussian pilots with i.i.d. CN(0, 1/L) entries, so E||s_k||^2 = 1."""
    if L < 1 or K < 1:
        raise ValueError("L and K must be >= 1")
    return PilotBook(S=rng.complex_normal(1.0 / L, size=(L, K)))


def sample_activity(K: int, epsilon: float, rng: SeededRng) -> ActivityVector:
    return ActivityVector(a=rng.bernoulli(epsilon, size=K), epsilon=epsilon)


def dominant_ap(beta: LargeScaleMap | np.ndarray, k: int | None = None):
    """Index of the AP with the largest gain to device ``k`` (lowest index on ties).

    With ``k=None`` returns the dominant AP of every device.
    """
    b = beta.beta_db if isinstance(beta, LargeScaleMap) else np.asarray(beta)
    idx = np.argmax(b, axis=0)
    return idx if k is None else int(idx[k])


def snr_per_device(beta: LargeScaleMap, power: PowerProfile) -> np.ndarray:
    """SNR in dB of each device at its dominant AP: rho_k beta_{m*k} / sigma^2."""
    best_db = beta.beta_db.max(axis=0)
    return 10.0 * np.log10(power.rho) + best_db - 10.0 * np.log10(power.noise_power_w)


def snr_target(snrs, coverage: float = 0.95) -> float:
    """SNR that ``coverage`` of the devices meet: the (1 - coverage) quantile, linear interpolation."""
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must lie in (0, 1)")
    s = np.asarray(snrs, dtype=float)
    if s.size == 0:
        raise ValueError("snr_target needs at least one sample")
    return float(np.quantile(s, 1.0 - coverage, method="linear"))


def synth_slot(
    pilots: PilotBook,
    activity: ActivityVector,
    power: PowerProfile,
    small_scale: SmallScaleBlock,
    rng: SeededRng | None = None,
) -> ReceivedSlot:
    """Received pilot blocks at every AP for one random-access slot."""
    S = pilots.S
    L, K = S.shape
    G = small_scale.gains
    if G.shape[1] != K or activity.a.shape != (K,) or np.shape(power.rho) != (K,):
        raise ValueError(
            f"dimension mismatch: S {S.shape}, G {G.shape}, a {activity.a.shape}, rho {np.shape(power.rho)}"
        )
    M, _, N = G.shape
    amp = activity.a * np.sqrt(power.rho)
    # (L, K) @ (M, K, N) -> (M, L, N)
    Y = np.matmul(S * amp, G)
    if power.noise_power_w > 0:
        if rng is None:
            raise ValueError("an rng is required when noise power is positive")
        Y = Y + rng.complex_normal(power.noise_power_w, size=(M, L, N))
    return ReceivedSlot(Y=Y, activity=activity, block_id=small_scale.block_id)
