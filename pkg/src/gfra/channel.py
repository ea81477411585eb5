"""Large-scale fading (3GPP UMa LOS path loss plus log-normal shadowing) and Rayleigh small-scale fading."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import SeededRng
from .topology import Topology

__all__ = [
    "SPEED_OF_LIGHT",
    "ModelRangeError",
    "PathLossParams",
    "LogDistancePathLoss",
    "LargeScaleMap",
    "SmallScaleBlock",
    "breakpoint_distance",
    "path_loss_db",
    "large_scale_map",
    "small_scale_block",
]

SPEED_OF_LIGHT = 299_792_458.0
MIN_DISTANCE_M = 10.0
MAX_DISTANCE_M = 5000.0


class ModelRangeError(ValueError):
    pass


@dataclass(frozen=True)
class PathLossParams:
    carrier_freq_hz: float = 900e6
    ap_height_m: float = 12.0
    ue_height_m: float = 1.5
    shadow_std_db: float = 1.0

    def __post_init__(self):
        if not self.carrier_freq_hz > 0:
            raise ValueError("carrier_freq_hz must be positive")
        if self.shadow_std_db < 0:
            raise ValueError("shadow_std_db must be non-negative")

    @property
    def breakpoint_distance_m(self) -> float:
        return breakpoint_distance(self)


def breakpoint_distance(params: PathLossParams) -> float:
    """d'_BP = 4 (h_BS - 1)(h_UT - 1) f_c / c, using 1 m effective environment height."""
    h_bs, h_ut = params.ap_height_m, params.ue_height_m
    if h_bs <= 1.0 or h_ut <= 1.0:
        raise ValueError("antenna heights must exceed the 1 m effective environment height")
    return 4.0 * (h_bs - 1.0) * (h_ut - 1.0) * params.carrier_freq_hz / SPEED_OF_LIGHT


def _uma_los_db(d_2d, params: PathLossParams):
    d_bp = breakpoint_distance(params)
    dh = params.ap_height_m - params.ue_height_m
    d_3d = np.hypot(d_2d, dh)
    fc_term = 20.0 * np.log10(params.carrier_freq_hz / 1e9)
    pl1 = 28.0 + 22.0 * np.log10(d_3d) + fc_term
    pl2 = 28.0 + 40.0 * np.log10(d_3d) + fc_term - 9.0 * np.log10(d_bp**2 + dh**2)
    return np.where(d_2d <= d_bp, pl1, pl2)


def path_loss_db(d_2d, params: PathLossParams):
    """UMa LOS path loss in dB; ``f_c`` enters the log terms in GHz.

    Raises :class:`ModelRangeError` for any distance outside [10 m, 5 km].
    """
    d = np.asarray(d_2d, dtype=float)
    if np.any(d < MIN_DISTANCE_M) or np.any(d > MAX_DISTANCE_M):
        raise ModelRangeError(
            f"d_2d must lie in [{MIN_DISTANCE_M}, {MAX_DISTANCE_M}] m, got "
            f"[{d.min():.3f}, {d.max():.3f}]"
        )
    out = _uma_los_db(d, params)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogDistancePathLoss:
    """PL = intercept_db + slope_db * log10(d_3D), for scenarios without a 3GPP layout."""

    intercept_db: float
    slope_db: float
    ap_height_m: float = 12.0
    ue_height_m: float = 1.5

    def __call__(self, d_2d):
        d_3d = np.hypot(np.asarray(d_2d, dtype=float), self.ap_height_m - self.ue_height_m)
        return self.intercept_db + self.slope_db * np.log10(d_3d)


@dataclass(frozen=True)
class LargeScaleMap:
    beta_db: np.ndarray  # (M, K)

    @property
    def beta(self) -> np.ndarray:
        return 10.0 ** (self.beta_db / 10.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.beta_db.shape

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        buf.write("# units: m=index, k=index, beta_db=dB\n")
        w.writerow(["m", "k", "beta_db"])
        for (m, k), v in np.ndenumerate(self.beta_db):
            w.writerow([m, k, repr(float(v))])
        return buf.getvalue()


def large_scale_map(
    topology: Topology,
    params: PathLossParams,
    rng: SeededRng,
    path_loss: Callable | None = None,
) -> LargeScaleMap:
    """beta_db[m, k] = -PL(d_2d(m, k)) + F_mk, F_mk ~ N(0, shadow_std_db^2).

    Horizontal distances under 10 m are clamped to 10 m. ``path_loss`` overrides
    the UMa LOS model with any callable mapping d_2d (m) to dB.
    """
    d = np.maximum(topology.distances_2d(), MIN_DISTANCE_M)
    pl = path_loss(d) if path_loss is not None else path_loss_db(d, params)
    pl = np.asarray(pl, dtype=float).reshape(d.shape)
    shadow = params.shadow_std_db * rng.standard_normal(d.shape)
    return LargeScaleMap(beta_db=-pl + shadow)


@dataclass(frozen=True)
class SmallScaleBlock:
    gains: np.ndarray  # (M, K, N) complex, g_mk^(n)
    block_id: int = 0

    def G(self, m: int) -> np.ndarray:
        """K x N channel matrix of AP ``m``."""
        return self.gains[m]


def small_scale_block(beta: LargeScaleMap, n_antennas: int, rng: SeededRng, block_id: int = 0) -> SmallScaleBlock:
    """g_mk^(n) = sqrt(beta_mk) h, h ~ CN(0, 1) i.i.d. over (m, k, n)."""
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    m, k = beta.shape
    h = rng.complex_normal(1.0, size=(m, k, n_antennas))
    return SmallScaleBlock(gains=np.sqrt(beta.beta)[..., None] * h, block_id=block_id)
