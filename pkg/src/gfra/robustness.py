"""Input perturbation and fixed-point quantization of detector inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LargeScaleMap
from .numerics import SeededRng

__all__ = [
    "FixedPointFormat",
    "perturb",
    "perturb_features",
    "perturb_large_scale",
    "quantize",
    "quantize_features",
]


def _check_theta(theta: float) -> None:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")


def _perturb_real(x: np.ndarray, theta: float, rng: SeededRng) -> np.ndarray:
    mu, sigma = x.mean(), x.std()
    noise = rng.normal(mu, sigma, size=x.shape)
    return x * np.sqrt(1.0 - theta**2) + theta * noise


def perturb(values, theta: float, rng: SeededRng) -> np.ndarray:
    """x sqrt(1 - theta^2) + theta n, with n ~ N(mean(x), std(x)^2) drawn per element.

    Complex inputs are perturbed part by part, each with its own statistics.
    ``theta = 0`` returns an exact copy.
    """
    _check_theta(theta)
    x = np.asarray(values)
    if x.size < 2:
        raise ValueError("perturb needs at least two values to estimate the spread")
    if theta == 0.0:
        return x.copy()
    if np.iscomplexobj(x):
        return _perturb_real(x.real, theta, rng) + 1j * _perturb_real(x.imag, theta, rng)
    return _perturb_real(x.astype(np.float64), theta, rng)


def perturb_features(features: np.ndarray, theta: float, rng: SeededRng) -> np.ndarray:
    """Row-wise :func:`perturb` on feature vectors laid out as [real block | imaginary block].

    Each row is one received matrix Y; its real and imaginary halves get their
    own mean and spread.
    """
    _check_theta(theta)
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if theta == 0.0:
        return f.copy()
    half = f.shape[1] // 2
    out = np.empty_like(f)
    for sl in (slice(0, half), slice(half, None)):
        part = f[:, sl]
        mu = part.mean(axis=1, keepdims=True)
        sigma = part.std(axis=1, keepdims=True)
        noise = mu + sigma * rng.standard_normal(part.shape)
        out[:, sl] = part * np.sqrt(1.0 - theta**2) + theta * noise
    return out


def perturb_large_scale(beta: LargeScaleMap, theta: float, rng: SeededRng) -> LargeScaleMap:
    """Perturb the large-scale map in dB so every gain stays positive."""
    return LargeScaleMap(beta_db=perturb(beta.beta_db, theta, rng))


@dataclass(frozen=True)
class FixedPointFormat:
    word_length: int
    fractional_bits: int

    def __post_init__(self):
        if not 1 <= self.fractional_bits < self.word_length <= 64:
            raise ValueError(f"need 1 <= F < W <= 64, got W={self.word_length}, F={self.fractional_bits}")

    @classmethod
    def parse(cls, text: str) -> "FixedPointFormat":
        """Parse ``"W_F"``, e.g. ``"8_4"``."""
        try:
            w, f = (int(p) for p in text.strip().split("_"))
        except ValueError:
            raise ValueError(f"fixed-point format must look like 'W_F', got {text!r}") from None
        return cls(w, f)

    @property
    def integer_bits(self) -> int:
        """Bits left of the binary point, sign included."""
        return self.word_length - self.fractional_bits

    @property
    def label(self) -> str:
        return f"{self.word_length}_{self.fractional_bits}"

    @property
    def max_value(self) -> float:
        return (2.0 ** (self.word_length - 1) - 1.0) / 2.0**self.fractional_bits

    @property
    def min_value(self) -> float:
        return -(2.0 ** (self.word_length - 1)) / 2.0**self.fractional_bits


def quantize(x, fmt: FixedPointFormat):
    """Round-to-nearest-even onto the Q(W, F) lattice, saturating at the signed range."""
    scale = 2.0**fmt.fractional_bits
    lo = -(2.0 ** (fmt.word_length - 1))
    hi = 2.0 ** (fmt.word_length - 1) - 1.0
    q = np.clip(np.rint(np.asarray(x, dtype=np.float64) * scale), lo, hi) / scale
    return float(q) if np.ndim(q) == 0 else q


def quantize_features(features: np.ndarray, fmt: FixedPointFormat, gain: float = 1.0) -> np.ndarray:
    """Quantize raw (unscaled) features as an ADC would.

    ``gain`` sets the converter's input scaling: values are multiplied by it,
    quantized, and divided back, so the result stays in the original units.
    """
    if not gain > 0:
        raise ValueError("gain must be positive")
    f = np.asarray(features, dtype=np.float64)
    return quantize(f * gain, fmt) / gain
