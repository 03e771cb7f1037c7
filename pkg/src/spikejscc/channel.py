"""Binary channels between encoder outputs and decoder inputs."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr, ndtr


class CalibrationError(ValueError):
    """The transmitted signal carries no energy, so no SNR can be set."""


def quantize(x, threshold: float = 0.5):
    """Hard decision: 1 where ``x >= threshold``."""
    return (np.asarray(x) >= threshold).astype(np.uint8)


def sigma2_from_snr(snr_db: float, density: float) -> float:
    """Noise power giving per-symbol SNR ``density / sigma2``.

    ``snr_db = inf`` means a noiseless link and returns 0.
    """
    if not density > 0:
        raise CalibrationError(f"spike density {density} carries no energy; cannot calibrate SNR")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return density / 10.0 ** (snr_db / 10.0)


def measure_density(x) -> float:
    """Fraction of entries that are spikes, pooled over one tensor or many."""
    if hasattr(x, "data") and not isinstance(x, np.ndarray):
        x = x.data
    if isinstance(x, np.ndarray):
        if x.size == 0:
            raise ValueError("cannot measure density of an empty tensor")
        return float(x.sum()) / x.size
    total = count = 0
    for item in x:
        arr = item.data if hasattr(item, "data") and not isinstance(item, np.ndarray) else np.asarray(item)
        total += int(arr.sum())
        count += arr.size
    if count == 0:
        raise ValueError("cannot measure density of an empty stream")
    return total / count


class Channel:
    """Causal binary channel ``y_t ~ p(y_t | y_{<t}, x_{<=t})``.

    Subclasses get the full input history and their own past outputs so
    channels with memory fit the same interface.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.reset()

    def reset(self) -> None:
        self.x_history: list[np.ndarray] = []
        self.y_history: list[np.ndarray] = []

    def transmit(self, x_t, rng) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float).ravel()
        if x_t.shape[0] != self.dim:
            raise ValueError(f"channel expects {self.dim} symbols, got {x_t.shape[0]}")
        self.x_history.append(x_t)
        y_t = self._emit(rng)
        self.y_history.append(y_t)
        return y_t

    def _emit(self, rng) -> np.ndarray:
        raise NotImplementedError

    def flip_probability(self) -> float:
        """Per-entry probability that a binary input is received inverted."""
        raise NotImplementedError


class GaussianQuantizedChannel(Channel):
    """Memoryless AWGN followed by a hard threshold: ``y = Q(x + n)``.

    ``sigma2 = 0`` is accepted as the noiseless limit and passes binary inputs
    through unchanged.
    """

    def __init__(self, dim: int, sigma2: float, threshold: float = 0.5):
        if sigma2 < 0 or not math.isfinite(sigma2):
            raise ValueError(f"noise power must be a finite nonnegative number, got {sigma2}")
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
        self.sigma2 = float(sigma2)
        self.threshold = float(threshold)
        super().__init__(dim)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def step(self, x_t, rng) -> np.ndarray:
        """Single memoryless use; does not touch the history."""
        x_t = np.asarray(x_t, dtype=float)
        if self.sigma2 == 0.0:
            return quantize(x_t, self.threshold).astype(float)
        noise = rng.normal(0.0, self.sigma, size=x_t.shape)
        return quantize(x_t + noise, self.threshold).astype(float)

    def _emit(self, rng) -> np.ndarray:
        return self.step(self.x_history[-1], rng)

    def flip_probability(self, x: int = 0) -> float:
        """``P(y != x)`` for binary input ``x``: ``1 - Phi(|x - threshold| / sigma)``."""
        if self.sigma2 == 0.0:
            return 0.0
        return float(1.0 - ndtr(abs(x - self.threshold) / self.sigma))

    def log_prob(self, y_t, x_t) -> float:
        """``log p(y_t | x_t)`` of one memoryless use."""
        y_t = np.asarray(y_t, dtype=float).ravel()
        x_t = np.asarray(x_t, dtype=float).ravel()
        flipped = y_t != x_t
        if self.sigma2 == 0.0:
            return -math.inf if flipped.any() else 0.0
        d = np.abs(x_t - self.threshold) / self.sigma
        return float(np.where(flipped, log_ndtr(-d), log_ndtr(d)).sum())


def channel_step(ch: GaussianQuantizedChannel, x_t, rng) -> np.ndarray:
    if ch.sigma2 <= 0:
        raise ValueError("noise power must be positive for a stochastic channel use")
    return ch.step(x_t, rng)
