"""Estimators and distribution checks on simulated delays."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .analytics import delay_location_scale, gumbel_norming

KS_REFERENCE_95 = 1.36  # asymptotic 95% Kolmogorov critical value times sqrt(N)


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    variance: float
    half_width: float
    level: float = 0.95

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n)

    def merge(self, other: "Summary") -> "Summary":
        """Pooled summary of two disjoint batches (Chan et al. update)."""
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.variance * (self.n - 1) + other.variance * (other.n - 1) + delta**2 * self.n * other.n / n
        var = m2 / (n - 1)
        return Summary(n, mean, var, _z(self.level) * math.sqrt(var / n), self.level)


def _z(level: float) -> float:
    return float(norm.ppf(0.5 + level / 2))


def summarize(samples, level: float = 0.95) -> Summary:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    return Summary(x.size, mean, var, _z(level) * math.sqrt(var / x.size), level)


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def ks_against_gumbel(samples) -> float:
    """sup_x |ECDF(x) - exp(-exp(-x))|.

    Ties are handled exactly: the ECDF jumps by the multiplicity at each value.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    N = x.size
    if N == 0:
        raise ValueError("empty sample")
    g = gumbel_cdf(x)
    upper = np.arange(1, N + 1) / N - g
    lower = g - np.arange(0, N) / N
    return float(max(upper.max(), lower.max()))


def ks_reference(N: int) -> float:
    return KS_REFERENCE_95 / math.sqrt(N)


@dataclass
class DelaySample:
    """Raw delays with their standardised and Gumbel-rescaled versions.

    Standardisation uses the model location/scale, never sample moments.
    """

    raw: np.ndarray
    standardized: np.ndarray
    rescaled: np.ndarray
    a_n: float
    b_n: float

    @classmethod
    def from_delays(cls, delays, n: int, k: float, p: float, corr: float = 1.0, norming: str = "scaled"):
        raw = np.asarray(delays, dtype=float)
        mu, sigma = delay_location_scale(k, p, corr)
        a, b = gumbel_norming(n, norming)
        z = (raw - mu) / sigma
        return cls(raw, z, (z - b) / a, a, b)


def histogram(samples, width: float, origin: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Counts over bins [origin + j*width, origin + (j+1)*width).

    Returns ``(left_edges, counts)``; the counts sum to the sample size.
    """
    if width <= 0:
        raise ValueError("bin width must be positive")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    if origin is None:
        origin = math.floor(x.min() / width) * width
    idx = np.floor((x - origin) / width).astype(np.int64)
    if idx.min() < 0:
        raise ValueError("origin lies above the smallest sample")
    counts = np.bincount(idx)
    return origin + width * np.arange(counts.size), counts
