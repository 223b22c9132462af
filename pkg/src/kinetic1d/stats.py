"""Sample summaries, a one-sample KS test against a centred normal, QQ tables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InsufficientDataError, InvalidInputError

KS_MIN_COUNT = 50


@dataclass(frozen=True)
class SampleSummary:
    count: int
    mean: float
    variance: float
    std_error_of_mean: float
    ci95: tuple

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "std": self.std,
            "std_error_of_mean": self.std_error_of_mean,
            "ci95": list(self.ci95),
        }


@dataclass(frozen=True)
class NormalityResult:
    ks_statistic: float
    p_value_approx: float
    target_sigma: float
    standardized: bool = False

    def as_dict(self) -> dict:
        return {
            "ks_statistic": self.ks_statistic,
            "p_value_approx": self.p_value_approx,
            "target_sigma": self.target_sigma,
            "standardized": self.standardized,
        }


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples must be finite")
    return x


def summarize(samples) -> SampleSummary:
    """Unbiased mean/variance with a normal-approximation 95% interval.

    Exact (correctly rounded) sums make the result independent of sample order.
    """
    x = _as_samples(samples)
    n = len(x)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    mean = math.fsum(x) / n
    var = max(math.fsum((x - mean) ** 2) / (n - 1), 0.0)
    se = math.sqrt(var / n)
    return SampleSummary(n, mean, var, se, (mean - 1.96 * se, mean + 1.96 * se))


def kolmogorov_q(lam: float, tol: float = 1e-10) -> float:
    """Asymptotic KS tail ``Q(lam) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lam^2)``."""
    if lam < 0.2:
        # the alternating series is useless here and Q is 1 to ~1e-13
        return 1.0
    total, k = 0.0, 1
    while True:
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < tol:
            break
        k += 1
    return min(max(total, 0.0), 1.0)


def ks_statistic(samples, sigma: float) -> float:
    x = np.sort(_as_samples(samples))
    n = len(x)
    cdf = ndtr(x / sigma)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def ks_normal(samples, sigma: float, standardized: bool = False) -> NormalityResult:
    """One-sample KS test against ``N(0, sigma^2)``; no re-centring is done."""
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidInputError("sigma must be positive and finite")
    x = _as_samples(samples)
    if len(x) < KS_MIN_COUNT:
        raise InsufficientDataError(f"KS p-value needs at least {KS_MIN_COUNT} samples, got {len(x)}")
    d = ks_statistic(x, sigma)
    return NormalityResult(d, kolmogorov_q(math.sqrt(len(x)) * d), sigma, standardized)


def qq_export(samples) -> np.ndarray:
    """Rows of (theoretical standard-normal quantile, sorted sample) at Blom positions."""
    x = np.sort(_as_samples(samples))
    n = len(x)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    pos = (np.arange(1, n + 1) - 0.375) / (n + 0.25)
    return np.column_stack([ndtri(pos), x])


def qq_slope(table: np.ndarray) -> float:
    """Least-squares slope of the QQ line, an estimate of the scale."""
    return float(np.polyfit(table[:, 0], table[:, 1], 1)[0])
