"""Distances of empirical draws to the standard normal, and interval coverage.

The headline number is the exact 1-Wasserstein distance between the
empirical law of the draws and N(0, 1), computed as the closed-form integral
of |F_m - Phi| between order statistics.  Every bounded 1-Lipschitz test
function is in particular 1-Lipschitz and bounded by 1, so ``min(W1, 2)`` is
a certified upper bound on the bounded-Lipschitz distance; the BL metric
itself has no closed form against an empirical measure and is never computed
directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigurationError, SampleSizeError

_MIN_DRAWS = 100


def _phi(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / sqrt(2.0 * pi)


def normal_cdf(x):
    """Standard normal CDF (erf-based, max error well under 1e-12)."""
    return ndtr(x)


def normal_quantile(p):
    """Standard normal quantile with one Newton polish step."""
    q = ndtri(p)
    return q - (ndtr(q) - p) / np.maximum(_phi(q), 1e-300)


def _cdf_antideriv(t: np.ndarray) -> np.ndarray:
    """Antiderivative of Phi: t Phi(t) + phi(t), with the right tail limits."""
    return t * ndtr(t) + _phi(t)


def wasserstein1_to_standard_normal(draws: np.ndarray) -> float:
    """Exact integral of |F_empirical - Phi| over the real line.

    Between consecutive order statistics the empirical CDF is the constant
    i/m, so each segment contributes a closed-form piece, split at
    Phi^{-1}(i/m) when the level is crossed inside the segment.
    """
    x = np.sort(np.asarray(draws, dtype=float))
    m = x.size
    levels = np.arange(0, m + 1) / m          # level on each segment
    # segment endpoints: (-inf, x_1], [x_1, x_2], ..., [x_m, +inf)
    lo = np.concatenate(([-np.inf], x))
    hi = np.concatenate((x, [np.inf]))

    total = 0.0
    G = _cdf_antideriv
    for a, b, c in zip(lo, hi, levels):
        if a == b:
            continue
        # int_a^b Phi - handled piecewise; tails use the limits of G
        Ga = 0.0 if a == -np.inf else G(np.array(a)).item()
        if b == np.inf:
            # int_a^inf (1 - Phi) = lim (t - G(t)) - (a - G(a)) = G(a) - a
            if c != 1.0:
                raise AssertionError("top segment must have level 1")
            total += Ga - a
            continue
        Gb = G(np.array(b)).item()
        if a == -np.inf:
            # int_-inf^b (Phi - 0) = G(b)
            if c != 0.0:
                raise AssertionError("bottom segment must have level 0")
            total += Gb
            continue
        phi_a = ndtr(a)
        phi_b = ndtr(b)
        if c <= phi_a:
            total += (Gb - Ga) - c * (b - a)
        elif c >= phi_b:
            total += c * (b - a) - (Gb - Ga)
        else:
            t = float(normal_quantile(c))
            Gt = G(np.array(t)).item()
            total += (c * (t - a) - (Gt - Ga)) + ((Gb - Gt) - c * (b - t))
    return float(total)


def empirical_w1(x: np.ndarray, y: np.ndarray) -> float:
    """1-Wasserstein distance between two empirical measures
    (integral of |F_x - F_y| over the merged sample grid)."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    grid = np.sort(np.concatenate([x, y]))
    if grid.size < 2:
        return 0.0
    fx = np.searchsorted(x, grid[:-1], side="right") / x.size
    fy = np.searchsorted(y, grid[:-1], side="right") / y.size
    return float(np.sum(np.abs(fx - fy) * np.diff(grid)))


def ks_to_standard_normal(draws: np.ndarray) -> float:
    """Kolmogorov-Smirnov sup distance at the empirical jump points."""
    x = np.sort(np.asarray(draws, dtype=float))
    m = x.size
    cdf = ndtr(x)
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class DistanceReport:
    """W1 and KS to N(0,1), plus the certified bounded-Lipschitz upper bound
    ``bl_upper = min(w1, 2)``."""

    w1: float
    ks: float
    bl_upper: float
    n_samples: int


def distance_to_standard_normal(draws) -> DistanceReport:
    """Distance report for a draw sequence (at least 100 draws)."""
    draws = np.asarray(draws, dtype=float)
    if draws.size < _MIN_DRAWS:
        raise SampleSizeError(f"need at least {_MIN_DRAWS} draws, got {draws.size}")
    w1 = wasserstein1_to_standard_normal(draws)
    return DistanceReport(
        w1=w1,
        ks=ks_to_standard_normal(draws),
        bl_upper=min(w1, 2.0),
        n_samples=int(draws.size),
    )


def credible_interval(samples, level: float) -> tuple[float, float]:
    """Equal-tailed empirical quantile interval."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < _MIN_DRAWS:
        raise SampleSizeError(f"need at least {_MIN_DRAWS} samples, got {samples.size}")
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"level must lie in (0, 1), got {level}")
    lo, hi = np.quantile(samples, [(1.0 - level) / 2.0, (1.0 + level) / 2.0])
    return (float(lo), float(hi))


@dataclass(frozen=True)
class CoverageReport:
    nominal: float
    empirical_freq: float
    empirical_bayes: float
    n_reps: int
    avg_width_freq: float
    avg_width_bayes: float


def coverage_study(records, level: float = 0.95) -> CoverageReport:
    """Empirical coverage of the estimator interval and the credible interval.

    ``records`` is any sequence of objects exposing ``beta1_true``,
    ``freq_lo``/``freq_hi`` and ``bayes_lo``/``bayes_hi``; every record must
    carry the truth and both interval types.
    """
    records = list(records)
    if not records:
        raise SampleSizeError("coverage_study needs at least one record")
    freq_cover = bayes_cover = 0
    freq_width = bayes_width = 0.0
    for r in records:
        truth = r.beta1_true
        if truth is None or r.freq_lo is None or r.bayes_lo is None:
            raise ConfigurationError(
                "every record must carry beta1_true and both interval types"
            )
        freq_cover += int(r.freq_lo <= truth <= r.freq_hi)
        bayes_cover += int(r.bayes_lo <= truth <= r.bayes_hi)
        freq_width += r.freq_hi - r.freq_lo
        bayes_width += r.bayes_hi - r.bayes_lo
    n = len(records)
    return CoverageReport(
        nominal=level,
        empirical_freq=freq_cover / n,
        empirical_bayes=bayes_cover / n,
        n_reps=n,
        avg_width_freq=freq_width / n,
        avg_width_bayes=bayes_width / n,
    )
