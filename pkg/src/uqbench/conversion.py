"""Conversions between output types: intervals and quantiles to Gaussians and back,
probability intervals to point probabilities, and the PIT of a Gaussian."""

from __future__ import annotations

import math

import numpy as np

from .core import (GaussianBatch, GaussianPrediction, Interval, QuantileBatch, QuantileSet,
                   ValidationError, std_normal_cdf, std_normal_quantile)

ONE_SIGMA = (0.1587, 0.8413)
TWO_SIGMA = (0.0228, 0.9772)
ONE_SIGMA_COVERAGE = 0.6826
TWO_SIGMA_COVERAGE = 0.9544
QUANTILE_LEVELS = (0.0228, 0.1587, 0.5, 0.8413, 0.9772)

LEVEL_NAMES = {
    "1sigma": (ONE_SIGMA_COVERAGE, ONE_SIGMA),
    "2sigma": (TWO_SIGMA_COVERAGE, TWO_SIGMA),
}


def interval_to_gaussian(q_lo, q_hi, level_lo: float, level_hi: float):
    """Gaussian ``(mean, variance)`` whose ``level_lo``/``level_hi`` quantiles are the bounds.

    Works elementwise on arrays. For level pairs symmetric about 0.5 the mean
    is the interval midpoint.
    """
    if not 0.0 < level_lo < level_hi < 1.0:
        raise ValidationError("need 0 < level_lo < level_hi < 1")
    lo = np.asarray(q_lo, dtype=float)
    hi = np.asarray(q_hi, dtype=float)
    if np.any(lo > hi):
        raise ValidationError("interval lower bound exceeds upper bound")
    z_lo, z_hi = std_normal_quantile(level_lo), std_normal_quantile(level_hi)
    sigma = (hi - lo) / (z_hi - z_lo)
    mean = (lo * z_hi - hi * z_lo) / (z_hi - z_lo)
    if abs(level_lo + level_hi - 1.0) <= 1e-12:
        mean = 0.5 * (lo + hi)
    if mean.ndim == 0:
        return float(mean), float(sigma * sigma)
    return mean, sigma * sigma


def central_z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValidationError("coverage level must lie in (0, 1)")
    return std_normal_quantile((1.0 + level) / 2.0)


def gaussian_to_interval(mean, variance, level: float):
    """Central interval ``[mean - z sd, mean + z sd]`` with coverage ``level``.

    Scalars give an :class:`Interval`; arrays give a ``(lo, hi)`` pair.
    """
    z = central_z(level)
    var = np.asarray(variance, dtype=float)
    if np.any(var < 0):
        raise ValidationError("variance must be non-negative")
    half = z * np.sqrt(var)
    mu = np.asarray(mean, dtype=float)
    if mu.ndim == 0 and var.ndim == 0:
        return Interval(float(mu - half), float(mu + half), level)
    return mu - half, mu + half


def quantiles_to_gaussian(q: QuantileSet, pair: tuple[float, float]) -> GaussianPrediction:
    lo, hi = q.value_at(pair[0]), q.value_at(pair[1])
    mean, var = interval_to_gaussian(lo, hi, pair[0], pair[1])
    return GaussianPrediction(mean, var, q.truth, q.measurand, q.id, q.meta)


def quantile_batch_to_gaussian(q: QuantileBatch, pair: tuple[float, float]) -> GaussianBatch:
    mean, var = interval_to_gaussian(q.column(pair[0]), q.column(pair[1]), pair[0], pair[1])
    return GaussianBatch(mean, var, q.truth, q.measurand, q.ids, q.meta)


def interval_batch_to_gaussian(b) -> GaussianBatch:
    """Gaussian fit of central intervals (symmetric level pair around 0.5)."""
    lo_level = (1.0 - b.level) / 2.0
    mean, var = interval_to_gaussian(b.lo, b.hi, lo_level, 1.0 - lo_level)
    return GaussianBatch(mean, var, b.truth, b.measurand, b.ids, b.meta)


def jaccard_mean(p0, p1):
    """Log-loss optimal point ``p1 / (1 - p0 + p1)`` inside ``[p0, p1]``."""
    a = np.asarray(p0, dtype=float)
    b = np.asarray(p1, dtype=float)
    if np.any(a < 0) or np.any(b > 1):
        raise ValidationError("probabilities must lie in [0, 1]")
    if np.any(a > b):
        raise ValidationError("need p0 <= p1")
    p = b / (1.0 - a + b)
    return float(p) if p.ndim == 0 else p


def pit(pred: GaussianPrediction) -> float:
    if pred.truth is None:
        raise ValidationError("PIT needs a ground truth")
    if pred.variance <= 0:
        raise ValidationError("PIT of a degenerate (zero-variance) distribution is undefined")
    return std_normal_cdf((pred.truth - pred.mean) / math.sqrt(pred.variance))


def pit_values(mean, variance, truth) -> np.ndarray:
    var = np.asarray(variance, dtype=float)
    if np.any(var <= 0):
        raise ValidationError("PIT of a degenerate (zero-variance) distribution is undefined")
    return std_normal_cdf((np.asarray(truth, dtype=float) - np.asarray(mean, dtype=float)) / np.sqrt(var))
