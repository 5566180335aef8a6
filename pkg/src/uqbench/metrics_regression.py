"""Reliability and scoring metrics for Gaussian regression outputs."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .conversion import ONE_SIGMA_COVERAGE, QUANTILE_LEVELS, central_z, pit_values
from .core import ValidationError, std_normal_cdf, std_normal_pdf
from .stratify import equal_frequency_sizes

DEFAULT_BINS = 15
CCE_LEVELS = tuple(round(0.05 * j, 2) for j in range(1, 20))


def _arrays(mean, variance, truth):
    mu = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    if truth is None:
        raise ValidationError("ground truths are required")
    y = np.asarray(truth, dtype=float)
    if not (mu.shape == var.shape == y.shape) or mu.ndim != 1:
        raise ValidationError("mean, variance and truth must be equal-length vectors")
    if mu.size == 0:
        raise ValidationError("no predictions")
    if np.any(var < 0):
        raise ValidationError("variance must be non-negative")
    return mu, var, y


@dataclass(frozen=True)
class VarianceBin:
    index: int
    count: int
    rmv: float
    rmse: float

    def to_dict(self) -> dict:
        return asdict(self)


def ence(mean, variance, truth, bins: int = DEFAULT_BINS) -> tuple[float, list[VarianceBin]]:
    """Expected normalised calibration error over equal-count bins sorted by predicted sd."""
    mu, var, y = _arrays(mean, variance, truth)
    if np.any(var <= 0):
        raise ValidationError("ENCE needs strictly positive variances")
    n = mu.size
    if bins > n:
        warnings.warn(f"{bins} bins requested for {n} predictions; using {n}", stacklevel=2)
        bins = n
    order = np.argsort(var, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(equal_frequency_sizes(n, bins))])
    sq_err = (y - mu) ** 2
    out = []
    total = 0.0
    for m in range(bins):
        sel = order[bounds[m]:bounds[m + 1]]
        rmv = math.sqrt(float(np.mean(var[sel])))
        rmse = math.sqrt(float(np.mean(sq_err[sel])))
        total += abs(rmv - rmse) / rmv
        out.append(VarianceBin(m, int(sel.size), rmv, rmse))
    return total / bins, out


def crps_gaussian(mean, variance, truth):
    """Closed-form CRPS of ``N(mean, variance)`` at ``truth``; ``|y - mean|`` when variance is 0."""
    mu = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    y = np.asarray(truth, dtype=float)
    if np.any(var < 0):
        raise ValidationError("variance must be non-negative")
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (y - mu) / sd
        val = sd * (2 * std_normal_pdf(d) + d * (2 * std_normal_cdf(d) - 1) - 1 / math.sqrt(math.pi))
    val = np.where(sd > 0, val, np.abs(y - mu))
    return float(val) if val.ndim == 0 else val


def crps_mean(mean, variance, truth) -> float:
    mu, var, y = _arrays(mean, variance, truth)
    return float(np.mean(crps_gaussian(mu, var, y)))


def coverage(lo, hi, truth) -> float:
    y = np.asarray(truth, dtype=float)
    if y.size == 0:
        raise ValidationError("no predictions")
    return float(np.mean((np.asarray(lo) <= y) & (y <= np.asarray(hi))))


def picp(mean, variance, truth, level: float = ONE_SIGMA_COVERAGE) -> float:
    """Fraction of truths inside the central ``level`` interval, divided by ``level``."""
    mu, var, y = _arrays(mean, variance, truth)
    half = central_z(level) * np.sqrt(var)
    return coverage(mu - half, mu + half, y) / level


def picp_intervals(lo, hi, truth, level: float) -> float:
    return coverage(lo, hi, truth) / level


def cce(mean, variance, truth, levels=CCE_LEVELS) -> float:
    """Coverage calibration error: sum over levels of (level - empirical PIT frequency)^2."""
    mu, var, y = _arrays(mean, variance, truth)
    lv = np.asarray(levels, dtype=float)
    if lv.size == 0:
        raise ValidationError("empty level grid")
    u = np.sort(pit_values(mu, var, y))
    freq = np.searchsorted(u, lv, side="right") / u.size
    return float(np.sum((lv - freq) ** 2))


def mae(mean, truth) -> float:
    mu = np.asarray(mean, dtype=float)
    y = np.asarray(truth, dtype=float)
    if mu.size == 0:
        raise ValidationError("no predictions")
    return float(np.mean(np.abs(y - mu)))


def mase(mae_value: float, baseline_mae: float) -> float:
    """MAE relative to the MAE of predicting the training-set median."""
    if not baseline_mae > 0:
        raise ZeroDivisionError("baseline MAE must be positive")
    return float(mae_value) / float(baseline_mae)


def _per_record(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def gnll_loss(mean, variance, truth) -> float:
    """Gaussian negative log-likelihood per record, including the log sqrt(2 pi) term.

    2-D inputs of shape ``(N, M)`` hold ``M`` measurands per record and are
    summed over measurands before averaging over records.
    """
    mu, var, y = _per_record(mean), _per_record(variance), _per_record(truth)
    if np.any(var <= 0):
        raise ValidationError("GNLL needs strictly positive variances")
    per = 0.5 * np.log(var) + (y - mu) ** 2 / (2 * var) + 0.5 * math.log(2 * math.pi)
    return float(np.mean(per.sum(axis=1)))


def bp_loss(mean, variance, truth) -> float:
    """Training loss with ``log(sd / 2)`` in place of ``log sd``, summed over measurands."""
    mu, var, y = _per_record(mean), _per_record(variance), _per_record(truth)
    if np.any(var <= 0):
        raise ValidationError("the loss needs strictly positive variances")
    sd = np.sqrt(var)
    per = np.log(sd / 2) + (mu - y) ** 2 / (2 * var)
    return float(np.mean(per.sum(axis=1)))


def pinball_loss(values, truth, levels=QUANTILE_LEVELS) -> float:
    """Quantile loss averaged over levels and records.

    ``values`` is ``(N, L)`` for ``L`` levels (or ``(N, M, L)`` with ``M``
    measurands, averaged over both measurands and levels per record).
    """
    q = np.asarray(values, dtype=float)
    lv = np.asarray(levels, dtype=float)
    y = np.asarray(truth, dtype=float)[..., None]
    if q.shape[-1] != lv.size:
        raise ValidationError("values must have one column per quantile level")
    diff = y - q
    loss = np.maximum(lv * diff, (lv - 1) * diff)
    return float(np.mean(loss))


@dataclass(frozen=True)
class BivariateHistogram:
    counts: np.ndarray
    err_edges: np.ndarray
    sigma_edges: np.ndarray

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "err_edges": self.err_edges.tolist(),
                "sigma_edges": self.sigma_edges.tolist()}


def _edges(values: np.ndarray, bins) -> np.ndarray:
    if np.ndim(bins):
        return np.asarray(bins, dtype=float)
    top = float(values.max()) if values.size else 1.0
    return np.linspace(0.0, top if top > 0 else 1.0, int(bins) + 1)


def bivariate_histogram(mean, variance, truth, err_bins=30, sigma_bins=30) -> BivariateHistogram:
    """Counts of (|truth - mean|, predicted sd); rows index error bins, columns sd bins.

    Bin counts give linear grids from 0 to the observed maximum; explicit edge
    arrays are used as given.
    """
    mu, var, y = _arrays(mean, variance, truth)
    err = np.abs(y - mu)
    sd = np.sqrt(var)
    e_edges, s_edges = _edges(err, err_bins), _edges(sd, sigma_bins)
    counts, _, _ = np.histogram2d(err, sd, bins=[e_edges, s_edges])
    return BivariateHistogram(counts.astype(np.int64), e_edges, s_edges)
