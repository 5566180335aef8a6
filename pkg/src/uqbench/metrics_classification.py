"""Reliability and predictive metrics for classifiers.

All metrics take an ``(N, K)`` probability matrix and integer labels. Binned
metrics return ``(value, bins)`` where ``bins`` is a list of :class:`BinStat`
suitable for drawing reliability diagrams.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft, stats

from .core import PROB_FLOOR, ValidationError, normalized_entropy
from .stratify import equal_frequency_bins, equal_width_bins

DEFAULT_BINS = 15


@dataclass(frozen=True)
class BinStat:
    """Per-bin summary. Rates are ``nan`` for empty bins."""

    index: int
    count: int
    conf: float
    acc: float
    uncert: float
    err: float
    obs_entropy: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in asdict(self).items()}


def _prepare(probs, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2 or p.shape[1] < 2:
        raise ValidationError("probs must be an (N, K) matrix")
    if p.shape[0] == 0:
        raise ValidationError("no predictions")
    if labels is None:
        raise ValidationError("labels are required")
    y = np.asarray(labels).astype(np.intp)
    if y.shape != (p.shape[0],):
        raise ValidationError("labels must have one entry per prediction")
    return p, y


def _require_binary(p: np.ndarray) -> None:
    if p.shape[1] != 2:
        raise ValidationError("this metric is defined for binary classification only")


def _binary_entropy_norm(a: np.ndarray) -> np.ndarray:
    return normalized_entropy(np.column_stack([a, 1.0 - a]))


def bin_stats(bin_idx: np.ndarray, m: int, probs: np.ndarray, labels: np.ndarray) -> list[BinStat]:
    """Summaries of each of ``m`` bins given a per-record bin assignment."""
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(float)
    ent = normalized_entropy(probs)
    count = np.bincount(bin_idx, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = np.bincount(bin_idx, conf, m) / count
        acc = np.bincount(bin_idx, correct, m) / count
        uncert = np.bincount(bin_idx, ent, m) / count
    obs = np.full(m, np.nan)
    filled = count > 0
    obs[filled] = _binary_entropy_norm(np.clip(acc[filled], 0.0, 1.0))
    return [BinStat(i, int(count[i]), float(mean_conf[i]), float(acc[i]), float(uncert[i]),
                    float(1.0 - acc[i]), float(obs[i])) for i in range(m)]


def _weighted_gap(bins: list[BinStat], n: int, a: str, b: str, scale_b: float = 1.0) -> float:
    total = 0.0
    for s in bins:
        if s.count:
            total += s.count / n * abs(getattr(s, a) - scale_b * getattr(s, b))
    return total


def ece(probs, labels, bins: int = DEFAULT_BINS) -> tuple[float, list[BinStat]]:
    """Expected calibration error over equal-width confidence bins."""
    p, y = _prepare(probs, labels)
    idx = equal_width_bins(p.max(axis=1), bins)
    stats_ = bin_stats(idx, bins, p, y)
    return _weighted_gap(stats_, len(y), "acc", "conf"), stats_


def ace(probs, labels, ranges: int = DEFAULT_BINS) -> float:
    """Adaptive calibration error: per-class equal-frequency ranges, unweighted mean gap."""
    p, y = _prepare(probs, labels)
    n, k = p.shape
    if ranges > n:
        warnings.warn(f"{ranges} ranges requested for {n} predictions; using {n}", stacklevel=2)
        ranges = n
    gaps = []
    for c in range(k):
        score = p[:, c]
        idx = equal_frequency_bins(score, ranges)
        count = np.bincount(idx, minlength=ranges)
        acc = np.bincount(idx, (y == c).astype(float), ranges) / count
        conf = np.bincount(idx, score, ranges) / count
        gaps.append(np.abs(acc - conf))
    return float(np.mean(np.concatenate(gaps)))


def uce(probs, labels, bins: int = DEFAULT_BINS) -> tuple[float, list[BinStat]]:
    """Uncertainty calibration error over equal-width normalized-entropy bins.

    For two classes the bin uncertainty is halved, since a maximally uncertain
    binary prediction is wrong half the time.
    """
    p, y = _prepare(probs, labels)
    idx = equal_width_bins(normalized_entropy(p), bins)
    stats_ = bin_stats(idx, bins, p, y)
    scale = 0.5 if p.shape[1] == 2 else 1.0
    return _weighted_gap(stats_, len(y), "err", "uncert", scale), stats_


def vce(probs, labels, bins: int = DEFAULT_BINS) -> tuple[float, list[BinStat]]:
    """Variation calibration error with entropy as the measure of variation.

    Bins by predicted normalized entropy and compares the bin's mean predicted
    entropy with the normalized entropy of its observed (correct, incorrect)
    proportions.
    """
    p, y = _prepare(probs, labels)
    _require_binary(p)
    idx = equal_width_bins(normalized_entropy(p), bins)
    stats_ = bin_stats(idx, bins, p, y)
    return _weighted_gap(stats_, len(y), "obs_entropy", "uncert"), stats_


# ---------------------------------------------------------------------------
# smooth ECE

SMECE_GRID = 2048
_SMECE_OVERSAMPLE = 16


def _residual_cosine_coeffs(f: np.ndarray, r: np.ndarray, n_fine: int) -> np.ndarray:
    """``A_n = mean(r_i cos(pi n f_i))`` for ``n < n_fine``, via linear binning and a DCT-I."""
    h = 1.0 / (n_fine - 1)
    pos = np.clip(f, 0.0, 1.0) / h
    left = np.minimum(np.floor(pos).astype(np.intp), n_fine - 2)
    frac = pos - left
    mass = np.bincount(left, r * (1.0 - frac), n_fine) + np.bincount(left + 1, r * frac, n_fine)
    mass /= f.size
    y = fft.dct(mass, type=1)
    sign = np.where(np.arange(n_fine) % 2 == 0, 1.0, -1.0)
    return 0.5 * (y + mass[0] + sign * mass[-1])


def _smoothed_residual(coeffs: np.ndarray, sigma: float) -> np.ndarray:
    """Reflected-Gaussian smoothed residual density on the fine grid."""
    n = np.arange(coeffs.size)
    c = coeffs * np.exp(-0.5 * (sigma * math.pi * n) ** 2)
    sign = np.where(np.arange(coeffs.size) % 2 == 0, 1.0, -1.0)
    return fft.dct(c, type=1) + sign * c[-1]


def smece_at(coeffs: np.ndarray, sigma: float) -> float:
    h = _smoothed_residual(coeffs, sigma)[::_SMECE_OVERSAMPLE]
    t = np.linspace(0.0, 1.0, h.size)
    return float(np.trapezoid(np.abs(h), t))


def smece(probs, labels, tol: float = 1e-4, max_iter: int = 100) -> float:
    """Smooth ECE of the positive-class probability.

    The residuals ``y - f`` are smoothed with a Gaussian kernel reflected at 0
    and 1, and the L1 mass of the smoothed residual is integrated with the
    trapezoid rule on a 2048-point grid. The bandwidth is the fixed point
    ``sigma = smECE_sigma``, located by bisection.
    """
    p, y = _prepare(probs, labels)
    _require_binary(p)
    f = p[:, 1]
    r = (y == 1).astype(float) - f
    coeffs = _residual_cosine_coeffs(f, r, _SMECE_OVERSAMPLE * (SMECE_GRID - 1) + 1)
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if smece_at(coeffs, mid) > mid:
            lo = mid
        else:
            hi = mid
    return smece_at(coeffs, 0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# scoring and ranking


def nll(probs, labels) -> float:
    """Mean negative log-likelihood of the true class, probabilities floored at 1e-12."""
    p, y = _prepare(probs, labels)
    pt = np.clip(p[np.arange(len(y)), y], PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(-np.mean(np.log(pt)))


def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney U statistic with mid-ranks for ties."""
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        _require_binary(s)
        s = s[:, 1]
    y = np.asarray(labels).astype(np.intp)
    n_pos = int(np.count_nonzero(y == 1))
    n_neg = int(np.count_nonzero(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC is undefined unless both classes are present")
    ranks = stats.rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ThresholdMetrics:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    f1: float
    sensitivity: float
    specificity: float
    mcc: float
    balanced_accuracy: float
    mcc_defined: bool

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v)
                for k, v in asdict(self).items()}


def _ratio(a: float, b: float) -> float:
    return a / b if b else math.nan


def confusion_metrics(tp: int, fp: int, fn: int, tn: int, threshold: float = math.nan) -> ThresholdMetrics:
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    denom = math.sqrt(float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn))
    mcc = (tp * tn - fp * fn) / denom if denom else 0.0
    return ThresholdMetrics(
        threshold=threshold, tp=tp, fp=fp, fn=fn, tn=tn,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        sensitivity=sens, specificity=spec, mcc=mcc,
        balanced_accuracy=0.5 * (sens + spec),
        mcc_defined=bool(denom),
    )


def threshold_metrics(scores, labels, threshold: float = 0.5) -> ThresholdMetrics:
    """Confusion-matrix metrics when ``score >= threshold`` is called positive."""
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        _require_binary(s)
        s = s[:, 1]
    y = np.asarray(labels).astype(np.intp) == 1
    pred = s >= threshold
    tp = int(np.count_nonzero(pred & y))
    fp = int(np.count_nonzero(pred & ~y))
    fn = int(np.count_nonzero(~pred & y))
    tn = int(np.count_nonzero(~pred & ~y))
    return confusion_metrics(tp, fp, fn, tn, float(threshold))


def sweep(scores, labels, constraint: str = "sensitivity", bound: float = 0.8) -> ThresholdMetrics:
    """Best threshold for the free rate subject to ``constraint > bound``.

    With ``constraint="sensitivity"`` the specificity is maximised among
    cut-points whose sensitivity exceeds ``bound``, and vice versa. Cut-points
    are the unique scores; ties in the objective go to the lowest threshold.
    """
    if constraint not in ("sensitivity", "specificity"):
        raise ValidationError("constraint must be 'sensitivity' or 'specificity'")
    free = "specificity" if constraint == "sensitivity" else "sensitivity"
    s = np.asarray(scores, dtype=float)
    if s.ndim == 2:
        _require_binary(s)
        s = s[:, 1]
    best = None
    for t in np.unique(s):
        m = threshold_metrics(s, labels, t)
        c, v = getattr(m, constraint), getattr(m, free)
        if math.isnan(c) or math.isnan(v) or not c > bound:
            continue
        if best is None or v > getattr(best, free):
            best = m
    if best is None:
        raise ValidationError(f"no threshold gives {constraint} > {bound}")
    return best
