"""Post-hoc recalibration and conformal methods.

Fitted models are small frozen dataclasses with ``to_dict``/``from_dict`` for
JSON storage. Fitting functions take a calibration set; applying them is a
pure function of the fitted model and the test predictions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .conversion import gaussian_to_interval, interval_to_gaussian, jaccard_mean, pit_values
from .core import (ClassBatch, ClassPrediction, GaussianBatch, IntervalBatch, QuantileBatch,
                   ValidationError, log_softmax, softmax, std_normal_quantile)

LOG_T_BOUNDS = (-4.0, 4.0)
SCALE_FLOOR = 1e-6


class DegenerateFitWarning(UserWarning):
    pass


class InsufficientCalibrationData(ValidationError):
    pass


# ---------------------------------------------------------------------------
# pool adjacent violators


def pava(y, w=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit to ``y`` (pool adjacent violators).

    Each pooled block takes the weighted mean of its members, computed with
    exactly rounded sums so the result does not depend on merge order.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValidationError("pava needs a non-empty vector")
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    if w.shape != y.shape:
        raise ValidationError("weights must match y in length")
    if not np.all(w > 0):
        raise ValidationError("weights must be strictly positive")
    wy = w * y
    # blocks as parallel stacks of (start, sum_wy, sum_w)
    starts: list[int] = []
    sums: list[float] = []
    weights: list[float] = []
    for i in range(y.size):
        starts.append(i)
        sums.append(wy[i])
        weights.append(w[i])
        while len(sums) > 1 and sums[-2] * weights[-1] > sums[-1] * weights[-2]:
            s, ww = sums.pop(), weights.pop()
            starts.pop()
            sums[-1] += s
            weights[-1] += ww
    # exact block means; blocks whose true means tie can still round out of
    # order, so merge again on the rounded values
    bounds: list[int] = []
    means: list[float] = []
    for a, b in zip(starts, starts[1:] + [y.size]):
        m = math.fsum(wy[a:b]) / math.fsum(w[a:b])
        while means and means[-1] > m:
            means.pop()
            a = bounds.pop()
            m = math.fsum(wy[a:b]) / math.fsum(w[a:b])
        bounds.append(a)
        means.append(m)
    return np.repeat(means, np.diff(bounds + [y.size]))


@dataclass(frozen=True, eq=False)
class IsotonicModel:
    """Non-decreasing step function; ``values[k]`` holds from ``breakpoints[k]`` on.

    Inputs below the first breakpoint map to the first value, so the function
    is clamped to its end values outside the fitted range.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or b.size == 0:
            raise ValidationError("breakpoints and values must be equal-length vectors")
        if np.any(np.diff(b) <= 0) or np.any(np.diff(v) < 0):
            raise ValidationError("isotonic model must be increasing in x and non-decreasing in value")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.breakpoints, x, side="right") - 1
        out = self.values[np.clip(k, 0, None)]
        return float(out) if out.ndim == 0 else out

    def inverse(self, tau):
        """Generalised inverse ``inf {x : g(x) >= tau}`` (clamped to the breakpoint range)."""
        tau = np.asarray(tau, dtype=float)
        k = np.searchsorted(self.values, tau, side="left")
        out = self.breakpoints[np.clip(k, 0, self.breakpoints.size - 1)]
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d) -> "IsotonicModel":
        return cls(d["breakpoints"], d["values"])


def _pool_ties(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    ux, start = np.unique(xs, return_index=True)
    wsum = np.add.reduceat(ws, start)
    ymean = np.add.reduceat(ws * ys, start) / wsum
    return ux, ymean, wsum


def fit_isotonic(x, y, w=None) -> IsotonicModel:
    """Isotonic regression of ``y`` on ``x``; tied ``x`` values share one pooled value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise ValidationError("empty calibration set")
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    ux, uy, uw = _pool_ties(x, y, w)
    fit = pava(uy, uw)
    keep = np.concatenate([[True], np.diff(fit) != 0])
    return IsotonicModel(ux[keep], fit[keep])


# ---------------------------------------------------------------------------
# temperature scaling


@dataclass(frozen=True)
class TemperatureModel:
    T: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValidationError("temperature must be finite and positive")

    def to_dict(self) -> dict:
        return {"T": self.T}


def temperature_nll(logits, labels, t: float) -> float:
    lp = log_softmax(np.asarray(logits, dtype=float) / t, axis=1)
    return float(-np.mean(lp[np.arange(len(labels)), labels]))


def golden_section(fn, lo: float, hi: float, tol: float = 1e-6) -> float:
    """Minimiser of a unimodal ``fn`` on ``[lo, hi]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def search_temperature(logits, labels, bounds=LOG_T_BOUNDS, tol: float = 1e-6) -> float:
    """Raw NLL-minimising temperature from a golden-section search over ``log T``."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels).astype(np.intp)
    return math.exp(golden_section(lambda lt: temperature_nll(z, y, math.exp(lt)), *bounds, tol=tol))


def fit_temperature(cal: ClassBatch, bounds=LOG_T_BOUNDS, tol: float = 1e-6) -> TemperatureModel:
    """Temperature minimising the calibration-set NLL of ``softmax(logits / T)``.

    A calibration set whose labels are all one class carries no information
    about the temperature; a warning is issued and ``T = 1`` returned.
    """
    z = cal.require_logits()
    y = cal.require_labels()
    if len(y) == 0:
        raise ValidationError("empty calibration set")
    if np.unique(y).size < 2:
        warnings.warn("calibration labels are all one class; returning T = 1", DegenerateFitWarning,
                      stacklevel=2)
        return TemperatureModel(1.0)
    return TemperatureModel(search_temperature(z, y, bounds, tol))


def apply_temperature(model: TemperatureModel, pred):
    """Rescale logits by ``1 / T``; accepts a :class:`ClassPrediction` or a :class:`ClassBatch`."""
    if isinstance(pred, ClassBatch):
        z = pred.require_logits() / model.T
        return pred.with_probs(softmax(z, axis=1), z)
    if pred.logits is None:
        raise ValidationError("temperature scaling needs logits")
    z = np.asarray(pred.logits) / model.T
    return ClassPrediction(tuple(softmax(z).tolist()), tuple(z.tolist()), pred.label, pred.id, pred.meta)


# ---------------------------------------------------------------------------
# variance scaling


@dataclass(frozen=True)
class VarianceScaleModel:
    """Multiplier ``s`` on the predicted standard deviation."""

    s: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0):
            raise ValidationError("scale must be finite and positive")

    def to_dict(self) -> dict:
        return {"s": self.s}


def fit_variance_scale(cal: GaussianBatch) -> VarianceScaleModel:
    """Maximum-likelihood scale: ``s^2 = mean((y - mu)^2 / var)``."""
    y = cal.require_truth()
    if len(y) == 0:
        raise ValidationError("empty calibration set")
    if np.any(cal.variance <= 0):
        raise ValidationError("variance scaling needs strictly positive variances")
    s = math.sqrt(float(np.mean((y - cal.mean) ** 2 / cal.variance)))
    if s < SCALE_FLOOR:
        warnings.warn(f"fitted scale {s} floored at {SCALE_FLOOR}", DegenerateFitWarning, stacklevel=2)
        s = SCALE_FLOOR
    return VarianceScaleModel(s)


def apply_variance_scale(model: VarianceScaleModel, pred: GaussianBatch) -> GaussianBatch:
    return pred.with_params(pred.mean, pred.variance * model.s ** 2)


# ---------------------------------------------------------------------------
# isotonic calibration


def fit_isotonic_classifier(cal: ClassBatch) -> list[IsotonicModel]:
    """One-vs-rest isotonic maps from each class score to that class's frequency."""
    y = cal.require_labels()
    if len(y) == 0:
        raise ValidationError("empty calibration set")
    return [fit_isotonic(cal.probs[:, c], (y == c).astype(float)) for c in range(cal.n_classes)]


def apply_isotonic_classifier(models: list[IsotonicModel], pred: ClassBatch) -> ClassBatch:
    """Map each class score through its isotonic model, then renormalise rows.

    A row whose mapped scores are all zero becomes uniform.
    """
    if len(models) != pred.n_classes:
        raise ValidationError("one isotonic model per class is required")
    raw = np.column_stack([g(pred.probs[:, c]) for c, g in enumerate(models)])
    total = raw.sum(axis=1, keepdims=True)
    k = pred.n_classes
    out = np.where(total > 0, raw / np.where(total > 0, total, 1.0), 1.0 / k)
    return pred.with_probs(out)


def isotonic_classifier(cal: ClassBatch, test: ClassBatch) -> ClassBatch:
    return apply_isotonic_classifier(fit_isotonic_classifier(cal), test)


_PIT_CLIP = 1e-12


def fit_quantile_recalibrator(cal: GaussianBatch) -> IsotonicModel | None:
    """Isotonic map from nominal PIT level to observed frequency on the calibration set.

    Returns ``None`` (with a warning) when the PIT values are all identical.
    """
    y = cal.require_truth()
    if len(y) == 0:
        raise ValidationError("empty calibration set")
    u = pit_values(cal.mean, cal.variance, y)
    if np.unique(u).size < 2:
        warnings.warn("calibration PIT values are degenerate; no recalibration applied",
                      DegenerateFitWarning, stacklevel=2)
        return None
    su = np.sort(u)
    freq = np.searchsorted(su, u, side="right") / u.size
    return fit_isotonic(u, freq)


def apply_quantile_recalibrator(model: IsotonicModel | None, pred: GaussianBatch,
                                pair=(0.1587, 0.8413)) -> GaussianBatch:
    """Recalibrated quantiles ``F^-1(R^-1(level))`` at ``pair``, re-fitted as a Gaussian."""
    if model is None:
        return pred
    lv = np.clip(model.inverse(np.asarray(pair)), _PIT_CLIP, 1 - _PIT_CLIP)
    z_lo, z_hi = std_normal_quantile(lv)
    sd = pred.std
    mean, var = interval_to_gaussian(pred.mean + sd * z_lo, pred.mean + sd * z_hi, *pair)
    return pred.with_params(mean, var)


def isotonic_regression_recalibrate(cal: GaussianBatch, test: GaussianBatch,
                                    pair=(0.1587, 0.8413)) -> GaussianBatch:
    return apply_quantile_recalibrator(fit_quantile_recalibrator(cal), test, pair)


# ---------------------------------------------------------------------------
# conformal


@dataclass(frozen=True)
class ConformalOffset:
    level: float
    q_hat: float

    def __post_init__(self):
        if not math.isfinite(self.q_hat):
            raise ValidationError("conformal offset must be finite")

    def to_dict(self) -> dict:
        return {"level": self.level, "q_hat": self.q_hat}


def conformal_rank(n: int, level: float) -> int:
    """1-based order statistic ``ceil((n + 1) * level)`` used as the score quantile."""
    k = math.ceil((n + 1) * level - 1e-9)
    if k > n:
        raise InsufficientCalibrationData(
            f"{n} calibration points cannot support coverage {level} (need rank {k})")
    return max(k, 1)


def conformal_offset(lo, hi, truth, level: float) -> ConformalOffset:
    """Score quantile for scores ``max(lo - y, y - hi)``."""
    y = np.asarray(truth, dtype=float)
    scores = np.maximum(np.asarray(lo) - y, y - np.asarray(hi))
    k = conformal_rank(scores.size, level)
    return ConformalOffset(level, float(np.sort(scores)[k - 1]))


def widen(offset: ConformalOffset, lo, hi):
    """Shift both bounds outwards by ``q_hat``; crossed bounds collapse to their midpoint."""
    lo = np.asarray(lo, dtype=float) - offset.q_hat
    hi = np.asarray(hi, dtype=float) + offset.q_hat
    mid = 0.5 * (lo + hi)
    crossed = lo > hi
    return np.where(crossed, mid, lo), np.where(crossed, mid, hi)


def cqr_fit(cal: QuantileBatch, pair: tuple[float, float]) -> ConformalOffset:
    y = cal.require_truth()
    return conformal_offset(cal.column(pair[0]), cal.column(pair[1]), y, pair[1] - pair[0])


def cqr_apply(offset: ConformalOffset, q: QuantileBatch, pair: tuple[float, float]) -> IntervalBatch:
    lo, hi = widen(offset, q.column(pair[0]), q.column(pair[1]))
    return IntervalBatch(lo, hi, offset.level, q.truth, q.measurand, q.ids, q.meta)


def cmap_fit(cal: GaussianBatch, level: float) -> ConformalOffset:
    lo, hi = gaussian_to_interval(cal.mean, cal.variance, level)
    return conformal_offset(lo, hi, cal.require_truth(), level)


def cmap_apply(offset: ConformalOffset, test: GaussianBatch) -> IntervalBatch:
    lo, hi = widen(offset, *gaussian_to_interval(test.mean, test.variance, offset.level))
    return IntervalBatch(lo, hi, offset.level, test.truth, test.measurand, test.ids, test.meta)


def cmap(cal: GaussianBatch, test: GaussianBatch, level: float) -> tuple[IntervalBatch, ConformalOffset]:
    offset = cmap_fit(cal, level)
    return cmap_apply(offset, test), offset


# ---------------------------------------------------------------------------
# Venn-ABERS


@dataclass(frozen=True, eq=False)
class VennAbersResult:
    p0: np.ndarray
    p1: np.ndarray
    p: np.ndarray


def _pava_stacks(y: np.ndarray, w: np.ndarray):
    """Persistent PAVA block stacks for every prefix and every suffix.

    ``left[k]`` is the top block of the isotonic fit of items ``[0, k)`` and
    ``right[k]`` the first block of the fit of items ``[k, n)``. Blocks are
    ``(sum_wy, sum_w, next)`` tuples shared between stacks.
    """
    n = y.size
    left: list = [None] * (n + 1)
    top = None
    for i in range(n):
        s, ww = float(y[i] * w[i]), float(w[i])
        while top is not None and top[0] * ww > s * top[1]:
            s, ww, top = s + top[0], ww + top[1], top[2]
        top = (s, ww, top)
        left[i + 1] = top
    right: list = [None] * (n + 1)
    top = None
    for i in range(n - 1, -1, -1):
        s, ww = float(y[i] * w[i]), float(w[i])
        while top is not None and top[0] * ww < s * top[1]:
            s, ww, top = s + top[0], ww + top[1], top[2]
        top = (s, ww, top)
        right[i] = top
    return left, right


def _inserted_value(s: float, w: float, lft, rgt) -> float:
    """Fitted value of a block placed between a prefix fit and a suffix fit.

    Both neighbouring fits are already monotone, so only the new block can
    violate the ordering; pooling it outwards until it fits gives the
    isotonic fit of the whole sequence.
    """
    while True:
        if lft is not None and lft[0] * w > s * lft[1]:
            s, w, lft = s + lft[0], w + lft[1], lft[2]
        elif rgt is not None and rgt[0] * w < s * rgt[1]:
            s, w, rgt = s + rgt[0], w + rgt[1], rgt[2]
        else:
            return s / w


def venn_abers(cal_scores, cal_labels, test_scores) -> VennAbersResult:
    """Inductive Venn-ABERS probability intervals for binary scores.

    For each test score ``s`` the calibration set is augmented with ``(s, 0)``
    and ``(s, 1)`` in turn, an isotonic fit is made, and its value at ``s``
    gives ``p0`` and ``p1``. Instead of refitting from scratch, the isotonic
    fits of the calibration points left and right of ``s`` are computed once
    and the test point is pooled into them.
    """
    x = np.asarray(cal_scores, dtype=float)
    y = np.asarray(cal_labels)
    if x.size == 0:
        raise ValidationError("empty calibration set")
    if x.ndim != 1 or y.shape != x.shape:
        raise ValidationError("Venn-ABERS needs one binary score per calibration record")
    if not np.all(np.isin(y, (0, 1))):
        raise ValidationError("Venn-ABERS is defined for binary labels only")
    s = np.atleast_1d(np.asarray(test_scores, dtype=float))
    ux, uy, uw = _pool_ties(x, y.astype(float), np.ones_like(x))
    left, right = _pava_stacks(uy, uw)
    pos = np.searchsorted(ux, s, side="left")
    tie = (pos < ux.size) & (ux[np.minimum(pos, ux.size - 1)] == s)
    p0 = np.empty(s.size)
    p1 = np.empty(s.size)
    cache: dict[tuple[int, bool], tuple[float, float]] = {}
    for i, (k, t) in enumerate(zip(pos.tolist(), tie.tolist())):
        key = (k, t)
        if key not in cache:
            if t:
                base, wk, rgt = uy[k] * uw[k], uw[k] + 1.0, right[k + 1]
            else:
                base, wk, rgt = 0.0, 1.0, right[k]
            cache[key] = (_inserted_value(base, wk, left[k], rgt),
                          _inserted_value(base + 1.0, wk, left[k], rgt))
        p0[i], p1[i] = cache[key]
    return VennAbersResult(p0, p1, jaccard_mean(p0, p1))


def venn_abers_batch(cal: ClassBatch, test: ClassBatch) -> tuple[ClassBatch, VennAbersResult]:
    """Venn-ABERS on the positive-class probability; returns point-probability predictions."""
    if cal.n_classes != 2 or test.n_classes != 2:
        raise ValidationError("Venn-ABERS is defined for binary classification only")
    res = venn_abers(cal.probs[:, 1], cal.require_labels(), test.probs[:, 1])
    return test.with_probs(np.column_stack([1.0 - res.p, res.p])), res
