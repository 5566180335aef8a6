"""Binning and group-conditioned evaluation, with bootstrap intervals."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .core import ClassBatch, ValidationError


# ---------------------------------------------------------------------------
# binning


def equal_width_bins(values, m: int, domain: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """Bin index in ``0..m-1`` for each value over ``m`` equal-width bins.

    A value on an interior edge goes to the upper bin; the right end of the
    domain belongs to the last bin. Values outside the domain are clipped.
    """
    if m < 1:
        raise ValidationError("number of bins must be at least 1")
    lo, hi = domain
    if not hi > lo:
        raise ValidationError("bin domain must have positive width")
    v = np.asarray(values, dtype=float)
    inner = lo + (hi - lo) * np.arange(1, m) / m
    return np.searchsorted(inner, v, side="right").astype(np.intp)


def equal_frequency_sizes(n: int, m: int) -> np.ndarray:
    """Bin sizes differing by at most one, with the remainder on the final bins."""
    base, rem = divmod(n, m)
    sizes = np.full(m, base, dtype=np.intp)
    if rem:
        sizes[m - rem:] += 1
    return sizes


def _reduce_bins(n: int, m: int) -> int:
    if m < 1:
        raise ValidationError("number of bins must be at least 1")
    if n == 0:
        raise ValidationError("cannot bin an empty set")
    if m > n:
        warnings.warn(f"{m} bins requested for {n} values; using {n}", stacklevel=3)
        return n
    return m


def equal_frequency_bins(values, m: int) -> np.ndarray:
    """Bin index per value for ``m`` equal-count bins in rank order (stable for ties)."""
    v = np.asarray(values, dtype=float)
    m = _reduce_bins(v.size, m)
    order = np.argsort(v, kind="stable")
    out = np.empty(v.size, dtype=np.intp)
    out[order] = np.repeat(np.arange(m), equal_frequency_sizes(v.size, m))
    return out


# ---------------------------------------------------------------------------
# stratification


@dataclass(frozen=True)
class Stratifier:
    """Grouping rule: ``true-class``, ``predicted-class``, ``measurand`` or ``tag:<name>``."""

    key: str

    def __post_init__(self):
        if self.key not in ("true-class", "predicted-class", "measurand", "constant") \
                and not self.key.startswith("tag:"):
            raise ValidationError(f"unknown stratifier key {self.key!r}")

    def groups(self, batch) -> np.ndarray:
        n = len(batch)
        if self.key == "constant":
            return np.array(["all"] * n, dtype=object)
        if self.key == "true-class":
            if not isinstance(batch, ClassBatch):
                raise ValidationError("true-class grouping needs classification records")
            return np.array([str(v) for v in batch.require_labels()], dtype=object)
        if self.key == "predicted-class":
            if not isinstance(batch, ClassBatch):
                raise ValidationError("predicted-class grouping needs classification records")
            return np.array([str(v) for v in batch.predicted], dtype=object)
        if self.key == "measurand":
            ms = getattr(batch, "measurand", None)
            if ms is None:
                raise ValidationError("records carry no measurand")
            return np.asarray(ms, dtype=object)
        return batch.tag(self.key[4:])


def _group_order(keys: np.ndarray) -> list[str]:
    seen: dict[str, None] = {}
    for k in keys:
        seen.setdefault(k, None)
    try:
        return sorted(seen, key=lambda s: (0, int(s)))
    except ValueError:
        return sorted(seen)


@dataclass
class StratifiedReport:
    overall: dict[str, float | None]
    groups: dict[str, dict[str, float | None]]
    group_sizes: dict[str, int]
    group_mean: dict[str, float | None]
    notes: list[str] = field(default_factory=list)


def safe_metric(metric: Callable, batch) -> float | None:
    """``metric(batch)``, or ``None`` if the metric is undefined on this batch."""
    try:
        return float(metric(batch))
    except (ValidationError, ZeroDivisionError):
        return None


def stratified_evaluate(batch, stratifier: Stratifier,
                        metrics: Mapping[str, Callable[[Any], float]]) -> StratifiedReport:
    """Evaluate every metric on the whole batch and separately on each group.

    ``group_mean`` averages the defined per-group values of each metric (e.g.
    the mean of per-class ECEs). A metric that cannot be computed on a group
    (say AUC on a single-class group) is recorded as ``None``.
    """
    keys = stratifier.groups(batch)
    overall = {name: safe_metric(fn, batch) for name, fn in metrics.items()}
    groups: dict[str, dict[str, float | None]] = {}
    sizes: dict[str, int] = {}
    notes = []
    for g in _group_order(keys):
        idx = np.flatnonzero(keys == g)
        if idx.size == 0:
            notes.append(f"group {g!r} is empty and was omitted")
            continue
        sub = batch.subset(idx)
        groups[g] = {}
        for name, fn in metrics.items():
            val = safe_metric(fn, sub)
            if val is None:
                notes.append(f"{name} undefined for group {g!r}")
            groups[g][name] = val
        sizes[g] = int(idx.size)
    group_mean = {}
    for name in metrics:
        vals = [groups[g][name] for g in groups if groups[g][name] is not None]
        group_mean[name] = float(np.mean(vals)) if vals else None
    return StratifiedReport(overall, groups, sizes, group_mean, notes)


# ---------------------------------------------------------------------------
# bootstrap


@dataclass(frozen=True)
class BootstrapReport:
    metric: str
    value: float
    lower: float
    upper: float
    B: int
    seed: int
    level: float
    group: str | None = None
    p_value: float | None = None
    redraws: int = 0

    def to_dict(self) -> dict:
        d = {"metric": self.metric, "group": self.group, "value": self.value,
             "ci": [self.lower, self.upper], "B": self.B, "seed": self.seed}
        if self.p_value is not None:
            d["p_value"] = self.p_value
        return d


class BootstrapError(RuntimeError):
    pass


def resample_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(b)])


def _resample_stats(n: int, stat: Callable[[np.ndarray], float], B: int, seed: int,
                    workers: int) -> tuple[np.ndarray, int]:
    budget = 10 * B

    def one(b: int) -> tuple[float, int]:
        rng = resample_rng(seed, b)
        redraws = 0
        while True:
            idx = rng.integers(0, n, size=n)
            try:
                val = float(stat(idx))
            except (ValidationError, ZeroDivisionError):
                val = math.nan
            if math.isfinite(val):
                return val, redraws
            redraws += 1
            if redraws > budget:
                raise BootstrapError("metric undefined on too many resamples")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]
    total = sum(r for _, r in results)
    if total > budget:
        raise BootstrapError(f"{total} redraws exceeded the cap of {budget}")
    return np.array([v for v, _ in results]), total


def _percentile_ci(stats: np.ndarray, level: float) -> tuple[float, float]:
    alpha = 1.0 - level
    lo, hi = np.percentile(stats, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)


def bootstrap_ci(batch, metric: Callable[[Any], float], B: int = 1000, level: float = 0.95,
                 seed: int = 0, name: str = "metric", workers: int = 1) -> BootstrapReport:
    """Percentile bootstrap interval of ``metric`` over records resampled with replacement.

    Resample ``b`` draws its indices from a generator keyed by ``(seed, b)``, so
    the result is identical for any ``workers`` count. Resamples on which the
    metric is undefined are redrawn, up to ``10 * B`` redraws in total.
    """
    if B < 100:
        raise ValidationError("B must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    point = float(metric(batch))
    stats, redraws = _resample_stats(len(batch), lambda idx: metric(batch.subset(idx)), B, seed, workers)
    lo, hi = _percentile_ci(stats, level)
    return BootstrapReport(name, point, lo, hi, B, seed, level, redraws=redraws)


class PairingError(ValidationError):
    pass


def paired_compare(batch_a, batch_b, metric: Callable[[Any], float], B: int = 1000,
                   level: float = 0.95, seed: int = 0, name: str = "metric",
                   workers: int = 1) -> BootstrapReport:
    """Bootstrap the difference ``metric(a) - metric(b)`` on shared record resamples.

    Both batches must list the same record ids in the same order. The two-sided
    p-value is ``2 * min(P(diff <= 0), P(diff >= 0))`` with add-one smoothing.
    """
    if B < 100:
        raise ValidationError("B must be at least 100")
    if tuple(batch_a.ids) != tuple(batch_b.ids):
        raise PairingError("the two prediction sets do not share the same record ids")
    point = float(metric(batch_a)) - float(metric(batch_b))
    stats, redraws = _resample_stats(
        len(batch_a), lambda idx: metric(batch_a.subset(idx)) - metric(batch_b.subset(idx)),
        B, seed, workers)
    lo, hi = _percentile_ci(stats, level)
    p_le = (1 + np.count_nonzero(stats <= 0)) / (B + 1)
    p_ge = (1 + np.count_nonzero(stats >= 0)) / (B + 1)
    p = min(1.0, 2.0 * min(p_le, p_ge))
    return BootstrapReport(name, point, lo, hi, B, seed, level, p_value=float(p), redraws=redraws)
