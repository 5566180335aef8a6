"""Prediction records and batches, plus shared probability helpers.

Records (``ClassPrediction``, ``GaussianPrediction``, ``QuantileSet``,
``Interval``) are the per-example units read from and written to NDJSON.
Metrics and recalibrators work on the column-oriented batch containers
(``ClassBatch``, ``GaussianBatch``, ``QuantileBatch``, ``IntervalBatch``), which
validate their invariants in vectorised form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy import special

PROB_FLOOR = 1e-12
SUM_TOL = 1e-9

ROLES = ("train-baseline", "calibration", "test")
KINDS = ("class", "gaussian", "quantile", "interval")


class ValidationError(ValueError):
    """A value violates a domain invariant."""


class SchemaError(ValidationError):
    """A record stream is structurally inconsistent (mixed kinds, class counts)."""


class RecordError(ValidationError):
    """A single NDJSON line could not be parsed or validated."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ---------------------------------------------------------------------------
# probability math


def softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValidationError("logits must be finite")
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return z - special.logsumexp(z, axis=axis, keepdims=True)


def entropy(probs, axis: int = -1) -> np.ndarray:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    return -np.sum(special.xlogy(p, p), axis=axis)


def normalized_entropy(probs, axis: int = -1):
    """Entropy divided by ``log K``; 0 for one-hot rows and 1 for uniform rows.

    Accepts a single probability vector or an ``(N, K)`` array of rows.
    """
    p = np.asarray(probs, dtype=float)
    _check_simplex(p, axis=axis)
    k = p.shape[axis]
    if k < 2:
        raise ValidationError("normalized entropy needs at least two classes")
    h = np.clip(entropy(p, axis=axis) / math.log(k), 0.0, 1.0)
    return float(h) if h.ndim == 0 else h


def std_normal_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):  # huge |x| squares to inf, exp gives the correct 0
        out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise ValidationError("quantile level must lie strictly inside (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def _check_simplex(p: np.ndarray, axis: int = -1) -> None:
    if not np.all(np.isfinite(p)):
        raise ValidationError("probabilities must be finite")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValidationError("probabilities must lie in [0, 1]")
    if np.any(np.abs(np.sum(p, axis=axis) - 1.0) > SUM_TOL):
        raise ValidationError("probabilities must sum to 1")


def _readonly(a: np.ndarray | None) -> np.ndarray | None:
    if a is not None:
        a.flags.writeable = False
    return a


def _finite(x: Any, name: str) -> float:
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a number") from None
    if not math.isfinite(v):
        raise ValidationError(f"{name} must be finite")
    return v


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class ClassPrediction:
    probs: tuple[float, ...]
    logits: tuple[float, ...] | None = None
    label: int | None = None
    id: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValidationError("probs must be a vector of at least two classes")
        _check_simplex(p)
        object.__setattr__(self, "probs", tuple(float(v) for v in p))
        if self.logits is not None:
            z = np.asarray(self.logits, dtype=float)
            if z.shape != p.shape:
                raise ValidationError("logits and probs differ in length")
            if np.max(np.abs(softmax(z) - p)) > SUM_TOL:
                raise ValidationError("probs do not equal softmax(logits)")
            object.__setattr__(self, "logits", tuple(float(v) for v in z))
        if self.label is not None:
            if isinstance(self.label, bool) or int(self.label) != self.label:
                raise ValidationError("label must be an integer class index")
            if not 0 <= self.label < p.size:
                raise ValidationError(f"label {self.label} out of range for {p.size} classes")
            object.__setattr__(self, "label", int(self.label))

    @classmethod
    def from_logits(cls, logits, label=None, id="", meta=None) -> "ClassPrediction":
        z = tuple(float(v) for v in logits)
        return cls(tuple(softmax(z).tolist()), z, label, id, meta or {})

    @property
    def n_classes(self) -> int:
        return len(self.probs)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id}
        if self.logits is not None:
            d["logits"] = list(self.logits)
        else:
            d["probs"] = list(self.probs)
        if self.label is not None:
            d["label"] = self.label
        d.update(self.meta)
        return d


@dataclass(frozen=True)
class GaussianPrediction:
    mean: float
    variance: float
    truth: float | None = None
    measurand: str = ""
    id: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mean", _finite(self.mean, "mean"))
        var = _finite(self.variance, "variance")
        if var < 0:
            raise ValidationError("variance must be non-negative")
        object.__setattr__(self, "variance", var)
        if self.truth is not None:
            object.__setattr__(self, "truth", _finite(self.truth, "truth"))

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "measurand": self.measurand,
                             "mean": self.mean, "variance": self.variance}
        if self.truth is not None:
            d["truth"] = self.truth
        d.update(self.meta)
        return d


@dataclass(frozen=True)
class QuantileSet:
    levels: tuple[float, ...]
    values: tuple[float, ...]
    truth: float | None = None
    measurand: str = ""
    id: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if lv.ndim != 1 or lv.shape != vals.shape or lv.size == 0:
            raise ValidationError("levels and values must be equal-length vectors")
        if np.any(~(lv > 0) | ~(lv < 1)):
            raise ValidationError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(lv) <= 0):
            raise ValidationError("quantile levels must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("quantile values must be finite")
        if np.any(np.diff(vals) < 0):
            raise ValidationError("quantile values must be non-decreasing")
        object.__setattr__(self, "levels", tuple(lv.tolist()))
        object.__setattr__(self, "values", tuple(vals.tolist()))
        if self.truth is not None:
            object.__setattr__(self, "truth", _finite(self.truth, "truth"))

    def value_at(self, level: float) -> float:
        for lv, v in zip(self.levels, self.values):
            if abs(lv - level) <= 1e-9:
                return v
        raise KeyError(f"quantile level {level} not present in {self.levels}")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "measurand": self.measurand,
                             "levels": list(self.levels), "values": list(self.values)}
        if self.truth is not None:
            d["truth"] = self.truth
        d.update(self.meta)
        return d


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    level: float
    truth: float | None = None
    measurand: str = ""
    id: str = ""
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo, hi = _finite(self.lo, "lo"), _finite(self.hi, "hi")
        if lo > hi:
            raise ValidationError("interval lower bound exceeds upper bound")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("interval level must lie in (0, 1)")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "level", float(self.level))
        if self.truth is not None:
            object.__setattr__(self, "truth", _finite(self.truth, "truth"))

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "measurand": self.measurand,
                             "lo": self.lo, "hi": self.hi, "level": self.level}
        if self.truth is not None:
            d["truth"] = self.truth
        d.update(self.meta)
        return d


# ---------------------------------------------------------------------------
# batches


def _ids(ids, n: int, prefix: str) -> tuple[str, ...]:
    if ids is None:
        return tuple(f"{prefix}{i}" for i in range(n))
    ids = tuple(str(i) for i in ids)
    if len(ids) != n:
        raise ValidationError("ids length does not match the number of records")
    return ids


def _meta(meta, n: int) -> tuple[Mapping[str, Any], ...]:
    if meta is None:
        return tuple({} for _ in range(n))
    meta = tuple(meta)
    if len(meta) != n:
        raise ValidationError("meta length does not match the number of records")
    return meta


def _opt_array(a, n: int, name: str, dtype=float) -> np.ndarray | None:
    if a is None:
        return None
    a = np.array(a, dtype=dtype)
    if a.shape != (n,):
        raise ValidationError(f"{name} must have shape ({n},)")
    if dtype is float and not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} must be finite")
    return _readonly(a)


class _Batch:
    ids: tuple[str, ...]
    meta: tuple[Mapping[str, Any], ...]

    def __len__(self) -> int:
        return len(self.ids)

    def tag(self, name: str) -> np.ndarray:
        """Values of a metadata tag, one per record."""
        try:
            return np.array([str(m[name]) for m in self.meta], dtype=object)
        except KeyError:
            raise ValidationError(f"metadata tag {name!r} missing on some records") from None

    _per_record: tuple[str, ...] = ()

    def subset(self, idx):
        """Records at positions ``idx`` (repeats allowed), without revalidation."""
        idx = np.asarray(idx, dtype=np.intp)
        pos = idx.tolist()
        out = object.__new__(type(self))
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in self._per_record and v is not None:
                v = _readonly(v[idx])
            elif f.name in ("ids", "meta"):
                v = tuple(map(v.__getitem__, pos))
            object.__setattr__(out, f.name, v)
        return out


def _cat(parts: list[np.ndarray | None]) -> np.ndarray | None:
    if any(p is None for p in parts):
        return None
    return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class ClassBatch(_Batch):
    """``N`` classification predictions as an ``(N, K)`` probability matrix."""

    _per_record = ("probs", "labels", "logits")

    probs: np.ndarray
    labels: np.ndarray | None = None
    logits: np.ndarray | None = None
    ids: tuple[str, ...] | None = None
    meta: tuple[Mapping[str, Any], ...] | None = None

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2 or p.shape[1] < 2:
            raise ValidationError("probs must be an (N, K) matrix with K >= 2")
        _check_simplex(p, axis=1)
        n, k = p.shape
        object.__setattr__(self, "probs", _readonly(p))
        if self.logits is not None:
            z = np.array(self.logits, dtype=float)
            if z.shape != p.shape:
                raise ValidationError("logits and probs differ in shape")
            if n and np.max(np.abs(softmax(z, axis=1) - p)) > SUM_TOL:
                raise ValidationError("probs do not equal softmax(logits)")
            object.__setattr__(self, "logits", _readonly(z))
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (n,) or (n and not np.all(np.equal(np.mod(y, 1), 0))):
                raise ValidationError("labels must be an integer vector of length N")
            y = y.astype(np.intp)
            if n and (y.min() < 0 or y.max() >= k):
                raise ValidationError("label out of range")
            object.__setattr__(self, "labels", _readonly(y))
        object.__setattr__(self, "ids", _ids(self.ids, n, "c"))
        object.__setattr__(self, "meta", _meta(self.meta, n))

    @classmethod
    def from_logits(cls, logits, labels=None, ids=None, meta=None) -> "ClassBatch":
        z = np.asarray(logits, dtype=float)
        return cls(softmax(z, axis=1), labels, z, ids, meta)

    @classmethod
    def from_records(cls, records: Sequence[ClassPrediction]) -> "ClassBatch":
        if not records:
            raise ValidationError("no records")
        ks = {r.n_classes for r in records}
        if len(ks) != 1:
            raise SchemaError(f"mixed class counts {sorted(ks)}")
        probs = np.array([r.probs for r in records])
        has_logits = [r.logits is not None for r in records]
        logits = np.array([r.logits for r in records]) if all(has_logits) else None
        has_labels = [r.label is not None for r in records]
        labels = np.array([r.label for r in records]) if all(has_labels) else None
        return cls(probs, labels, logits, [r.id for r in records], [r.meta for r in records])

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def confidence(self) -> np.ndarray:
        return self.probs.max(axis=1)

    @property
    def predicted(self) -> np.ndarray:
        return self.probs.argmax(axis=1)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise ValidationError("labels are required")
        return self.labels

    def require_logits(self) -> np.ndarray:
        if self.logits is None:
            raise ValidationError("logits are required")
        return self.logits

    def with_probs(self, probs, logits=None) -> "ClassBatch":
        return ClassBatch(probs, self.labels, logits, self.ids, self.meta)

    @classmethod
    def concat(cls, parts: Sequence["ClassBatch"]) -> "ClassBatch":
        return cls(np.concatenate([p.probs for p in parts]), _cat([p.labels for p in parts]),
                   _cat([p.logits for p in parts]), sum((p.ids for p in parts), ()),
                   sum((p.meta for p in parts), ()))

    def records(self) -> Iterator[ClassPrediction]:
        for i in range(len(self)):
            yield ClassPrediction(
                tuple(self.probs[i].tolist()),
                None if self.logits is None else tuple(self.logits[i].tolist()),
                None if self.labels is None else int(self.labels[i]),
                self.ids[i], self.meta[i])


@dataclass(frozen=True, eq=False)
class GaussianBatch(_Batch):
    """``N`` Gaussian predictive distributions with optional ground truths."""

    _per_record = ("mean", "variance", "truth", "measurand")

    mean: np.ndarray
    variance: np.ndarray
    truth: np.ndarray | None = None
    measurand: np.ndarray | None = None
    ids: tuple[str, ...] | None = None
    meta: tuple[Mapping[str, Any], ...] | None = None

    def __post_init__(self):
        mu = np.array(self.mean, dtype=float)
        if mu.ndim != 1:
            raise ValidationError("mean must be a vector")
        n = mu.size
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mean must be finite")
        var = _opt_array(self.variance, n, "variance")
        if np.any(var < 0):
            raise ValidationError("variance must be non-negative")
        object.__setattr__(self, "mean", _readonly(mu))
        object.__setattr__(self, "variance", var)
        object.__setattr__(self, "truth", _opt_array(self.truth, n, "truth"))
        ms = self.measurand
        if ms is None or isinstance(ms, str):
            ms = [ms or ""] * n
        object.__setattr__(self, "measurand", _opt_array(ms, n, "measurand", dtype=object))
        object.__setattr__(self, "ids", _ids(self.ids, n, "r"))
        object.__setattr__(self, "meta", _meta(self.meta, n))

    @classmethod
    def from_records(cls, records: Sequence[GaussianPrediction]) -> "GaussianBatch":
        if not records:
            raise ValidationError("no records")
        truths = [r.truth for r in records]
        truth = None if any(t is None for t in truths) else truths
        return cls([r.mean for r in records], [r.variance for r in records], truth,
                   [r.measurand for r in records], [r.id for r in records],
                   [r.meta for r in records])

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def require_truth(self) -> np.ndarray:
        if self.truth is None:
            raise ValidationError("ground truths are required")
        return self.truth

    def with_params(self, mean, variance) -> "GaussianBatch":
        return GaussianBatch(mean, variance, self.truth, self.measurand, self.ids, self.meta)

    @classmethod
    def concat(cls, parts: Sequence["GaussianBatch"]) -> "GaussianBatch":
        return cls(np.concatenate([p.mean for p in parts]), np.concatenate([p.variance for p in parts]),
                   _cat([p.truth for p in parts]), np.concatenate([p.measurand for p in parts]),
                   sum((p.ids for p in parts), ()), sum((p.meta for p in parts), ()))

    def records(self) -> Iterator[GaussianPrediction]:
        for i in range(len(self)):
            yield GaussianPrediction(
                float(self.mean[i]), float(self.variance[i]),
                None if self.truth is None else float(self.truth[i]),
                str(self.measurand[i]), self.ids[i], self.meta[i])


@dataclass(frozen=True, eq=False)
class QuantileBatch(_Batch):
    """``N`` quantile predictions sharing one level grid; ``values`` is ``(N, L)``."""

    _per_record = ("values", "truth", "measurand")

    levels: np.ndarray
    values: np.ndarray
    truth: np.ndarray | None = None
    measurand: np.ndarray | None = None
    ids: tuple[str, ...] | None = None
    meta: tuple[Mapping[str, Any], ...] | None = None

    def __post_init__(self):
        lv = np.array(self.levels, dtype=float)
        vals = np.array(self.values, dtype=float)
        if lv.ndim != 1 or vals.ndim != 2 or vals.shape[1] != lv.size:
            raise ValidationError("values must be (N, L) for L levels")
        if np.any(~(lv > 0) | ~(lv < 1)) or np.any(np.diff(lv) <= 0):
            raise ValidationError("levels must be strictly increasing inside (0, 1)")
        if not np.all(np.isfinite(vals)) or np.any(np.diff(vals, axis=1) < 0):
            raise ValidationError("quantile values must be finite and non-decreasing")
        n = vals.shape[0]
        object.__setattr__(self, "levels", _readonly(lv))
        object.__setattr__(self, "values", _readonly(vals))
        object.__setattr__(self, "truth", _opt_array(self.truth, n, "truth"))
        ms = self.measurand
        if ms is None or isinstance(ms, str):
            ms = [ms or ""] * n
        object.__setattr__(self, "measurand", _opt_array(ms, n, "measurand", dtype=object))
        object.__setattr__(self, "ids", _ids(self.ids, n, "q"))
        object.__setattr__(self, "meta", _meta(self.meta, n))

    @classmethod
    def from_records(cls, records: Sequence[QuantileSet]) -> "QuantileBatch":
        if not records:
            raise ValidationError("no records")
        grids = {r.levels for r in records}
        if len(grids) != 1:
            raise SchemaError("quantile records use different level grids")
        truths = [r.truth for r in records]
        truth = None if any(t is None for t in truths) else truths
        return cls(records[0].levels, [r.values for r in records], truth,
                   [r.measurand for r in records], [r.id for r in records],
                   [r.meta for r in records])

    def column(self, level: float) -> np.ndarray:
        hit = np.flatnonzero(np.abs(self.levels - level) <= 1e-9)
        if hit.size == 0:
            raise KeyError(f"quantile level {level} not present in {self.levels.tolist()}")
        return self.values[:, hit[0]]

    def require_truth(self) -> np.ndarray:
        if self.truth is None:
            raise ValidationError("ground truths are required")
        return self.truth

    def records(self) -> Iterator[QuantileSet]:
        lv = tuple(self.levels.tolist())
        for i in range(len(self)):
            yield QuantileSet(lv, tuple(self.values[i].tolist()),
                              None if self.truth is None else float(self.truth[i]),
                              str(self.measurand[i]), self.ids[i], self.meta[i])


@dataclass(frozen=True, eq=False)
class IntervalBatch(_Batch):
    """``N`` central prediction intervals at one nominal coverage level."""

    _per_record = ("lo", "hi", "truth", "measurand")

    lo: np.ndarray
    hi: np.ndarray
    level: float
    truth: np.ndarray | None = None
    measurand: np.ndarray | None = None
    ids: tuple[str, ...] | None = None
    meta: tuple[Mapping[str, Any], ...] | None = None

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        if lo.ndim != 1:
            raise ValidationError("lo must be a vector")
        n = lo.size
        hi = _opt_array(self.hi, n, "hi")
        if not np.all(np.isfinite(lo)) or np.any(lo > hi):
            raise ValidationError("intervals need finite bounds with lo <= hi")
        if not 0.0 < self.level < 1.0:
            raise ValidationError("interval level must lie in (0, 1)")
        object.__setattr__(self, "lo", _readonly(lo))
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "level", float(self.level))
        object.__setattr__(self, "truth", _opt_array(self.truth, n, "truth"))
        ms = self.measurand
        if ms is None or isinstance(ms, str):
            ms = [ms or ""] * n
        object.__setattr__(self, "measurand", _opt_array(ms, n, "measurand", dtype=object))
        object.__setattr__(self, "ids", _ids(self.ids, n, "i"))
        object.__setattr__(self, "meta", _meta(self.meta, n))

    @classmethod
    def from_records(cls, records: Sequence[Interval]) -> "IntervalBatch":
        if not records:
            raise ValidationError("no records")
        levels = {r.level for r in records}
        if len(levels) != 1:
            raise SchemaError("interval records use different coverage levels")
        truths = [r.truth for r in records]
        truth = None if any(t is None for t in truths) else truths
        return cls([r.lo for r in records], [r.hi for r in records], records[0].level, truth,
                   [r.measurand for r in records], [r.id for r in records],
                   [r.meta for r in records])

    def require_truth(self) -> np.ndarray:
        if self.truth is None:
            raise ValidationError("ground truths are required")
        return self.truth

    def records(self) -> Iterator[Interval]:
        for i in range(len(self)):
            yield Interval(float(self.lo[i]), float(self.hi[i]), self.level,
                           None if self.truth is None else float(self.truth[i]),
                           str(self.measurand[i]), self.ids[i], self.meta[i])


_BATCH_TYPES = {"class": ClassBatch, "gaussian": GaussianBatch,
                "quantile": QuantileBatch, "interval": IntervalBatch}


@dataclass(frozen=True)
class LabeledSplit:
    """A homogeneous batch of predictions tagged with its role in the workflow."""

    role: str
    kind: str
    batch: ClassBatch | GaussianBatch | QuantileBatch | IntervalBatch

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.batch, _BATCH_TYPES[self.kind]):
            raise SchemaError(f"batch type does not match kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.batch)

    def records(self):
        return list(self.batch.records())


# ---------------------------------------------------------------------------
# NDJSON


_KNOWN_KEYS = {
    "class": {"id", "probs", "logits", "label"},
    "gaussian": {"id", "measurand", "mean", "variance", "truth"},
    "quantile": {"id", "measurand", "levels", "values", "truth"},
    "interval": {"id", "measurand", "lo", "hi", "level", "truth"},
}


def detect_kind(obj: Mapping[str, Any]) -> str:
    if "members" in obj:
        return "members"
    if "probs" in obj or "logits" in obj:
        return "class"
    if "levels" in obj:
        return "quantile"
    if "lo" in obj and "hi" in obj:
        return "interval"
    if "mean" in obj:
        return "gaussian"
    raise ValidationError("cannot infer record kind from its fields")


def record_from_dict(obj: Mapping[str, Any], kind: str | None = None):
    if not isinstance(obj, Mapping):
        raise ValidationError("record must be a JSON object")
    kind = kind or detect_kind(obj)
    if kind not in _KNOWN_KEYS:
        raise ValidationError(f"unsupported record kind {kind!r}")
    meta = {k: v for k, v in obj.items() if k not in _KNOWN_KEYS[kind]}
    rid = str(obj.get("id", ""))
    try:
        if kind == "class":
            if "logits" in obj:
                z = [_finite(v, "logit") for v in obj["logits"]]
                probs = obj.get("probs")
                rec = ClassPrediction.from_logits(z, obj.get("label"), rid, meta)
                if probs is not None:
                    ClassPrediction(tuple(probs), tuple(z), obj.get("label"), rid, meta)
                return rec
            return ClassPrediction(tuple(obj["probs"]), None, obj.get("label"), rid, meta)
        if kind == "gaussian":
            return GaussianPrediction(obj["mean"], obj["variance"], obj.get("truth"),
                                      str(obj.get("measurand", "")), rid, meta)
        if kind == "quantile":
            return QuantileSet(tuple(obj["levels"]), tuple(obj["values"]), obj.get("truth"),
                               str(obj.get("measurand", "")), rid, meta)
        return Interval(obj["lo"], obj["hi"], obj["level"], obj.get("truth"),
                        str(obj.get("measurand", "")), rid, meta)
    except KeyError as e:
        raise ValidationError(f"missing field {e.args[0]!r}") from None
    except TypeError as e:
        raise ValidationError(str(e)) from None


def iter_ndjson(stream: Iterable[str]) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` pairs, skipping blank lines."""
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordError(lineno, f"malformed JSON ({e.msg})") from None


def ingest(stream: Iterable[str], kind: str | None = None, role: str = "test") -> LabeledSplit:
    """Parse an NDJSON prediction stream into a validated split.

    The kind is inferred from the first record unless given. Every record must
    share that kind (and class count or level grid); order is preserved.
    """
    records = []
    for lineno, obj in iter_ndjson(stream):
        try:
            this = detect_kind(obj) if isinstance(obj, Mapping) else None
            if this is None:
                raise ValidationError("record must be a JSON object")
            if kind is None:
                kind = this
            elif this != kind:
                raise SchemaError(f"record kind {this!r} differs from stream kind {kind!r}")
            if kind == "members":
                raise SchemaError("member-output records must be aggregated first")
            rec = record_from_dict(obj, kind)
            if records and kind == "class" and rec.n_classes != records[0].n_classes:
                raise SchemaError(f"{rec.n_classes} classes, expected {records[0].n_classes}")
            records.append(rec)
        except RecordError:
            raise
        except ValidationError as e:
            raise RecordError(lineno, str(e)) from None
    if not records:
        raise ValidationError("empty prediction stream")
    batch = _BATCH_TYPES[kind].from_records(records)
    return LabeledSplit(role, kind, batch)


def dumps_record(rec) -> str:
    return json.dumps(rec.to_dict(), ensure_ascii=False, allow_nan=False)


def serialize(records: Iterable) -> str:
    """NDJSON text for records or a batch; floats use the shortest round-trip repr."""
    if isinstance(records, LabeledSplit):
        records = records.batch
    if isinstance(records, _Batch):
        records = records.records()
    return "".join(dumps_record(r) + "\n" for r in records)
