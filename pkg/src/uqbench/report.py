"""Metric registry and JSON report assembly used by the command-line tool.

A report is a plain ``dict`` that serialises to JSON: global metric values,
per-bin statistics for reliability diagrams, optional per-group sections and
optional bootstrap intervals. Values that are undefined become ``null``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import metrics_classification as mc
from . import metrics_regression as mr
from .conversion import LEVEL_NAMES, quantile_batch_to_gaussian
from .core import ClassBatch, GaussianBatch, LabeledSplit, QuantileBatch, ValidationError
from .stratify import Stratifier, bootstrap_ci, safe_metric, stratified_evaluate

SCHEMA = "uqbench/1"


class UsageError(ValidationError):
    """Options that are inconsistent with each other or with the input."""


@dataclass(frozen=True)
class Options:
    bins: int = 15
    level: str = "1sigma"
    baseline_mae: float | None = None
    threshold: float = 0.5

    @property
    def coverage(self) -> float:
        return LEVEL_NAMES[self.level][0]

    @property
    def pair(self) -> tuple[float, float]:
        return LEVEL_NAMES[self.level][1]


def _bin_metric(fn):
    return lambda b, o: fn(b.probs, b.require_labels(), o.bins)[0]


def _thr(field: str):
    return lambda b, o: getattr(mc.threshold_metrics(b.probs, b.require_labels(), o.threshold), field)


def _mase(b, o):
    if o.baseline_mae is None:
        raise UsageError("MASE needs --baseline-mae")
    return mr.mase(mr.mae(b.mean, b.require_truth()), o.baseline_mae)


CLASS_METRICS: dict[str, Callable] = {
    "ece": _bin_metric(mc.ece),
    "ace": lambda b, o: mc.ace(b.probs, b.require_labels(), o.bins),
    "smece": lambda b, o: mc.smece(b.probs, b.require_labels()),
    "uce": _bin_metric(mc.uce),
    "vce": _bin_metric(mc.vce),
    "nll": lambda b, o: mc.nll(b.probs, b.require_labels()),
    "auc": lambda b, o: mc.auc(b.probs, b.require_labels()),
    "f1": _thr("f1"),
    "sensitivity": _thr("sensitivity"),
    "specificity": _thr("specificity"),
    "mcc": _thr("mcc"),
    "balanced-accuracy": _thr("balanced_accuracy"),
}
BINARY_ONLY = {"smece", "vce", "auc", "f1", "sensitivity", "specificity", "mcc", "balanced-accuracy"}

GAUSSIAN_METRICS: dict[str, Callable] = {
    "ence": lambda b, o: mr.ence(b.mean, b.variance, b.require_truth(), o.bins)[0],
    "crps": lambda b, o: mr.crps_mean(b.mean, b.variance, b.require_truth()),
    "picp": lambda b, o: mr.picp(b.mean, b.variance, b.require_truth(), o.coverage),
    "cce": lambda b, o: mr.cce(b.mean, b.variance, b.require_truth()),
    "mae": lambda b, o: mr.mae(b.mean, b.require_truth()),
    "mase": _mase,
    "gnll": lambda b, o: mr.gnll_loss(b.mean, b.variance, b.require_truth()),
    "sharpness": lambda b, o: float(np.mean(b.std)),
}


def _via_gaussian(fn):
    return lambda b, o: fn(quantile_batch_to_gaussian(b, o.pair), o)


QUANTILE_METRICS: dict[str, Callable] = {
    "pinball": lambda b, o: mr.pinball_loss(b.values, b.require_truth(), b.levels),
    **{k: _via_gaussian(v) for k, v in GAUSSIAN_METRICS.items()},
}

INTERVAL_METRICS: dict[str, Callable] = {
    "picp": lambda b, o: mr.picp_intervals(b.lo, b.hi, b.require_truth(), b.level),
    "coverage": lambda b, o: mr.coverage(b.lo, b.hi, b.require_truth()),
    "width": lambda b, o: float(np.mean(b.hi - b.lo)),
}

REGISTRY = {"class": CLASS_METRICS, "gaussian": GAUSSIAN_METRICS,
            "quantile": QUANTILE_METRICS, "interval": INTERVAL_METRICS}


def default_metrics(split: LabeledSplit, opts: Options) -> list[str]:
    if split.kind == "class":
        names = ["ece", "ace", "smece", "uce", "vce", "nll", "auc"]
        if split.batch.n_classes != 2:
            names = [n for n in names if n not in BINARY_ONLY]
        return names
    if split.kind == "interval":
        return list(INTERVAL_METRICS)
    names = ["ence", "crps", "picp", "cce", "mae"]
    if opts.baseline_mae is not None:
        names.append("mase")
    return (["pinball"] if split.kind == "quantile" else []) + names


def resolve_metrics(split: LabeledSplit, names: list[str] | None, opts: Options) -> dict[str, Callable]:
    """Bound metric callables for ``names``; unknown or inapplicable names raise :class:`UsageError`."""
    table = REGISTRY[split.kind]
    names = names or default_metrics(split, opts)
    unknown = [n for n in names if n not in table]
    if unknown:
        raise UsageError(f"unknown metric(s) {', '.join(unknown)} for {split.kind} predictions; "
                         f"valid names: {', '.join(table)}")
    if split.kind == "class" and split.batch.n_classes != 2:
        bad = [n for n in names if n in BINARY_ONLY]
        if bad:
            raise UsageError(f"{', '.join(bad)} need binary predictions")
    if "mase" in names and opts.baseline_mae is None:
        raise UsageError("MASE needs --baseline-mae")
    return {n: (lambda b, fn=table[n]: fn(b, opts)) for n in names}


def clean(x: Any) -> Any:
    """JSON-safe copy: non-finite floats become ``None`` and numpy scalars become Python ones."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return clean(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def bin_tables(split: LabeledSplit, opts: Options) -> dict[str, list[dict]]:
    b = split.batch
    if isinstance(b, ClassBatch):
        if b.labels is None:
            return {}
        out = {"reliability": [s.to_dict() for s in mc.ece(b.probs, b.labels, opts.bins)[1]],
               "uce": [s.to_dict() for s in mc.uce(b.probs, b.labels, opts.bins)[1]]}
        if b.n_classes == 2:
            out["vce"] = [s.to_dict() for s in mc.vce(b.probs, b.labels, opts.bins)[1]]
        return out
    if isinstance(b, QuantileBatch):
        b = quantile_batch_to_gaussian(b, opts.pair)
    if isinstance(b, GaussianBatch) and b.truth is not None and np.all(b.variance > 0):
        return {"ence": [s.to_dict() for s in mr.ence(b.mean, b.variance, b.truth, opts.bins)[1]]}
    return {}


def evaluate_report(split: LabeledSplit, names: list[str] | None = None, opts: Options = Options(),
                    stratify: str | None = None, bootstrap: int = 0, seed: int = 0,
                    workers: int = 1) -> dict:
    """Full evaluation report for one prediction set."""
    metrics = resolve_metrics(split, names, opts)
    strat = stratified_evaluate(split.batch, Stratifier(stratify), metrics) if stratify else None
    overall = strat.overall if strat else {n: safe_metric(fn, split.batch) for n, fn in metrics.items()}
    report: dict[str, Any] = {
        "schema": SCHEMA, "kind": split.kind, "n": len(split), "bins": opts.bins,
        "level": opts.level, "metrics": overall, "bin_stats": bin_tables(split, opts),
    }
    notes = [f"{name} undefined on the full set" for name, v in overall.items() if v is None]
    if strat:
        report["stratify"] = stratify
        report["groups"] = {g: {"n": strat.group_sizes[g], "metrics": strat.groups[g]}
                            for g in strat.groups}
        report["group_mean"] = strat.group_mean
        notes += strat.notes
    if bootstrap:
        intervals = []
        for name, fn in metrics.items():
            if overall[name] is None:
                continue
            try:
                intervals.append(bootstrap_ci(split.batch, fn, B=bootstrap, seed=seed, name=name,
                                              workers=workers).to_dict())
            except ValidationError as e:
                notes.append(f"bootstrap of {name} skipped: {e}")
        report["bootstrap"] = intervals
    report["notes"] = notes
    return clean(report)


DIAGRAM_COLUMNS = {
    "reliability": ("index", "conf", "acc", "count"),
    "uce": ("index", "uncert", "err", "count"),
    "vce": ("index", "uncert", "obs_entropy", "count"),
    "ence": ("index", "rmv", "rmse", "count"),
}


def diagram_data(split: LabeledSplit, kind: str, opts: Options) -> dict:
    """Plot data: ``{"columns": [...], "rows": [...]}`` or a bivariate count matrix."""
    b = split.batch
    if isinstance(b, QuantileBatch):
        b = quantile_batch_to_gaussian(b, opts.pair)
    if kind in ("reliability", "uce", "vce"):
        if not isinstance(b, ClassBatch):
            raise UsageError(f"a {kind} diagram needs classification predictions")
        fn = {"reliability": mc.ece, "uce": mc.uce, "vce": mc.vce}[kind]
        stats_ = fn(b.probs, b.require_labels(), opts.bins)[1]
    elif kind in ("ence", "bivariate"):
        if not isinstance(b, GaussianBatch):
            raise UsageError(f"a {kind} diagram needs Gaussian or quantile predictions")
        if kind == "bivariate":
            h = mr.bivariate_histogram(b.mean, b.variance, b.require_truth(), opts.bins, opts.bins)
            return clean({"schema": SCHEMA, "type": kind, **h.to_dict()})
        stats_ = mr.ence(b.mean, b.variance, b.require_truth(), opts.bins)[1]
    else:
        raise UsageError(f"unknown diagram type {kind!r}")
    cols = DIAGRAM_COLUMNS[kind]
    rows = [[s.to_dict()[c] for c in cols] for s in stats_]
    return clean({"schema": SCHEMA, "type": kind, "columns": list(cols), "rows": rows})


def diagram_csv(data: dict) -> str:
    def fmt(v):
        return "" if v is None else repr(v) if isinstance(v, float) else str(v)
    if data["type"] == "bivariate":
        se = data["sigma_edges"]
        head = ["err_lo", "err_hi"] + [f"sd_{fmt(a)}_{fmt(b)}" for a, b in zip(se[:-1], se[1:])]
        ee = data["err_edges"]
        lines = [",".join(head)]
        for lo, hi, row in zip(ee[:-1], ee[1:], data["counts"]):
            lines.append(",".join([fmt(lo), fmt(hi)] + [str(c) for c in row]))
    else:
        lines = [",".join(data["columns"])] + [",".join(fmt(v) for v in r) for r in data["rows"]]
    return "\n".join(lines) + "\n"

