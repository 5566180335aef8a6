"""Collapse per-pass / per-member raw outputs into one predictive distribution.

Classification members give a Gaussian over logits per class; each member is
turned into a probability vector by averaging the softmax of noisy logit draws,
and uncertainty is split into the entropy of the mean (total) and the mean of
the per-member entropies (aleatoric). Regression members give (mean, variance)
pairs combined with the law of total variance.

Randomness is counter-based: the draws for member ``t`` of record ``id`` come
from a generator seeded by ``(seed, id, t)``, so results do not depend on the
order or thread on which records are processed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .core import ValidationError, entropy, softmax

DEFAULT_K_SAMPLES = 100
MCD_PASSES = 50
ENSEMBLE_MEMBERS = 5


class EmptyEnsembleError(ValidationError):
    pass


def _id_key(record_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(record_id.encode("utf-8"), digest_size=8).digest(), "little")


def member_rng(seed: int, record_id: str, member: int) -> np.random.Generator:
    """Generator dedicated to one (record, member) pair."""
    return np.random.default_rng([int(seed), _id_key(record_id), int(member)])


@dataclass(frozen=True, eq=False)
class MemberOutputsClassification:
    """``T x K`` logit means and variances for one input."""

    logit_means: np.ndarray
    logit_vars: np.ndarray
    label: int | None = None
    id: str = ""
    meta: Mapping[str, Any] | None = None

    def __post_init__(self):
        mu = np.array(self.logit_means, dtype=float)
        var = np.array(self.logit_vars, dtype=float)
        if mu.ndim != 2 or mu.shape != var.shape:
            raise ValidationError("logit means and variances must both be T x K")
        if mu.shape[0] == 0:
            raise EmptyEnsembleError("no members")
        if mu.shape[1] < 2:
            raise ValidationError("need at least two classes")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValidationError("member outputs must be finite")
        if np.any(var < 0):
            raise ValidationError("logit variances must be non-negative")
        object.__setattr__(self, "logit_means", mu)
        object.__setattr__(self, "logit_vars", var)
        object.__setattr__(self, "meta", dict(self.meta or {}))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "members": [
            {"logit_means": m.tolist(), "logit_vars": v.tolist()}
            for m, v in zip(self.logit_means, self.logit_vars)]}
        if self.label is not None:
            d["label"] = self.label
        d.update(self.meta)
        return d


@dataclass(frozen=True, eq=False)
class MemberOutputsRegression:
    """``T`` (mean, variance) pairs for one input and measurand."""

    means: np.ndarray
    variances: np.ndarray
    truth: float | None = None
    measurand: str = ""
    id: str = ""
    meta: Mapping[str, Any] | None = None

    def __post_init__(self):
        mu = np.array(self.means, dtype=float)
        var = np.array(self.variances, dtype=float)
        if mu.ndim != 1 or mu.shape != var.shape:
            raise ValidationError("member means and variances must be equal-length vectors")
        if mu.size == 0:
            raise EmptyEnsembleError("no members")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValidationError("member outputs must be finite")
        if np.any(var < 0):
            raise ValidationError("member variances must be non-negative")
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "meta", dict(self.meta or {}))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "measurand": self.measurand,
                             "members": np.column_stack([self.means, self.variances]).tolist()}
        if self.truth is not None:
            d["truth"] = self.truth
        d.update(self.meta)
        return d


@dataclass(frozen=True, eq=False)
class AggregatedClassification:
    total_probs: np.ndarray
    per_pass_probs: np.ndarray
    h_total: float
    h_ale: float
    label: int | None = None
    id: str = ""
    meta: Mapping[str, Any] | None = None

    @property
    def h_epi(self) -> float:
        return self.h_total - self.h_ale

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "probs": self.total_probs.tolist(),
                             "H_total": self.h_total, "H_ale": self.h_ale}
        if self.label is not None:
            d["label"] = self.label
        d.update(self.meta or {})
        return d


@dataclass(frozen=True)
class AggregatedRegression:
    mean: float
    var_epistemic: float
    var_aleatoric: float
    truth: float | None = None
    measurand: str = ""
    id: str = ""

    @property
    def var_total(self) -> float:
        return self.var_epistemic + self.var_aleatoric

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "measurand": self.measurand, "mean": self.mean,
                             "variance": self.var_total, "var_epistemic": self.var_epistemic,
                             "var_aleatoric": self.var_aleatoric}
        if self.truth is not None:
            d["truth"] = self.truth
        return d


def sample_noisy_softmax(means, variances, k_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Mean of ``softmax(means + sqrt(variances) * eps)`` over ``k_samples`` draws.

    With all variances zero the result is ``softmax(means)`` exactly and the
    generator is not touched.
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    if mu.shape != var.shape or mu.ndim != 1:
        raise ValidationError("means and variances must be equal-length vectors")
    if np.any(var < 0):
        raise ValidationError("variances must be non-negative")
    if k_samples < 1:
        raise ValidationError("k_samples must be at least 1")
    if not np.any(var > 0):
        return softmax(mu)
    eps = rng.standard_normal((k_samples, mu.size))
    return softmax(mu + np.sqrt(var) * eps, axis=1).mean(axis=0)


def aggregate_classification(m: MemberOutputsClassification, k_samples: int = DEFAULT_K_SAMPLES,
                             seed: int = 0) -> AggregatedClassification:
    per_pass = np.stack([
        sample_noisy_softmax(m.logit_means[t], m.logit_vars[t], k_samples, member_rng(seed, m.id, t))
        for t in range(m.logit_means.shape[0])
    ])
    total = per_pass.mean(axis=0)
    return AggregatedClassification(
        total_probs=total,
        per_pass_probs=per_pass,
        h_total=float(entropy(total)),
        h_ale=float(np.mean(entropy(per_pass, axis=1))),
        label=m.label,
        id=m.id,
        meta=m.meta,
    )


def aleatoric_tolerance(t: int, k: int) -> float:
    """Slack allowed for ``h_ale > h_total`` caused by finite sampling."""
    return 3.0 / np.sqrt(t * k)


def total_variance(means, variances, axis: int = -1):
    """Law of total variance over the member axis.

    Returns ``(mean, var_epistemic, var_aleatoric)``; the epistemic part is the
    population (divide by T) variance of the member means.
    """
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    mean = mu.mean(axis=axis)
    # shift by the first member so identical members give exactly zero spread
    d = mu - np.take(mu, [0], axis=axis)
    epi = np.mean((d - np.mean(d, axis=axis, keepdims=True)) ** 2, axis=axis)
    ale = var.mean(axis=axis)
    return mean, epi, ale


def aggregate_regression(m: MemberOutputsRegression) -> AggregatedRegression:
    mean, epi, ale = total_variance(m.means, m.variances)
    return AggregatedRegression(float(mean), float(epi), float(ale), m.truth, m.measurand, m.id)


def members_from_dict(obj: Mapping[str, Any]):
    """Build member outputs from the member NDJSON schema (either kind)."""
    members = obj.get("members")
    if not isinstance(members, list) or not members:
        raise EmptyEnsembleError("'members' must be a non-empty list")
    known = {"id", "members", "label", "truth", "measurand"}
    meta = {k: v for k, v in obj.items() if k not in known}
    rid = str(obj.get("id", ""))
    try:
        if isinstance(members[0], Mapping):
            mu = [mem["logit_means"] for mem in members]
            var = [mem["logit_vars"] for mem in members]
            label = obj.get("label")
            if label is not None and (isinstance(label, bool) or not isinstance(label, int)
                                      or not 0 <= label < len(mu[0])):
                raise ValidationError("label must index a valid class")
            return MemberOutputsClassification(mu, var, label, rid, meta)
        pairs = np.asarray(members, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValidationError("regression members must be [mean, variance] pairs")
        truth = obj.get("truth")
        return MemberOutputsRegression(pairs[:, 0], pairs[:, 1],
                                       None if truth is None else float(truth),
                                       str(obj.get("measurand", "")), rid, meta)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"bad member record: {e}") from None
