"""Synthetic predictions with known calibration, used as ground truth for metrics.

* :func:`gen_classifier` reports ``softmax(z)`` but draws labels from
  ``softmax(z / T_true)``; ``T_true = 1`` is calibrated by construction.
* :func:`gen_regression` reports ``N(mu, sigma^2)`` but draws truths with sd
  ``s_true * sigma``; ``s_true = 1`` is calibrated by construction.
* :func:`gen_members` produces member outputs with a known split between
  between-member spread and within-member variance.

Every generator is a pure function of its arguments; independent seeds give
independent generator streams.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from .aggregation import MemberOutputsClassification, MemberOutputsRegression
from .core import ClassBatch, GaussianBatch, ValidationError, softmax

DEFAULT_LOGIT_SCALE = 20.0
DEFAULT_SIGMA_RANGE = (0.5, 2.0)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


def _tags(n: int, tag: Mapping[str, Any] | None):
    return None if tag is None else tuple(dict(tag) for _ in range(n))


def _ids(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One class index per row of ``probs`` by inverse-CDF sampling."""
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((cdf <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


def gen_classifier(n: int, T_true: float = 1.0, n_classes: int = 2,
                   scale: float = DEFAULT_LOGIT_SCALE, seed: int = 0,
                   tag: Mapping[str, Any] | None = None, id_prefix: str = "c") -> ClassBatch:
    """Labelled classifier outputs whose miscalibration is exactly temperature ``T_true``.

    Latent logits are ``scale * a`` with ``a`` standard normal per class, so
    for two classes the logit margin is a scaled difference of normals. The
    default scale concentrates most predictions near certainty while still
    populating every confidence bin.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not T_true > 0:
        raise ValidationError("T_true must be positive")
    if n_classes < 2:
        raise ValidationError("need at least two classes")
    z = scale * _rng(seed, 0).standard_normal((n, n_classes))
    labels = sample_categorical(softmax(z / T_true, axis=1), _rng(seed, 1))
    return ClassBatch.from_logits(z, labels, _ids(id_prefix, n), _tags(n, tag))


def gen_regression(n: int, s_true: float = 1.0, sigma_range=DEFAULT_SIGMA_RANGE, seed: int = 0,
                   measurand: str = "y", mean_scale: float = 10.0,
                   tag: Mapping[str, Any] | None = None, id_prefix: str = "r") -> GaussianBatch:
    """Gaussian predictions with truths ``mu + s_true * sigma * eps``.

    ``sigma`` is uniform on ``sigma_range``; a degenerate range gives the
    homoscedastic case.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    if not s_true > 0:
        raise ValidationError("s_true must be positive")
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ValidationError("sigma range must satisfy 0 < lo <= hi")
    mu = mean_scale * _rng(seed, 0).standard_normal(n)
    sigma = _rng(seed, 1).uniform(lo, hi, n) if hi > lo else np.full(n, float(lo))
    truth = mu + s_true * sigma * _rng(seed, 2).standard_normal(n)
    return GaussianBatch(mu, sigma ** 2, truth, measurand, _ids(id_prefix, n), _tags(n, tag))


def gen_members(n: int, T: int = 5, v_e: float = 1.0, v_a: float = 1.0, seed: int = 0,
                kind: str = "reg", n_classes: int = 2, measurand: str = "y",
                id_prefix: str = "m") -> list:
    """Member outputs with between-member variance ``v_e`` and within-member variance ``v_a``.

    ``kind="reg"`` gives :class:`MemberOutputsRegression` (member means
    ``c + sqrt(v_e) * eps``, variances ``v_a``, truth drawn from
    ``N(c, v_e + v_a)``). ``kind="class"`` gives
    :class:`MemberOutputsClassification` with logit means perturbed by
    ``sqrt(v_e)`` and logit variances ``v_a``; the label is drawn from the
    softmax of the shared centre. ``v_e = 0`` makes all members identical.
    """
    if T < 1:
        raise ValidationError("need at least one member")
    if n < 1:
        raise ValidationError("n must be at least 1")
    if v_e < 0 or v_a < 0:
        raise ValidationError("variances must be non-negative")
    ids = _ids(id_prefix, n)
    if kind == "reg":
        centre = _rng(seed, 0).standard_normal(n)
        means = centre[:, None] + np.sqrt(v_e) * _rng(seed, 1).standard_normal((n, T))
        truth = centre + np.sqrt(v_e + v_a) * _rng(seed, 2).standard_normal(n)
        var = np.full(T, float(v_a))
        return [MemberOutputsRegression(means[i], var, float(truth[i]), measurand, ids[i])
                for i in range(n)]
    if kind == "class":
        centre = 2.0 * _rng(seed, 0).standard_normal((n, n_classes))
        noise = np.sqrt(v_e) * _rng(seed, 1).standard_normal((n, T, n_classes))
        labels = sample_categorical(softmax(centre, axis=1), _rng(seed, 2))
        var = np.full((T, n_classes), float(v_a))
        return [MemberOutputsClassification(centre[i] + noise[i], var, int(labels[i]), ids[i])
                for i in range(n)]
    raise ValidationError("kind must be 'reg' or 'class'")
