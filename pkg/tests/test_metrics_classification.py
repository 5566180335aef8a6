import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import optimize

import oracles
from uqbench.core import ValidationError, normalized_entropy
from uqbench.metrics_classification import (ace, auc, confusion_metrics, ece, nll, smece, sweep,
                                            threshold_metrics, uce, vce)
from uqbench.synth import gen_classifier


def binary(p1):
    p1 = np.asarray(p1, dtype=float)
    return np.column_stack([1.0 - p1, p1])


prob_vectors = st.integers(2, 60).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=st.floats(0, 1)), arrays(np.int64, n, elements=st.integers(0, 1))))


# ---------------------------------------------------------------------------
# ECE


def test_ece_examples():
    assert ece(binary([1.0, 0.0]), [1, 0])[0] == 0.0
    assert ece(binary([0.8, 0.8]), [1, 0])[0] == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ValidationError):
        ece(np.zeros((0, 2)), [])


def test_ece_bin_edges_go_up():
    # confidence 0.6 sits exactly on the edge between bins 2 and 3 of 5
    _, bins = ece(binary([0.6]), [1], bins=5)
    assert [b.count for b in bins] == [0, 0, 0, 1, 0]
    _, bins = ece(binary([1.0]), [1], bins=5)
    assert bins[-1].count == 1


@given(prob_vectors, st.integers(1, 20))
def test_ece_matches_loop_oracle(data, m):
    p1, y = data
    p = binary(p1)
    assert ece(p, y, m)[0] == pytest.approx(oracles.ece_loop(p, y, m), abs=1e-12)


@given(prob_vectors)
def test_ece_single_bin_is_global_gap(data):
    p1, y = data
    p = binary(p1)
    acc = np.mean(p.argmax(axis=1) == y)
    # equal up to summation order (sequential bin sums vs pairwise mean)
    assert ece(p, y, 1)[0] == pytest.approx(abs(acc - p.max(axis=1).mean()), abs=1e-15)


@given(prob_vectors, st.integers(1, 20))
def test_bin_stats_recombine_to_global_means(data, m):
    p1, y = data
    p = binary(p1)
    _, bins = ece(p, y, m)
    n = len(y)
    assert sum(b.count for b in bins) == n
    conf = sum(b.count * b.conf for b in bins if b.count) / n
    acc = sum(b.count * b.acc for b in bins if b.count) / n
    assert conf == pytest.approx(p.max(axis=1).mean(), abs=1e-12)
    assert acc == pytest.approx(np.mean(p.argmax(axis=1) == y), abs=1e-12)
    ent = sum(b.count * b.uncert for b in bins if b.count) / n
    assert ent == pytest.approx(np.mean(normalized_entropy(p)), abs=1e-12)


def test_empty_bins_serialize_as_null():
    _, bins = ece(binary([0.9]), [1], bins=3)
    assert bins[0].to_dict()["acc"] is None and bins[2].to_dict()["count"] == 1


def test_ece_multiclass_calibrated():
    b = gen_classifier(20_000, n_classes=3, seed=4)
    assert ece(b.probs, b.labels)[0] <= 0.02


# ---------------------------------------------------------------------------
# ACE


def test_ace_examples():
    assert ace(np.eye(2)[[0, 1, 1, 0]], [0, 1, 1, 0], 2) == 0.0
    p1 = np.array([0.2, 0.7, 0.9, 0.4])
    y = np.array([0, 1, 0, 1])
    # one range per class: per-class |frequency - mean probability|, averaged
    hand = np.mean([abs(np.mean(y == 0) - np.mean(1 - p1)), abs(np.mean(y == 1) - np.mean(p1))])
    assert ace(binary(p1), y, 1) == pytest.approx(hand, abs=1e-15)


def test_ace_reduces_ranges_with_warning():
    with pytest.warns(UserWarning):
        value = ace(binary([0.2, 0.8]), [0, 1], 15)
    assert value == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# UCE and VCE


def _binary_with_entropy(h):
    return optimize.brentq(lambda a: float(normalized_entropy([a, 1 - a])) - h, 0.5, 1 - 1e-15, xtol=1e-15)


def test_uce_examples():
    a = _binary_with_entropy(0.6)
    p = np.tile([a, 1 - a], (10, 1))
    y = np.array([0] * 7 + [1] * 3)
    assert uce(p, y)[0] == pytest.approx(0.0, abs=1e-12)
    assert uce(np.eye(3)[[0, 1, 2]], [0, 1, 2])[0] == 0.0
    assert uce(np.full((4, 2), 0.5), [1, 1, 1, 1])[0] == 0.5


def test_uce_multiclass_is_not_halved():
    p = np.full((3, 3), 1 / 3)
    # argmax is class 0: error rate 2/3 against uncertainty 1
    assert uce(p, [0, 1, 2])[0] == pytest.approx(1 / 3, abs=1e-12)


def test_vce_examples():
    assert vce(np.full((4, 2), 0.5), [0, 1, 0, 1])[0] == 0.0
    p = np.tile([0.9, 0.1], (10, 1))
    assert vce(p, [0] * 9 + [1])[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        vce(np.full((2, 3), 1 / 3), [0, 1])


@given(prob_vectors, st.integers(1, 20))
def test_binned_metrics_in_unit_interval(data, m):
    p1, y = data
    p = binary(p1)
    for fn in (ece, uce, vce):
        assert 0.0 <= fn(p, y, m)[0] <= 1.0
    assert 0.0 <= ace(p, y, min(m, len(y))) <= 1.0


# ---------------------------------------------------------------------------
# smooth ECE


def test_smece_examples():
    assert smece(np.full((1000, 2), 0.5), [0, 1] * 500) <= 0.01
    assert smece(binary(np.ones(1000)), [0, 1] * 500) == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValidationError):
        smece(np.full((2, 3), 1 / 3), [0, 1])


def test_smece_matches_direct_kernel_sum():
    rng = np.random.default_rng(6)
    f = rng.beta(2, 2, 80)
    y = (rng.random(80) < np.clip(f + 0.15, 0, 1)).astype(int)
    assert smece(binary(f), y) == pytest.approx(oracles.smece_fixed_point(f, y), abs=1e-5)


@given(prob_vectors)
def test_smece_in_unit_interval(data):
    p1, y = data
    assert 0.0 <= smece(binary(p1), y) <= 1.0


# ---------------------------------------------------------------------------
# NLL and AUC


def test_nll_examples():
    assert nll(np.eye(2)[[0, 1]], [0, 1]) == pytest.approx(0.0, abs=1e-11)
    assert nll(np.full((3, 2), 0.5), [0, 1, 1]) == pytest.approx(math.log(2), abs=1e-15)
    assert nll(np.full((3, 2), 0.5), [0, 0, 0]) == nll(np.full((3, 2), 0.5), [1, 1, 1])
    # a confidently wrong record is capped by the probability floor
    assert nll(np.eye(2)[[0]], [1]) == pytest.approx(-math.log(1e-12))


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.3] * 4, [0, 1, 0, 1]) == 0.5
    assert auc([0.9, 0.4, 0.5], [1, 1, 0]) == 0.5
    with pytest.raises(ValidationError):
        auc([0.1, 0.2], [1, 1])


@given(st.integers(2, 40).flatmap(lambda n: st.tuples(
    arrays(np.int64, n, elements=st.integers(0, 20)), arrays(np.int64, n, elements=st.integers(0, 1)))))
def test_auc_matches_pair_count_and_is_rank_invariant(data):
    s, y = data
    if y.min() == y.max():
        return
    s = s / 20.0
    value = auc(s, y)
    assert value == pytest.approx(oracles.auc_pairs(s, y), abs=1e-12)
    assert auc(np.exp(3 * s) - 7.0, y) == value
    assert auc(binary(s), y) == value


# ---------------------------------------------------------------------------
# threshold metrics


def test_confusion_metrics_hand_example():
    m = confusion_metrics(3, 1, 1, 5)
    assert m.f1 == 0.75
    assert m.mcc == pytest.approx(14 / 24, abs=1e-15)
    assert round(m.mcc, 3) == 0.583


def test_threshold_metric_examples():
    m = threshold_metrics([0.1, 0.3, 0.7, 0.9], [0, 0, 1, 1])
    assert (m.f1, m.mcc, m.balanced_accuracy) == (1.0, 1.0, 1.0)
    m = threshold_metrics([0.1, 0.3, 0.7, 0.9], [0, 0, 1, 1], threshold=0.0)
    assert (m.sensitivity, m.specificity, m.balanced_accuracy) == (1.0, 0.0, 0.5)
    assert m.mcc == 0.0 and not m.mcc_defined


def test_sweep_examples():
    s, y = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
    m = sweep(s, y, "sensitivity", 0.8)
    assert (m.threshold, m.sensitivity, m.specificity) == (0.35, 1.0, 0.5)
    m = sweep(s, y, "specificity", 0.8)
    assert (m.threshold, m.specificity, m.sensitivity) == (0.8, 1.0, 0.5)
    with pytest.raises(ValidationError):
        sweep(s, y, "sensitivity", 1.0)
    with pytest.raises(ValidationError):
        sweep(s, y, "accuracy", 0.5)


@given(st.integers(4, 30).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=st.floats(0, 1)), arrays(np.int64, n, elements=st.integers(0, 1)))))
def test_sweep_matches_exhaustive_scan(data):
    s, y = data
    cands = [threshold_metrics(s, y, t) for t in np.unique(s)]
    ok = [m for m in cands if m.sensitivity > 0.8 and not math.isnan(m.specificity)]
    if not ok:
        with pytest.raises(ValidationError):
            sweep(s, y)
        return
    assert sweep(s, y).specificity == max(m.specificity for m in ok)
