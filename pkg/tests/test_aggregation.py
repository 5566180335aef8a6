import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uqbench.aggregation import (DEFAULT_K_SAMPLES, ENSEMBLE_MEMBERS, MCD_PASSES, EmptyEnsembleError,
                                 MemberOutputsClassification, MemberOutputsRegression,
                                 aggregate_classification, aggregate_regression, aleatoric_tolerance,
                                 members_from_dict, member_rng, sample_noisy_softmax)
from uqbench.core import ValidationError, entropy, softmax
from uqbench.synth import gen_members


def test_default_sample_and_member_counts():
    assert (DEFAULT_K_SAMPLES, MCD_PASSES, ENSEMBLE_MEMBERS) == (100, 50, 5)


def test_zero_variance_is_exact_and_consumes_no_draws():
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    for k in (1, 7, 1000):
        np.testing.assert_array_equal(sample_noisy_softmax([2.0, 0.0], [0.0, 0.0], k, rng), softmax([2.0, 0.0]))
    assert rng.bit_generator.state == state


def test_symmetric_noise_averages_to_half():
    p = sample_noisy_softmax([0.0, 0.0], [1.0, 1.0], 100_000, np.random.default_rng(1))
    np.testing.assert_allclose(p, [0.5, 0.5], atol=0.005)


def test_noisy_softmax_matches_high_sample_oracle():
    # independent oracle: 1e6 draws of the logit difference through the logistic function
    d = 1.0 + math.sqrt(8.0) * np.random.default_rng(99).standard_normal(1_000_000)
    g = 1.0 / (1.0 + np.exp(-d))
    oracle, var = g.mean(), g.var()
    k = 200_000
    p = sample_noisy_softmax([1.0, 0.0], [4.0, 4.0], k, np.random.default_rng(5))
    se = math.sqrt(var / k + var / d.size)
    assert abs(p[0] - oracle) <= 3 * se


def test_sample_noisy_softmax_validation():
    with pytest.raises(ValidationError):
        sample_noisy_softmax([0.0, 0.0], [-1.0, 1.0], 10, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        sample_noisy_softmax([0.0, 0.0], [1.0, 1.0], 0, np.random.default_rng(0))


def test_aggregate_classification_hand_example():
    m = MemberOutputsClassification([[math.log(9), 0.0], [0.0, math.log(9)]], np.zeros((2, 2)))
    a = aggregate_classification(m)
    np.testing.assert_allclose(a.total_probs, [0.5, 0.5], atol=1e-15)
    assert a.h_total == pytest.approx(math.log(2), abs=1e-15)
    assert a.h_ale == pytest.approx(-(0.9 * math.log(0.9) + 0.1 * math.log(0.1)), abs=1e-15)
    assert a.h_epi == pytest.approx(a.h_total - a.h_ale)


def test_single_deterministic_member():
    m = MemberOutputsClassification([[1.5, -0.5, 0.2]], np.zeros((1, 3)))
    a = aggregate_classification(m, k_samples=3)
    assert a.h_total == a.h_ale == pytest.approx(float(entropy(softmax([1.5, -0.5, 0.2]))), abs=1e-15)


def test_identical_members_have_no_epistemic_gap():
    mu = np.tile([[1.0, 0.0]], (2, 1))
    m = MemberOutputsClassification(mu, np.ones((2, 2)), id="r1")
    a = aggregate_classification(m, k_samples=100)
    assert abs(a.h_total - a.h_ale) <= aleatoric_tolerance(2, 100)


def test_total_probs_is_mean_of_passes_exactly():
    m = gen_members(1, T=7, v_e=0.5, v_a=0.3, kind="class", n_classes=3, seed=2)[0]
    a = aggregate_classification(m, k_samples=20, seed=4)
    np.testing.assert_array_equal(a.total_probs, a.per_pass_probs.mean(axis=0))


@given(st.integers(1, 6), st.integers(0, 10_000))
def test_aleatoric_within_tolerance(t, seed):
    m = gen_members(1, T=t, v_e=1.0, v_a=2.0, kind="class", seed=seed)[0]
    a = aggregate_classification(m, k_samples=100, seed=seed)
    assert a.h_ale <= a.h_total + aleatoric_tolerance(t, 2)


def test_classification_is_order_and_seed_keyed():
    ms = gen_members(4, T=3, v_e=1.0, v_a=1.0, kind="class", seed=0)
    fwd = [aggregate_classification(m, seed=11).total_probs for m in ms]
    rev = [aggregate_classification(m, seed=11).total_probs for m in reversed(ms)][::-1]
    for a, b in zip(fwd, rev):
        np.testing.assert_array_equal(a, b)
    other = aggregate_classification(ms[0], seed=12).total_probs
    assert not np.array_equal(fwd[0], other)
    assert member_rng(1, "a", 0).random() != member_rng(1, "b", 0).random()


def test_aggregate_regression_examples():
    a = aggregate_regression(MemberOutputsRegression([0.0, 2.0], [1.0, 1.0]))
    assert (a.mean, a.var_epistemic, a.var_aleatoric, a.var_total) == (1.0, 1.0, 1.0, 2.0)
    a = aggregate_regression(MemberOutputsRegression([5.0], [0.25]))
    assert (a.mean, a.var_epistemic, a.var_aleatoric) == (5.0, 0.0, 0.25)
    a = aggregate_regression(MemberOutputsRegression([0.1] * 5, [2.0] * 5))
    assert a.var_epistemic == 0.0


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(0, 1e3)), min_size=1, max_size=10),
       st.floats(-1e3, 1e3), st.randoms())
def test_regression_properties(pairs, c, rnd):
    mu = np.array([p[0] for p in pairs])
    var = np.array([p[1] for p in pairs])
    a = aggregate_regression(MemberOutputsRegression(mu, var))
    assert a.var_total == a.var_epistemic + a.var_aleatoric
    assert a.var_epistemic >= 0 and a.var_aleatoric >= 0
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    b = aggregate_regression(MemberOutputsRegression(mu[perm], var[perm]))
    assert b.mean == pytest.approx(a.mean, abs=1e-9)
    assert b.var_epistemic == pytest.approx(a.var_epistemic, rel=1e-9, abs=1e-9)
    s = aggregate_regression(MemberOutputsRegression(mu + c, var))
    assert s.mean == pytest.approx(a.mean + c, abs=1e-9)
    assert s.var_epistemic == pytest.approx(a.var_epistemic, rel=1e-6, abs=1e-6)
    assert s.var_aleatoric == a.var_aleatoric


def test_empty_and_invalid_members():
    with pytest.raises(EmptyEnsembleError):
        MemberOutputsRegression([], [])
    with pytest.raises(EmptyEnsembleError):
        MemberOutputsClassification(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        MemberOutputsRegression([0.0], [-1.0])
    with pytest.raises(EmptyEnsembleError):
        members_from_dict({"id": "x", "members": []})


def test_members_from_dict_both_schemas():
    c = members_from_dict({"id": "a", "label": 1, "members": [
        {"logit_means": [0.0, 1.0], "logit_vars": [0.0, 0.0]}]})
    assert isinstance(c, MemberOutputsClassification) and c.label == 1
    r = members_from_dict({"id": "b", "measurand": "SBP", "truth": 3.0, "members": [[1.0, 0.5], [2.0, 0.5]]})
    assert isinstance(r, MemberOutputsRegression) and r.truth == 3.0
    assert members_from_dict(r.to_dict()).means.tolist() == [1.0, 2.0]
    with pytest.raises(ValidationError):
        members_from_dict({"members": [[1.0, 2.0, 3.0]]})
