import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracle_values import SIGMOID_MINUS_QUARTER
from stratrlhf.env import ComparisonQuery, QuerySet
from stratrlhf.errors import InputError, NumericError
from stratrlhf.preference import (LabelerDataset, bt_preference_prob, enumerate_labelings,
                                  preference_probs, sample_dataset, sigmoid)

QUERY_A1 = ComparisonQuery(np.array([0.5, 0.5]), np.array([0.75, 0.0]))
finite = st.floats(-5, 5, allow_nan=False)


def test_zero_parameter_is_half():
    assert bt_preference_prob(np.zeros(2), QUERY_A1) == 0.5


def test_counterexample_query_probability():
    assert bt_preference_prob([1.0, 0.0], QUERY_A1) == pytest.approx(SIGMOID_MINUS_QUARTER, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
def test_swap_symmetry(theta, f0, f1):
    q = ComparisonQuery(f0, f1)
    assert abs(bt_preference_prob(theta, q) + bt_preference_prob(theta, q.swapped()) - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(0.01, 5))
def test_monotone_in_margin(u, du):
    assert sigmoid(u + du) > sigmoid(u) or sigmoid(u) == 1.0


def test_sigmoid_extremes_finite():
    assert sigmoid(-800.0) >= 0.0 and sigmoid(800.0) == 1.0
    assert 0 < bt_preference_prob([800.0], ComparisonQuery(np.ones(1), np.zeros(1))) < 1


def test_nonfinite_rejected():
    with pytest.raises(NumericError):
        bt_preference_prob([np.nan, 0.0], QUERY_A1)


def test_zero_report_fair_coin(rng):
    q = QuerySet.from_diffs(0, rng.normal(size=(10000, 3)))
    data = sample_dataset(np.zeros(3), q, rng)
    assert abs(data.labels.mean() - 0.5) <= 0.02


def test_saturation(rng):
    diffs = rng.normal(size=(50, 2))
    q = QuerySet.from_diffs(0, diffs)
    p = preference_probs(200.0 * diffs[0], diffs[:1])
    assert p[0] > 1 - 1e-12
    data = sample_dataset(200.0 * diffs[0], QuerySet.from_diffs(0, diffs[:1]), rng)
    assert data.labels[0] == 0
    assert q.n == 50


def test_monte_carlo_frequency(rng):
    n = 100_000
    q = QuerySet(0, np.tile([0.5, 0.5], (n, 1)), np.tile([0.75, 0.0], (n, 1)))
    data = sample_dataset([1.0, 0.0], q, rng)
    assert abs(np.mean(data.labels == 0) - SIGMOID_MINUS_QUARTER) <= 0.005


def test_uniform_reuse_is_deterministic(rng):
    q = QuerySet.from_diffs(0, rng.normal(size=(20, 2)))
    u = rng.random(20)
    a = sample_dataset([0.3, -0.2], q, rng, uniforms=u)
    b = sample_dataset([0.3, -0.2], q, rng, uniforms=u)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_enumeration_probabilities_sum_to_one(rng):
    q = QuerySet.from_diffs(0, rng.normal(size=(6, 2)))
    labels, probs = enumerate_labelings([0.7, -0.1], q)
    assert labels.shape == (64, 6)
    assert abs(probs.sum() - 1) <= 1e-12
    with pytest.raises(InputError):
        enumerate_labelings([0.0, 0.0], QuerySet.from_diffs(0, np.ones((13, 2))))


def test_dataset_serialization_hides_report(rng):
    q = QuerySet.from_diffs(0, rng.normal(size=(4, 2)))
    data = sample_dataset([0.2, 0.1], q, rng)
    assert "report_param" not in data.to_dict()
    full = data.to_dict(diagnostics=True)
    assert full["report_param"] == [0.2, 0.1]
    back = LabelerDataset.from_dict(full)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert "report_param" not in data.to_json()


def test_dataset_label_validation():
    q = QuerySet.from_diffs(0, np.eye(2))
    with pytest.raises(InputError):
        LabelerDataset(0, q, [0, 2])
    with pytest.raises(InputError):
        LabelerDataset(0, q, [0])


def test_signed_diffs(rng):
    q = QuerySet.from_diffs(0, np.eye(2))
    data = LabelerDataset(0, q, [0, 1])
    np.testing.assert_array_equal(data.signed_diffs, [[1.0, 0.0], [0.0, -1.0]])
