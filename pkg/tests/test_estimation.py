import math

import mpmath as mp
import numpy as np
import pytest

from oracle_values import GAMMA_UNIT, INV_GAMMA_UNIT, SQRT_1_25
from stratrlhf.env import QuerySet
from stratrlhf.errors import ConfigError, InputError, NumericError
from stratrlhf.estimation import (ConfidenceSet, MleFit, confidence_radius, confidence_set,
                                  coverage_coefficient, default_ridge, ellipsoid_box, fit_mle,
                                  fit_theta, logistic_gamma)
from stratrlhf.preference import LabelerDataset, sample_dataset


def fixed_fit(metric, theta_hat=None, n=10):
    metric = np.asarray(metric, dtype=float)
    d = metric.shape[0]
    theta_hat = np.zeros(d) if theta_hat is None else np.asarray(theta_hat, dtype=float)
    return MleFit(theta_hat, metric, 0.0, n, True, 0.0)


def test_balanced_antipodal_labels_give_zero(rng):
    diffs = rng.normal(size=(10, 3))
    q = QuerySet.from_diffs(0, np.vstack([diffs, -diffs]))
    data = LabelerDataset(0, q, np.zeros(20, dtype=int))
    fit = fit_mle(data, B=1.0)
    assert fit.converged
    np.testing.assert_allclose(fit.theta_hat, 0.0, atol=1e-9)


def test_one_dimensional_closed_form(rng):
    n = 1000
    q = QuerySet.from_diffs(0, np.ones((n, 1)))
    data = sample_dataset([0.5], q, rng)
    n0 = int(np.sum(data.labels == 0))
    reg = default_ridge(1, n)
    # stationarity of sum log-likelihood minus reg/2 theta^2
    root = mp.findroot(lambda t: n0 - n / (1 + mp.e ** (-t)) - reg * t, 0.5)
    fit = fit_mle(data, B=2.0)
    assert fit.theta_hat[0] == pytest.approx(float(root), abs=1e-7)
    freq = n0 / n
    assert fit.theta_hat[0] == pytest.approx(math.log(freq / (1 - freq)), abs=1e-2)


def test_one_dimensional_clipped_to_ball():
    q = QuerySet.from_diffs(0, np.ones((50, 1)))
    data = LabelerDataset(0, q, np.zeros(50, dtype=int))
    fit = fit_mle(data, B=0.7)
    assert fit.theta_hat[0] == pytest.approx(0.7, abs=1e-12)


def _grid_mle(y, reg, B, levels=4):
    """Nested grid search for the ridge BT MLE on the 2-D B-ball."""
    center, half = np.zeros(2), B
    for _ in range(levels):
        axis = np.linspace(-half, half, 201)
        pts = center + np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
        pts = pts[np.linalg.norm(pts, axis=1) <= B]
        vals = -np.logaddexp(0.0, -(pts @ y.T)).sum(axis=1) - 0.5 * reg * (pts ** 2).sum(axis=1)
        center = pts[np.argmax(vals)]
        half *= 0.05
    return center


@pytest.mark.parametrize("B", [0.5, 3.0])
def test_fit_matches_grid_search(rng, B):
    for n in (10, 50):
        q = QuerySet.from_diffs(0, rng.uniform(-1, 1, size=(n, 2)))
        data = sample_dataset([0.6, -0.8], q, rng)
        fit = fit_mle(data, B=B)
        grid = _grid_mle(data.signed_diffs, fit.reg, B)
        assert np.linalg.norm(fit.theta_hat - grid) <= 1e-3


def test_fit_gradient_zero_at_interior_optimum(rng):
    diffs = rng.uniform(-0.25, 0.25, size=(400, 4))
    q = QuerySet.from_diffs(0, diffs)
    data = sample_dataset([0.3, -0.2, 0.1, 0.0], q, rng)
    fit = fit_mle(data, B=5.0)
    y = data.signed_diffs
    grad = (1 / (1 + np.exp(y @ fit.theta_hat))) @ y - fit.reg * fit.theta_hat
    assert np.linalg.norm(grad) / data.n <= 1e-7


def test_fit_rejects_negative_reg(rng):
    data = LabelerDataset(0, QuerySet.from_diffs(0, np.eye(2)), [0, 1])
    with pytest.raises(ConfigError):
        fit_mle(data, B=1.0, reg=-1.0)


def test_warm_start_same_optimum(rng):
    diffs = rng.normal(size=(100, 3)) / 4
    y = diffs * np.where(rng.random(100) < 0.5, 1.0, -1.0)[:, None]
    a, *_ = fit_theta(y, 1.0, 0.05, tol=1e-13)
    b, *_ = fit_theta(y, 1.0, 0.05, theta0=np.array([0.5, -0.5, 0.1]), tol=1e-13)
    np.testing.assert_allclose(a, b, atol=1e-7)


def test_gamma_and_radius_constants():
    assert logistic_gamma(1.0, 1.0) == pytest.approx(GAMMA_UNIT, rel=1e-14)
    r = confidence_radius(16, 200, 5, 0.1, 1.0, 1.0, 1, 0.5)
    assert r == pytest.approx(0.5 * INV_GAMMA_UNIT * math.sqrt((16 + math.log(50)) / 200), rel=1e-13)


def test_radius_quarter_n_halves():
    r1 = confidence_radius(4, 100, 3, 0.1, 1.0, 1.0)
    r4 = confidence_radius(4, 400, 3, 0.1, 1.0, 1.0)
    assert r4 == pytest.approx(r1 / 2, rel=1e-14)


def test_radius_zero_constant():
    fit = fixed_fit(np.eye(2), [0.3, 0.1])
    cset = confidence_set(fit, 3, c_f=0.0)
    assert cset.radius == 0.0
    box = ellipsoid_box(cset)
    np.testing.assert_array_equal(box.lo, box.hi)
    assert cset.contains([0.3, 0.1]) and not cset.contains([0.3, 0.1 + 1e-9])


@pytest.mark.parametrize("bad", [dict(delta=0.0), dict(delta=1.0), dict(c_f=-1.0), dict(n=0)])
def test_radius_validation(bad):
    args = dict(d=2, n=10, k=1, delta=0.1, B=1.0, L=1.0, c_f=0.5)
    args.update(bad)
    with pytest.raises(ConfigError):
        confidence_radius(**args)


def test_box_identity_metric():
    box = ellipsoid_box(ConfidenceSet(fixed_fit(np.eye(3), [1.0, 0.0, -1.0]), 0.25))
    np.testing.assert_allclose(box.hi - [1.0, 0.0, -1.0], 0.25)
    np.testing.assert_allclose([1.0, 0.0, -1.0] - box.lo, 0.25)


def test_box_diagonal_metric():
    cset = ConfidenceSet(fixed_fit(np.diag([4.0, 1.0])), 1.0)
    np.testing.assert_allclose(cset.half_widths(), [0.5, 1.0], rtol=1e-14)


def test_box_is_tight_for_random_ellipsoid(rng):
    a = rng.normal(size=(3, 3))
    metric = a @ a.T + 0.5 * np.eye(3)
    center = rng.normal(size=3)
    r = 0.7
    cset = ConfidenceSet(fixed_fit(metric, center), r)
    box = ellipsoid_box(cset)
    inv = np.linalg.inv(metric)
    for j in range(3):
        e = np.eye(3)[j]
        top = center + r * inv @ e / math.sqrt(inv[j, j])
        assert cset.distance(top) == pytest.approx(r, rel=1e-10)
        assert top[j] == pytest.approx(box.hi[j], rel=1e-12)
        assert np.all(top <= box.hi + 1e-12) and np.all(top >= box.lo - 1e-12)
    # random boundary points never leave the box
    w = rng.normal(size=(2000, 3))
    chol = np.linalg.cholesky(inv)
    pts = center + r * (w / np.linalg.norm(w, axis=1, keepdims=True)) @ chol.T
    assert np.all(pts <= box.hi + 1e-12) and np.all(pts >= box.lo - 1e-12)


def test_coverage_identity():
    assert coverage_coefficient(fixed_fit(np.eye(16)), np.eye(16)[0]).kappa == pytest.approx(1.0)
    cov = coverage_coefficient(fixed_fit(np.eye(16)), mode="uniform")
    assert cov.exact and cov.kappa == pytest.approx(4.0, rel=1e-14)


def test_coverage_diagonal_uniform():
    assert coverage_coefficient(fixed_fit(np.diag([1.0, 4.0])), mode="uniform").kappa == \
        pytest.approx(SQRT_1_25, rel=1e-14)


def test_coverage_large_d_is_bound(rng):
    cov = coverage_coefficient(fixed_fit(np.eye(24)), mode="uniform")
    assert not cov.exact and cov.kappa == pytest.approx(math.sqrt(24))


def test_coverage_matches_vertex_brute_force(rng):
    import itertools
    a = rng.normal(size=(5, 5))
    metric = a @ a.T + np.eye(5)
    inv = np.linalg.inv(metric)
    brute = max(math.sqrt(np.array(v) @ inv @ np.array(v)) for v in itertools.product((-1, 1), repeat=5))
    assert coverage_coefficient(fixed_fit(metric), mode="uniform").kappa == pytest.approx(brute, rel=1e-12)


def test_coverage_errors():
    fit = fixed_fit(np.eye(2))
    with pytest.raises(InputError):
        coverage_coefficient(fit)
    with pytest.raises(InputError):
        coverage_coefficient(fit, mode="bogus")
    with pytest.raises(NumericError):
        fixed_fit(np.zeros((2, 2))).inverse_metric()


def test_empty_dataset_rejected():
    with pytest.raises(InputError):
        QuerySet.from_diffs(0, np.zeros((0, 2)))


def test_radius_infinite_ball_is_numeric_error():
    with pytest.raises(NumericError):
        confidence_radius(2, 10, 1, 0.1, math.inf, 1.0)
    assert logistic_gamma(1.0, 800.0) >= 0.0
