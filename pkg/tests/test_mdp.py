import itertools

import numpy as np
import pytest

from stratrlhf.aggregation import MedianBox
from stratrlhf.errors import CapacityError, ConfigError, InputError
from stratrlhf.mdp import (TabularMdp, contrast_mdp, deterministic_policy_features, feature_occupancy,
                           flow_violation, labeler_boxes, occupancy, optimal_welfare,
                           optimize_mdp_pessimistic_median, pessimistic_feat_value, random_mdp,
                           repair_flow, sample_trajectories, smoothed_objective, trajectory_features,
                           trajectory_pair_diffs)


def random_policy(mdp, rng):
    return rng.dirichlet(np.ones(mdp.A), size=(mdp.H, mdp.S))


def chain_mdp(S=3, A=2, d=2):
    P = np.zeros((S, A, S))
    for s in range(S):
        P[s, :, min(s + 1, S - 1)] = 1.0
    phi = np.zeros((S, A, d))
    phi[:, :, 0] = np.arange(S)[:, None] / S
    phi[:, 1, 1] = 0.5
    return TabularMdp(P=P, rho=np.eye(S)[0], phi=phi, H=S)


def test_validation():
    with pytest.raises(InputError):
        TabularMdp(P=np.full((2, 2, 2), 0.6), rho=[0.5, 0.5], phi=np.zeros((2, 2, 1)), H=1)
    with pytest.raises(InputError):
        TabularMdp(P=np.full((2, 2, 2), 0.5), rho=[0.7, 0.7], phi=np.zeros((2, 2, 1)), H=1)
    with pytest.raises(InputError):
        TabularMdp(P=np.full((2, 2, 2), 0.5), rho=[0.5, 0.5], phi=np.ones((2, 2, 1)), H=1, L=0.5)
    with pytest.raises(ConfigError):
        TabularMdp(P=np.full((2, 2, 2), 0.5), rho=[0.5, 0.5], phi=np.zeros((2, 2, 1)), H=0)


def test_json_roundtrip(rng):
    mdp = random_mdp(3, 2, 2, 2, rng)
    back = TabularMdp.from_json(mdp.to_json())
    np.testing.assert_array_equal(back.P, mdp.P)
    assert back.L == mdp.L


def test_horizon_one_is_bandit(rng):
    mdp = random_mdp(4, 3, 1, 2, rng)
    pol = random_policy(mdp, rng)
    expected = np.einsum("s,sa,sad->d", mdp.rho, pol[0], mdp.phi)
    np.testing.assert_allclose(occupancy(mdp, pol).feat, expected, atol=1e-15)


def test_deterministic_chain():
    mdp = chain_mdp()
    occ = occupancy(mdp, np.ones((3, 3), dtype=int))
    for h in range(3):
        np.testing.assert_allclose(occ.q[h].sum(axis=1), np.eye(3)[h])
    # states 0, 1, 2 visited once each with action 1
    np.testing.assert_allclose(occ.feat, [(0 + 1 / 3 + 2 / 3) / 3, 0.5])


def test_monte_carlo_occupancy(rng):
    mdp = random_mdp(3, 2, 3, 2, rng)
    pol = random_policy(mdp, rng)
    traj = sample_trajectories(mdp, pol, 100_000, rng)
    mc = mdp.phi[traj[..., 0], traj[..., 1]].sum(axis=1).mean(axis=0) / mdp.H
    assert np.linalg.norm(mc - occupancy(mdp, pol).feat) <= 0.01


def test_flow_and_repair(rng):
    mdp = random_mdp(4, 3, 3, 2, rng)
    occ = occupancy(mdp, random_policy(mdp, rng))
    assert flow_violation(mdp, occ.q) <= 1e-12
    noisy = occ.q + 1e-3 * rng.random(occ.q.shape)
    assert flow_violation(mdp, noisy) > 1e-9
    assert flow_violation(mdp, repair_flow(mdp, noisy).q) <= 1e-9


def test_deterministic_features_match_rollout(rng):
    mdp = random_mdp(3, 2, 2, 3, rng)
    idx = rng.integers(0, mdp.n_policies, size=10)
    feats = deterministic_policy_features(mdp, idx)
    for i, f in zip(idx, feats):
        acts = (i // mdp.A ** np.arange(mdp.S * mdp.H)) % mdp.A
        np.testing.assert_allclose(f, occupancy(mdp, acts.reshape(mdp.H, mdp.S)).feat, atol=1e-14)


def test_policy_validation(rng):
    mdp = random_mdp(2, 2, 2, 1, rng)
    with pytest.raises(InputError):
        occupancy(mdp, np.full((2, 2), 3))
    with pytest.raises(InputError):
        occupancy(mdp, np.full((2, 2, 2), 0.7))


def test_trajectory_features():
    phi = np.arange(12, dtype=float).reshape(2, 2, 3)
    t = [(0, 1), (1, 0)]
    np.testing.assert_array_equal(trajectory_features(phi, t, t), np.zeros(3))
    np.testing.assert_array_equal(trajectory_features(phi, [(1, 1)], [(1, 0)]), phi[1, 1] - phi[1, 0])
    # hand computation: phi(0,1) + phi(1,0) - phi(0,0) - phi(1,1)
    hand = np.array([3, 4, 5]) + np.array([6, 7, 8]) - np.array([0, 1, 2]) - np.array([9, 10, 11])
    np.testing.assert_array_equal(trajectory_features(phi, [(0, 1), (1, 0)], [(0, 0), (1, 1)]), hand)
    with pytest.raises(InputError):
        trajectory_features(phi, [(0, 0)], [(0, 0), (1, 1)])
    with pytest.raises(InputError):
        trajectory_features(phi, [(0, 0)], [(1, 0)])


def test_trajectory_pairs_share_start(rng):
    mdp = random_mdp(3, 2, 3, 2, rng)
    x = trajectory_pair_diffs(mdp, 50, rng)
    assert x.shape == (50, 2)
    assert np.all(np.linalg.norm(x, axis=1) <= 2 * mdp.H * mdp.L + 1e-12)


def test_smoothed_gradient_finite_difference(rng):
    mdp = random_mdp(3, 2, 3, 3, rng)
    mbox = MedianBox(np.array([-0.2, 0.1, -0.5]), np.array([0.3, 0.4, -0.1]), 3)
    q = occupancy(mdp, random_policy(mdp, rng)).q
    _, grad = smoothed_objective(mdp, q, mbox, 1e-2)
    h = 1e-6
    for _ in range(10):
        direction = rng.normal(size=q.shape)
        fd = (smoothed_objective(mdp, q + h * direction, mbox, 1e-2)[0]
              - smoothed_objective(mdp, q - h * direction, mbox, 1e-2)[0]) / (2 * h)
        assert fd == pytest.approx(float(np.sum(grad * direction)), rel=1e-5, abs=1e-10)


def test_smoothing_is_exact_in_the_limit(rng):
    mdp = random_mdp(3, 2, 2, 2, rng)
    mbox = MedianBox(np.array([-0.2, 0.1]), np.array([0.3, 0.4]), 3)
    q = occupancy(mdp, random_policy(mdp, rng)).q
    exact = pessimistic_feat_value(feature_occupancy(mdp, q), mbox)
    assert smoothed_objective(mdp, q, mbox, 1e-12)[0] == pytest.approx(exact, abs=1e-11)


def random_box(rng, d):
    lo = rng.normal(size=d) * 0.5
    return MedianBox(lo, lo + rng.random(d) * 0.5, 3)


def test_gradient_matches_lp(rng):
    for _ in range(10):
        mdp = random_mdp(3, 2, 3, 2, rng)
        mbox = random_box(rng, 2)
        grad = optimize_mdp_pessimistic_median(mdp, mbox, "gradient")
        lp = optimize_mdp_pessimistic_median(mdp, mbox, "lp")
        enum = optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
        assert flow_violation(mdp, grad.occupancy.q) <= 1e-9
        assert grad.value == pytest.approx(lp.value, abs=1e-6)
        assert enum.value <= lp.value + 1e-12


def test_gradient_matches_enumeration_small(rng):
    checked = 0
    while checked < 5:
        mdp = random_mdp(2, 2, 2, 2, rng)
        mbox = random_box(rng, 2)
        enum = optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
        lp = optimize_mdp_pessimistic_median(mdp, mbox, "lp")
        if lp.value - enum.value > 1e-9:
            # optimum mixes deterministic policies, which enumeration cannot represent
            continue
        grad = optimize_mdp_pessimistic_median(mdp, mbox, "gradient")
        assert abs(grad.value - enum.value) <= 1e-4
        checked += 1


def test_horizon_one_matches_simplex_grid(rng):
    mdp = random_mdp(2, 2, 1, 2, rng)
    mbox = random_box(rng, 2)
    lp = optimize_mdp_pessimistic_median(mdp, mbox, "lp")
    grid = np.linspace(0, 1, 401)
    best = -np.inf
    for p0, p1 in itertools.product(grid, grid):
        pol = np.array([[[p0, 1 - p0], [p1, 1 - p1]]])
        best = max(best, pessimistic_feat_value(occupancy(mdp, pol).feat, mbox))
    assert best <= lp.value + 1e-12
    assert lp.value - best <= 1e-4


def test_straddling_box(rng):
    mbox = MedianBox(-np.ones(2), np.ones(2), 3)
    mdp = random_mdp(3, 2, 2, 2, rng)
    phi = np.array(mdp.phi)
    phi[:, 0, :] = 0.0
    with_zero = TabularMdp(P=mdp.P, rho=mdp.rho, phi=phi, H=mdp.H)
    assert optimize_mdp_pessimistic_median(with_zero, mbox, "lp").value == pytest.approx(0.0, abs=1e-12)
    assert optimize_mdp_pessimistic_median(with_zero, mbox, "enumerate").value == pytest.approx(0.0, abs=1e-15)
    lp = optimize_mdp_pessimistic_median(mdp, mbox, "lp")
    enum = optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
    assert enum.value <= lp.value + 1e-12 <= 1e-12


def test_auto_and_errors(rng):
    mdp = random_mdp(2, 2, 2, 2, rng)
    mbox = random_box(rng, 2)
    auto = optimize_mdp_pessimistic_median(mdp, mbox)
    assert auto.value >= optimize_mdp_pessimistic_median(mdp, mbox, "enumerate").value
    with pytest.raises(ConfigError):
        optimize_mdp_pessimistic_median(mdp, mbox, "bogus")
    with pytest.raises(InputError):
        optimize_mdp_pessimistic_median(mdp, random_box(rng, 3))
    big = random_mdp(10, 4, 5, 2, rng)
    with pytest.raises(CapacityError):
        optimize_mdp_pessimistic_median(big, mbox, "enumerate")


def test_optimal_welfare_matches_enumeration(rng):
    mdp = random_mdp(3, 2, 3, 2, rng)
    theta = rng.normal(size=2)
    value, acts = optimal_welfare(mdp, theta)
    feats = deterministic_policy_features(mdp, np.arange(mdp.n_policies))
    assert value == pytest.approx(float((feats @ theta).max()), abs=1e-14)
    assert float(theta @ occupancy(mdp, acts).feat) == pytest.approx(value, abs=1e-14)


def test_labeler_boxes_cover_truth(rng):
    mdp = contrast_mdp(1)
    thetas = np.tile([0.8, 0.6], (5, 1))
    lo, hi = labeler_boxes(mdp, thetas, 400, rng)
    assert lo.shape == (5, 2) and np.all(lo <= hi)
    assert np.mean(np.all((lo <= thetas) & (thetas <= hi), axis=1)) >= 0.8


def test_thread_count_does_not_change_enumeration(rng, monkeypatch):
    mdp = random_mdp(4, 3, 3, 2, rng)
    mbox = random_box(rng, 2)
    one = optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
    monkeypatch.setenv("STRATRLHF_THREADS", "4")
    four = optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
    np.testing.assert_array_equal(one.policy, four.policy)
    monkeypatch.setenv("STRATRLHF_THREADS", "x")
    with pytest.raises(ConfigError):
        optimize_mdp_pessimistic_median(mdp, mbox, "enumerate")
