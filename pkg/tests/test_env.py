import json

import numpy as np
import pytest

from stratrlhf.env import (ComparisonQuery, InstanceConfig, ProblemInstance, QuerySet, derive_rng,
                           generate_instance, generate_queries, load_config, sample_features)
from stratrlhf.errors import ConfigError, InputError


def test_instance_shape_and_ball():
    inst = generate_instance(InstanceConfig(d=16, k=5, n=200, B=1, L=1, seed=7))
    assert inst.true_params.shape == (5, 16)
    assert np.all(np.linalg.norm(inst.true_params, axis=1) <= 1 + 1e-12)


def test_zero_scale_gives_projected_mean():
    cfg = InstanceConfig(d=3, k=4, gt_mean=[3.0, 0.0, 4.0], gt_scale=0.0, B=1.0)
    inst = generate_instance(cfg)
    np.testing.assert_allclose(inst.true_params, np.tile([0.6, 0.0, 0.8], (4, 1)), atol=1e-15)


def test_instance_determinism():
    cfg = InstanceConfig(seed=7)
    a, b = generate_instance(cfg), generate_instance(cfg)
    assert a.true_params.tobytes() == b.true_params.tobytes()
    assert a.to_json() == b.to_json()


def test_instance_json_roundtrip():
    inst = generate_instance(InstanceConfig(d=3, k=2, seed=1))
    back = ProblemInstance.from_json(inst.to_json())
    np.testing.assert_array_equal(back.true_params, inst.true_params)


@pytest.mark.parametrize("bad", [dict(d=0), dict(k=-1), dict(B=0.0), dict(L=float("nan")),
                                 dict(sampler="gauss"), dict(gt_scale=-1.0), dict(gt_mean=[1, 2])])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        InstanceConfig(**bad)


def test_query_norms():
    inst = generate_instance(InstanceConfig(d=2, k=2, n=3, L=1.0, seed=3))
    for q in generate_queries(inst):
        assert q.n == 3
        assert np.all(np.linalg.norm(q.feats_0, axis=1) <= 1 + 1e-12)
        assert np.all(np.linalg.norm(q.feats_1, axis=1) <= 1 + 1e-12)


@pytest.mark.parametrize("sampler", ["uniform", "hypercube"])
def test_feature_norm_bound(sampler, rng):
    x = sample_features(1000, 16, 1.0, sampler, rng)
    assert np.all(np.linalg.norm(x, axis=1) <= 1 + 1e-12)


def test_single_query_covariance_rank_one():
    q = QuerySet.from_diffs(0, [[0.5]])
    assert q.covariance.shape == (1, 1)
    assert np.linalg.matrix_rank(QuerySet.from_diffs(0, [[0.3, 0.4]]).covariance) == 1


def test_default_sampler_covariance_positive_definite():
    for seed in range(100):
        inst = generate_instance(InstanceConfig(d=16, k=1, n=200, seed=seed))
        (q,) = generate_queries(inst, derive_rng(seed, 1))
        assert np.linalg.eigvalsh(q.covariance)[0] > 0


def test_queries_are_immutable():
    q = QuerySet.from_diffs(0, np.eye(2))
    with pytest.raises(ValueError):
        q.diffs[0, 0] = 5.0


def test_queryset_roundtrip_and_iteration():
    q = QuerySet(1, [[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [1.0, 1.0]])
    back = QuerySet.from_dict(json.loads(json.dumps(q.to_dict())))
    np.testing.assert_array_equal(back.diffs, q.diffs)
    assert [tuple(c.diff) for c in q] == [(1.0, 0.0), (-1.0, 0.0)]
    assert isinstance(q[0], ComparisonQuery)


def test_query_shape_errors():
    with pytest.raises(InputError):
        QuerySet(0, np.zeros((2, 3)), np.zeros((2, 2)))
    with pytest.raises(InputError):
        ComparisonQuery(np.zeros(2), np.zeros(3))


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text('{"seeds": 2}')
    assert load_config(good) == {"seeds": 2}


def test_derive_rng_independent_streams():
    a = derive_rng(0, 1).random(4)
    b = derive_rng(0, 2).random(4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, derive_rng(0, 1).random(4))
