import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference
from pwadmm.problems import (
    ConsensusProblem,
    LocalDataset,
    LossFamily,
    lipschitz_constant,
    local_gradient,
    local_loss,
    solve_oracle,
    synthesize_least_squares,
    synthesize_logistic,
)

LS, LOG = LossFamily.LEAST_SQUARES, LossFamily.LOGISTIC


def one_sample(o, t):
    return LocalDataset(np.array([o], dtype=float), np.array([t], dtype=float))


def test_least_squares_tiny_instance_in_range():
    p = synthesize_least_squares(1, 1, 2, seed=5)
    d = p.datasets[0]
    values = np.concatenate([d.features.ravel(), d.targets])
    assert values.size == 3  # two features and one target
    assert np.all((values > 0) & (values < 1))


@pytest.mark.parametrize("synth", [synthesize_least_squares, synthesize_logistic])
def test_default_shape(synth):
    p = synth(100, 30, 2, seed=0)
    assert p.n_agents == 100 and p.dim == 2
    assert all(d.features.shape == (30, 2) and d.targets.shape == (30,) for d in p.datasets)


def test_least_squares_feature_mean():
    p = synthesize_least_squares(5000, 10, 2, seed=1)
    feats = np.concatenate([d.features.ravel() for d in p.datasets])
    assert feats.size == 10**5
    assert abs(feats.mean() - 0.5) <= 0.01


def test_synthesis_deterministic():
    a = synthesize_logistic(10, 30, 2, seed=4)
    b = synthesize_logistic(10, 30, 2, seed=4)
    for da, db in zip(a.datasets, b.datasets):
        assert np.array_equal(da.features, db.features) and np.array_equal(da.targets, db.targets)


def test_logistic_labels():
    p = synthesize_logistic(20, 30, 2, seed=2)
    assert all(set(np.unique(d.targets)) <= {-1.0, 1.0} for d in p.datasets)


def test_logistic_zero_hidden_is_fair_coin():
    p = synthesize_logistic(1000, 10, 2, seed=3, hidden=np.zeros(2))
    t = np.concatenate([d.targets for d in p.datasets])
    assert t.size == 10**4
    assert abs(np.mean(t == 1.0) - 0.5) <= 0.02


def test_loss_examples():
    d = one_sample([1, 0], 1)
    assert local_loss(d, LS, np.array([1.0, 0.0])) == 0.0
    assert local_loss(d, LS, np.zeros(2)) == 1.0
    q = synthesize_logistic(1, 7, 2, seed=0).datasets[0]
    assert local_loss(q, LOG, np.zeros(2)) == pytest.approx(math.log(2), abs=1e-15)


def test_gradient_examples():
    d = one_sample([1, 0], 1)
    np.testing.assert_array_equal(local_gradient(d, LS, np.array([1.0, 0.0])), [0, 0])
    o = np.array([0.3, -1.2])
    for t in (-1.0, 1.0):
        np.testing.assert_allclose(local_gradient(one_sample(o, t), LOG, np.zeros(2)), -t * o / 2, atol=1e-16)


@pytest.mark.parametrize("family", [LS, LOG])
def test_gradient_matches_finite_differences(family):
    rng = np.random.default_rng(0)
    synth = synthesize_least_squares if family is LS else synthesize_logistic
    for case in range(100):
        d = synth(1, 30, 2, seed=case).datasets[0]
        x = rng.normal(scale=2.0, size=2)
        g = local_gradient(d, family, x)
        fd = central_difference(lambda v: local_loss(d, family, v), x)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


def test_stacked_gradients_match_per_agent():
    for synth in (synthesize_least_squares, synthesize_logistic):
        p = synth(12, 30, 3, seed=9)
        X = np.random.default_rng(1).normal(size=(12, 3))
        ref = np.stack([p.gradient(i, X[i]) for i in range(12)])
        np.testing.assert_allclose(p.gradients(X), ref, rtol=1e-13, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), family=st.sampled_from([LS, LOG]),
       x=st.lists(st.floats(-50, 50), min_size=2, max_size=2))
def test_loss_nonnegative(seed, family, x):
    synth = synthesize_least_squares if family is LS else synthesize_logistic
    d = synth(1, 5, 2, seed=seed).datasets[0]
    assert local_loss(d, family, np.array(x)) >= 0.0


def test_lipschitz_examples():
    p = ConsensusProblem(LS, (one_sample([1, 0], 1),))
    assert lipschitz_constant(p) == pytest.approx(2.0, rel=1e-12)
    z = ConsensusProblem(LS, (LocalDataset(np.zeros((4, 2)), np.ones(4)),))
    assert lipschitz_constant(z) == 0.0


@pytest.mark.parametrize("family", [LS, LOG])
def test_lipschitz_matches_dense_eigensolver(family):
    synth = synthesize_least_squares if family is LS else synthesize_logistic
    p = synth(5, 30, 2, seed=4)
    scale = 2.0 if family is LS else 0.25
    ref = max(scale / d.n_samples * np.linalg.eigvalsh(d.features.T @ d.features)[-1] for d in p.datasets)
    assert abs(lipschitz_constant(p) - ref) <= 1e-8 * ref


@pytest.mark.parametrize("family", [LS, LOG])
def test_lipschitz_certifies_gradients(family):
    synth = synthesize_least_squares if family is LS else synthesize_logistic
    p = synth(6, 30, 2, seed=8)
    L = lipschitz_constant(p)
    rng = np.random.default_rng(2)
    for _ in range(100):
        i = int(rng.integers(6))
        x1, x2 = rng.normal(scale=3, size=(2, 2))
        lhs = np.linalg.norm(p.gradient(i, x1) - p.gradient(i, x2))
        assert lhs <= L * np.linalg.norm(x1 - x2) + 1e-9


def test_oracle_single_sample_min_norm():
    p = ConsensusProblem(LS, (one_sample([1, 0], 1),))
    with pytest.warns(RuntimeWarning, match="singular"):
        x = solve_oracle(p)
    assert x @ np.array([1.0, 0.0]) == pytest.approx(1.0, abs=1e-12)
    assert abs(x[1]) <= 1e-12
    assert np.linalg.norm(p.total_gradient(x)) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_oracle_least_squares_certificate(seed):
    p = synthesize_least_squares(5, 30, 2, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        x = solve_oracle(p)
    assert np.linalg.norm(p.total_gradient(x)) <= 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_oracle_logistic_local_minimality(seed):
    p = synthesize_logistic(5, 30, 2, seed=seed)
    x = solve_oracle(p)
    assert np.linalg.norm(p.total_gradient(x)) <= 1e-9
    f0 = p.total_loss(x)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        d = rng.normal(size=2)
        d *= 1e-3 / np.linalg.norm(d)
        assert f0 <= p.total_loss(x + d)


@pytest.mark.parametrize("synth", [synthesize_least_squares, synthesize_logistic])
def test_oracle_certificate_at_full_scale(synth):
    p = synth(100, 30, 2, seed=1)
    assert np.linalg.norm(p.total_gradient(p.oracle_solution)) <= 1e-9


def test_dataset_csv_roundtrip_bit_exact(tmp_path):
    p = synthesize_logistic(7, 5, 3, seed=6)
    path = tmp_path / "data.csv"
    p.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "agent_id,target,feature_1,feature_2,feature_3"
    q = ConsensusProblem.from_csv(path, "logistic")
    for a, b in zip(p.datasets, q.datasets):
        assert np.array_equal(a.features, b.features) and np.array_equal(a.targets, b.targets)


def test_invalid_datasets_rejected():
    with pytest.raises(ValueError, match="align"):
        LocalDataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="-1 or \\+1"):
        ConsensusProblem(LOG, (one_sample([1, 0], 0.5),))
    with pytest.raises(ValueError, match="dimension"):
        ConsensusProblem(LS, (one_sample([1, 0], 1), one_sample([1, 0, 0], 1)))
