import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from combmcmc.gibbs import (
    DistributionTable,
    GibbsModel,
    LinearCost,
    UnsupportedSpace,
    brute_force_distribution,
    cumulant,
    cumulant_batch,
    map_solve,
    marginal,
    marginal_batch,
    sample_exact,
    sample_exact_batch,
    score,
    scores,
)
from combmcmc.spaces import Hypercube, TopK

finite = st.floats(-4, 4, allow_nan=False)


def _by_hand(space, theta, t):
    """Independent enumeration with itertools, no shared code with the library."""
    d = len(theta)
    ys = [np.array(y) for y in itertools.product((0, 1), repeat=d)]
    if isinstance(space, TopK):
        ys = [y for y in ys if y.sum() == space.k]
    w = np.array([math.exp(float(np.dot(theta, y)) / t) for y in ys])
    Z = w.sum()
    return t * math.log(Z), sum(wi * y for wi, y in zip(w, ys)) / Z


def test_frozen_topk_values():
    model = GibbsModel(np.array([1.0, 0.0, 0.0]))
    space = TopK(3, 1)
    e = math.e
    assert cumulant(space, model) == pytest.approx(math.log(e + 2), abs=1e-14)
    assert np.allclose(marginal(space, model), np.array([e, 1, 1]) / (e + 2), atol=1e-14)


def test_frozen_hypercube_values():
    model = GibbsModel(np.zeros(2))
    assert cumulant(Hypercube(2), model) == pytest.approx(2 * math.log(2), abs=1e-15)
    assert np.allclose(marginal(Hypercube(2), model), 0.5)
    hot = GibbsModel(np.array([2.0]), temperature=2.0)
    assert cumulant(Hypercube(1), hot) == pytest.approx(2 * math.log(1 + math.e), abs=1e-14)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 9), st.data(), st.floats(0.2, 5.0))
def test_topk_dp_matches_enumeration(d, data, t):
    k = data.draw(st.integers(1, d - 1))
    theta = data.draw(arrays(float, d, elements=finite))
    space = TopK(d, k)
    A, mu = _by_hand(space, theta, t)
    model = GibbsModel(theta, t)
    assert cumulant(space, model) == pytest.approx(A, abs=1e-10)
    assert np.allclose(marginal(space, model), mu, atol=1e-10)
    assert marginal(space, model).sum() == pytest.approx(k, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.data(), st.floats(0.2, 5.0))
def test_hypercube_closed_form_matches_enumeration(d, data, t):
    theta = data.draw(arrays(float, d, elements=finite))
    A, mu = _by_hand(Hypercube(d), theta, t)
    model = GibbsModel(theta, t)
    assert cumulant(Hypercube(d), model) == pytest.approx(A, abs=1e-12)
    assert np.allclose(marginal(Hypercube(d), model), mu, atol=1e-12)


def test_batch_oracles_match_scalar():
    rng = np.random.default_rng(0)
    theta = rng.normal(size=(5, 6))
    for space in (Hypercube(6), TopK(6, 2)):
        mb = marginal_batch(space, theta, 1.5)
        cb = cumulant_batch(space, theta, 1.5)
        for row, m, c in zip(theta, mb, cb):
            model = GibbsModel(row, 1.5)
            assert np.allclose(m, marginal(space, model), atol=1e-13)
            assert c == pytest.approx(cumulant(space, model), abs=1e-12)


def test_large_topk_is_finite():
    rng = np.random.default_rng(1)
    theta = 50 * rng.normal(size=200)
    space = TopK(200, 20)
    mu = marginal(space, GibbsModel(theta, 0.1))
    assert np.all(np.isfinite(mu))
    assert mu.sum() == pytest.approx(20, abs=1e-8)


@pytest.mark.parametrize("space", [Hypercube(4), TopK(5, 2)])
def test_exact_samples_match_marginal(space):
    rng = np.random.default_rng(2)
    model = GibbsModel(rng.normal(size=space.d), 0.7)
    n = 40000
    Y = sample_exact(space, model, rng, n)
    assert all(space.contains(y) for y in Y[:200])
    mu = marginal(space, model)
    se = np.sqrt(mu * (1 - mu) / n)
    assert np.all(np.abs(Y.mean(axis=0) - mu) < 5 * se + 1e-12)


def test_exact_sample_frequencies_topk():
    rng = np.random.default_rng(4)
    space = TopK(4, 2)
    model = GibbsModel(np.array([0.5, -1.0, 1.2, 0.0]))
    table = brute_force_distribution(space, model)
    n = 60000
    Y = sample_exact(space, model, rng, n)
    for y, p in zip(table.support, table.probs):
        count = np.sum(np.all(Y == y, axis=1))
        assert abs(count - n * p) < 5 * np.sqrt(n * p * (1 - p))


def test_sample_exact_batch_rows():
    rng = np.random.default_rng(5)
    theta = np.array([[10.0, -10.0, 10.0], [-10.0, 10.0, -10.0]])
    Y = sample_exact_batch(Hypercube(3), theta, 0.1, rng)
    assert Y.tolist() == [[1, 0, 1], [0, 1, 0]]
    Y = sample_exact_batch(TopK(3, 1), theta * np.array([[1, 0, 0], [0, 1, 0]]), 0.1, rng)
    assert Y.tolist() == [[1, 0, 0], [0, 1, 0]]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.data())
def test_map_matches_enumeration(d, data):
    k = data.draw(st.integers(1, d - 1))
    theta = data.draw(arrays(float, d, elements=finite))
    for space in (Hypercube(d), TopK(d, k)):
        model = GibbsModel(theta)
        table = brute_force_distribution(space, model)
        best = scores(table.support, model).max()
        assert score(map_solve(space, model), model) == pytest.approx(best, abs=1e-12)


def test_map_tie_break_is_lexicographic():
    y = map_solve(TopK(4, 2), GibbsModel(np.zeros(4)))
    assert y.tolist() == [0, 0, 1, 1]
    assert map_solve(Hypercube(3), GibbsModel(np.zeros(3))).tolist() == [0, 0, 0]


def test_linear_cost_folds_into_theta():
    theta = np.array([1.0, 2.0, -1.0])
    c = np.array([0.5, 3.0, 0.0])
    folded = GibbsModel(theta, 1.3, LinearCost(c))
    plain = GibbsModel(theta - c, 1.3)
    for space in (Hypercube(3), TopK(3, 2)):
        assert cumulant(space, folded) == pytest.approx(cumulant(space, plain), abs=1e-14)
        assert np.allclose(marginal(space, folded), marginal(space, plain))
    assert score([1, 1, 0], folded) == pytest.approx(3.0 - 3.5)


def test_nonlinear_phi_uses_enumeration():
    phi = lambda y: 2.0 * y[0] * y[1]  # noqa: E731
    model = GibbsModel(np.zeros(3), 1.0, phi)
    space = Hypercube(3)
    A = cumulant(space, model)
    assert A == pytest.approx(math.log(6 + 2 * math.e**2), abs=1e-12)
    mu = marginal(space, model)
    assert mu[0] == pytest.approx((2 + 2 * math.e**2) / (6 + 2 * math.e**2), abs=1e-12)
    with pytest.raises(UnsupportedSpace):
        sample_exact(space, model, np.random.default_rng(0), 1)
    with pytest.raises(UnsupportedSpace):
        cumulant(Hypercube(30), GibbsModel(np.zeros(30), 1.0, phi))


def test_model_validation():
    with pytest.raises(ValueError):
        GibbsModel(np.zeros(2), temperature=0.0)
    with pytest.raises(ValueError):
        GibbsModel(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        GibbsModel(np.zeros(2), 1.0, LinearCost(np.zeros(3)))
    with pytest.raises(ValueError):
        score([1, 0, 1], GibbsModel(np.zeros(2)))


def test_distribution_table_checks_normalization():
    with pytest.raises(ValueError):
        DistributionTable(np.eye(2), np.array([0.5, 0.6]))
    table = DistributionTable(np.eye(2), np.array([0.25, 0.75]))
    assert np.allclose(table.mean(), [0.25, 0.75])
    assert np.allclose(table.covariance(), [[0.1875, -0.1875], [-0.1875, 0.1875]])
