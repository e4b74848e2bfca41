import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from combmcmc.fy import fy_loss_exact
from combmcmc.gibbs import GibbsModel, sample_exact_batch
from combmcmc.learn import (
    DATA,
    GROUND_TRUTH,
    PERSISTENT,
    RANDOM,
    Adam,
    AdamConfig,
    Dataset,
    InitSpec,
    InteriorityError,
    LinearModel,
    ScheduleInfeasible,
    ScheduleParams,
    conditional_loss,
    distance_sq,
    fit_conditional,
    fit_unconditional,
    generate_unconditional,
    is_interior,
    metrics,
    population_loss,
    projector,
)
from combmcmc.proposals import LazyUniformProposal, UniformNeighborProposal
from combmcmc.spaces import ConfigurationError, HammingBall, Hypercube, Swap, TopK


def test_schedule_param_validation():
    with pytest.raises(ConfigurationError):
        ScheduleParams(R_C=1.0, b=0.5)
    with pytest.raises(ConfigurationError):
        ScheduleParams(R_C=1.0, b=0.6, c=0.7)
    with pytest.raises(ConfigurationError):
        ScheduleParams(R_C=0.0)
    p = ScheduleParams.for_space(Hypercube(4))
    assert p.R_C == pytest.approx(2.0)
    assert p.gamma(1) == pytest.approx(0.1)
    assert p.gamma(32) == pytest.approx(0.1 * 32**-0.6)


def test_length_bound_values():
    p = ScheduleParams(R_C=1.0, t=8.0)
    # floor(1 + exp(||theta||)) at 8 R_C / t = 1
    assert p.length_bound(np.array([0.0, 1.0, 2.0])).tolist() == [2, 3, 8]
    with pytest.raises(ScheduleInfeasible):
        p.length_bound(np.array([100.0]))


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.51, 1.0),
    st.floats(0.0, 1.0),
    st.lists(st.floats(0.0, 0.6), min_size=2, max_size=30),
    st.integers(1, 2000),
)
def test_generated_lengths_satisfy_conditions(b, c_frac, norms, floor):
    c = (1 - b / 2) + 1e-3 + c_frac
    p = ScheduleParams(R_C=1.0, b=b, c=c, K_floor=floor)
    K_prev = None
    for n, norm in enumerate(norms, start=1):
        norm = np.array([norm])
        K = p.next_lengths(n, K_prev, norm)
        checks = p.check(n, p.gamma(n), K, K_prev, norm)
        assert checks == {"i": True, "ii": True, "iii": True}
        K_prev = K


def test_min_after_is_tight():
    p = ScheduleParams(R_C=1.0)
    n, K_prev = 5, np.array([10_000])
    K = p._min_after(n, K_prev)
    bound = p.a_second * n ** (-p.c)
    assert 1 / np.sqrt(K) - 1 / np.sqrt(K_prev) <= bound
    assert 1 / np.sqrt(K - 1) - 1 / np.sqrt(K_prev) > bound


def test_adam_first_step_is_sign_times_lr():
    adam = Adam(AdamConfig(lr=0.1), (3,))
    out = adam.update(np.zeros(3), np.array([2.0, -0.5, 0.0]))
    assert np.allclose(out, [-0.1, 0.1, 0.0], atol=1e-6)


def test_dataset_validation_and_mean():
    space = Hypercube(3)
    ds = Dataset(space, np.array([[1, 0, 1], [0, 0, 1]]))
    assert np.allclose(ds.mean(), [0.5, 0, 1])
    assert len(ds) == 2
    with pytest.raises(ConfigurationError):
        Dataset(space, np.array([[2, 0, 1]]))
    with pytest.raises(ValueError):
        Dataset(space)
    with pytest.raises(ValueError):
        Dataset(space, np.zeros((2, 3)), features=np.zeros((3, 1)))
    pop = Dataset.population(space, np.zeros(3))
    assert pop.is_population
    assert np.allclose(pop.mean(), 0.5)


def test_generate_unconditional_is_reproducible():
    space = TopK(5, 2)
    a = generate_unconditional(space, np.arange(5.0), 1.0, 50, np.random.default_rng(0))
    b = generate_unconditional(space, np.arange(5.0), 1.0, 50, np.random.default_rng(0))
    assert np.array_equal(a.targets, b.targets)
    assert np.all(a.targets.sum(axis=1) == 2)
    assert len(generate_unconditional(space, np.zeros(5), 1.0, 0, np.random.default_rng(0))) == 0


def test_interiority():
    assert is_interior(Hypercube(2), [0.3, 0.9])
    assert not is_interior(Hypercube(2), [0.0, 0.5])
    assert is_interior(TopK(3, 1), [0.2, 0.3, 0.5])
    assert not is_interior(TopK(3, 1), [0.2, 0.3, 0.4])
    space = Hypercube(2)
    ds = Dataset(space, np.array([[1, 0], [1, 1]]))
    with pytest.raises(InteriorityError):
        fit_unconditional(space, [ds], UniformNeighborProposal(HammingBall(1), space), np.zeros((1, 2)),
                          np.random.default_rng(0), K=5, n_max=1)


def test_distance_ignores_unidentified_direction():
    space = TopK(4, 2)
    theta0 = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert distance_sq(space, theta0 + 7.0, theta0)[0] == pytest.approx(0.0)
    assert distance_sq(Hypercube(4), theta0 + 1.0, theta0)[0] == pytest.approx(4.0)
    P = projector(space)
    assert np.allclose(P @ np.ones(4), 0)
    assert np.allclose(projector(Hypercube(3)), np.eye(3))


def test_population_loss_matches_fy_loss():
    rng = np.random.default_rng(1)
    space = Hypercube(4)
    theta = rng.normal(size=(3, 4))
    ybar = rng.uniform(0.1, 0.9, size=(3, 4))
    got = population_loss(space, theta, ybar, 0.8)
    want = [fy_loss_exact(space, GibbsModel(th, 0.8), yb) for th, yb in zip(theta, ybar)]
    assert np.allclose(got, want, atol=1e-13)


def test_metrics_records():
    space = Hypercube(2)
    traj = [np.zeros((1, 2)), np.ones((1, 2))]
    recs = metrics(traj, np.ones((1, 2)), space, ybar=np.full((1, 2), 0.5))
    assert [r["step"] for r in recs] == [0, 1]
    assert recs[0]["distance_sq"] == pytest.approx(2.0)
    assert recs[1]["distance_sq"] == 0.0
    assert "loss_proxy" in recs[0]


def _population_problem(space, M, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    theta0 = scale * rng.normal(size=(M, space.d))
    return theta0, [Dataset.population(space, row) for row in theta0]


@pytest.mark.parametrize("kind", [PERSISTENT, DATA, RANDOM])
def test_fit_unconditional_reduces_distance(kind):
    space = Hypercube(5)
    theta0, datasets = _population_problem(space, 8, 0)
    prop = UniformNeighborProposal(HammingBall(1), space)
    res = fit_unconditional(space, datasets, prop, np.zeros((8, 5)), np.random.default_rng(1), K=100,
                            optimizer=AdamConfig(lr=0.05), n_max=150, init=InitSpec(kind), theta0=theta0)
    assert res.records[-1]["distance_sq"] < 0.5 * np.mean(distance_sq(space, np.zeros((8, 5)), theta0))
    assert res.trajectory.shape == (151, 8, 5)
    assert set(res.records[0]) >= {"step", "loss_proxy", "distance_sq", "acceptance_rate", "K_used", "gamma_used"}


def test_fit_unconditional_finite_data_and_topk():
    space = TopK(6, 2)
    rng = np.random.default_rng(2)
    theta0 = rng.normal(size=(4, 6))
    datasets = [generate_unconditional(space, row, 1.0, 2000, rng) for row in theta0]
    prop = UniformNeighborProposal(Swap(1), space)
    theta_hat = np.zeros((4, 6))
    res = fit_unconditional(space, datasets, prop, theta_hat, np.random.default_rng(3), K=100,
                            optimizer=AdamConfig(lr=0.05), n_max=150, init=InitSpec(DATA), theta0=theta0,
                            keep_trajectory=False)
    assert res.trajectory is None
    assert res.records[-1]["distance_sq"] < 0.5 * np.mean(distance_sq(space, theta_hat, theta0))


def test_fit_unconditional_deterministic():
    space = Hypercube(4)
    theta0, datasets = _population_problem(space, 3, 4)
    prop = UniformNeighborProposal(HammingBall(1), space)
    runs = [
        fit_unconditional(space, datasets, prop, np.zeros((3, 4)), np.random.default_rng(5), K=20, n_max=10)
        for _ in range(2)
    ]
    assert np.array_equal(runs[0].theta, runs[1].theta)


def test_fit_unconditional_schedule_records_checks():
    space = Hypercube(4)
    theta0, datasets = _population_problem(space, 3, 6, scale=0.1)
    prop = LazyUniformProposal(HammingBall(1), space)
    sched = ScheduleParams.for_space(space, K_floor=50)
    res = fit_unconditional(space, datasets, prop, np.zeros((3, 4)), np.random.default_rng(7),
                            optimizer=sched, n_max=20, theta0=theta0)
    for rec in res.records:
        assert rec["schedule_ok"] == {"i": True, "ii": True, "iii": True}
        assert rec["K_used"] >= 50
    assert res.records[4]["gamma_used"] == pytest.approx(0.1 * 5**-0.6)


def test_fit_unconditional_rejects_ground_truth_init():
    space = Hypercube(3)
    _, datasets = _population_problem(space, 1, 0)
    with pytest.raises(ConfigurationError):
        fit_unconditional(space, datasets, UniformNeighborProposal(HammingBall(1), space), np.zeros((1, 3)),
                          np.random.default_rng(0), K=2, n_max=1, init=InitSpec(GROUND_TRUTH))
    with pytest.raises(ConfigurationError):
        InitSpec("sideways")


def test_fit_conditional_learns():
    space = Hypercube(4)
    rng = np.random.default_rng(8)
    W_true = rng.normal(size=(4, 3))
    X = rng.normal(size=(400, 3))
    Y = sample_exact_batch(space, X @ W_true.T, 1.0, rng)
    ds = Dataset(space, Y, features=X)
    prop = UniformNeighborProposal(HammingBall(1), space)
    W0 = np.zeros((4, 3))
    res = fit_conditional(space, ds, LinearModel(W0), prop, np.random.default_rng(9), K=30,
                          optimizer=AdamConfig(lr=0.05), n_max=200, W_true=W_true)
    assert res.records[-1]["loss_proxy"] < conditional_loss(space, W0, X, Y) - 0.3
    assert res.records[-1]["distance_sq"] < np.sum(W_true**2) * 0.5
    assert LinearModel(res.theta)(X[:2]).shape == (2, 4)
    with pytest.raises(ConfigurationError):
        fit_conditional(space, ds, LinearModel(W0), prop, rng, init=InitSpec(PERSISTENT))
    sgd = fit_conditional(space, ds, LinearModel(W0), prop, np.random.default_rng(9), K=5, optimizer=0.1, n_max=3)
    assert sgd.records[0]["gamma_used"] == 0.1
