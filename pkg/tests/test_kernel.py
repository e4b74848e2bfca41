import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from combmcmc.gibbs import GibbsModel, brute_force_distribution, marginal, score
from combmcmc.kernel import (
    MH,
    SA,
    ChainConfig,
    ConstantSchedule,
    GeometricTruncatedSchedule,
    StationaryNotConverged,
    detailed_balance_error,
    kernel_matrix,
    mixture_step,
    run,
    run_batch,
    stationary_of,
    step,
    total_variation,
    write_trajectory_csv,
)
from combmcmc.proposals import LazyUniformProposal, MixtureProposal, UniformNeighborProposal
from combmcmc.spaces import HammingBall, HammingShell, Hypercube, Swap, TopK


class TiltedProposal:
    """Asymmetric test proposal on Hypercube(1): stays with prob .8 at 0, .2 at 1."""

    space = Hypercube(1)

    def draw(self, y, rng):
        return np.array([1 - y[0]], dtype=np.int8)

    def density(self, y, y2):
        if y[0] == y2[0]:
            return 0.0
        return 0.2 if y[0] == 0 else 0.8


def test_schedules():
    s = GeometricTruncatedSchedule(8.0, 0.5, 1.0)
    assert [s(k) for k in range(5)] == [8.0, 4.0, 2.0, 1.0, 1.0]
    assert np.allclose(s.array(5), [8, 4, 2, 1, 1])
    assert not s.constant
    b = GeometricTruncatedSchedule.with_burn_in(100, 0.99, 2.0)
    assert b(100) == pytest.approx(2.0)
    assert b(50) > 2.0
    assert ConstantSchedule(3.0).array(2).tolist() == [3.0, 3.0]
    with pytest.raises(ValueError):
        GeometricTruncatedSchedule(1.0, 1.5, 0.1)
    with pytest.raises(ValueError):
        ConstantSchedule(0.0)


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(mode="XX")
    with pytest.raises(ValueError):
        ChainConfig(K=10, K0=10)
    with pytest.raises(ValueError):
        ChainConfig(chains=0)


def test_acceptance_one_half():
    # score drop of ln 2 at t=1 with a symmetric proposal
    space = Hypercube(2)
    model = GibbsModel(np.array([-math.log(2), 0.0]))
    P = kernel_matrix(space, model, UniformNeighborProposal(HammingBall(1), space)).P
    # states are ordered 00, 01, 10, 11; moving 00 -> 10 is proposed with prob 1/2
    assert P[0, 2] == pytest.approx(0.25, abs=1e-15)
    assert P[0, 1] == pytest.approx(0.5, abs=1e-15)
    rng = np.random.default_rng(0)
    prop = UniformNeighborProposal(HammingShell(1), Hypercube(1))
    m1 = GibbsModel(np.array([-math.log(2)]))
    n = 40000
    acc = sum(step(np.array([0], dtype=np.int8), m1, prop, 1.0, MH, rng)[1] for _ in range(n))
    assert abs(acc - n / 2) < 5 * np.sqrt(n / 4)


def test_improving_move_always_accepted():
    rng = np.random.default_rng(1)
    prop = UniformNeighborProposal(HammingShell(1), Hypercube(1))
    model = GibbsModel(np.array([0.3]))
    assert all(step(np.array([0], dtype=np.int8), model, prop, 1.0, MH, rng)[1] for _ in range(1000))


def test_sa_ignores_proposal_ratio():
    rng = np.random.default_rng(2)
    model = GibbsModel(np.zeros(1))
    y = np.array([0], dtype=np.int8)
    n = 20000
    sa = sum(step(y, model, TiltedProposal(), 1.0, SA, rng)[1] for _ in range(n))
    mh = sum(step(y, model, TiltedProposal(), 1.0, MH, rng)[1] for _ in range(n))
    assert sa == n
    # from 0 the MH ratio is 0.8 / 0.2 = 4, so every move is accepted
    assert mh == n
    mh1 = sum(step(np.array([1], dtype=np.int8), model, TiltedProposal(), 1.0, MH, rng)[1] for _ in range(n))
    assert abs(mh1 - n / 4) < 5 * np.sqrt(n * 0.25 * 0.75)


def test_lazy_kernel_on_one_bit():
    space = Hypercube(1)
    P = kernel_matrix(space, GibbsModel(np.zeros(1)), LazyUniformProposal(HammingShell(1), space)).P
    assert np.allclose(P, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(arrays(float, 4, elements=st.floats(-3, 3)), st.floats(0.3, 3.0))
def test_detailed_balance_hypercube(theta, t):
    space = Hypercube(4)
    model = GibbsModel(theta, t)
    pi = brute_force_distribution(space, model).probs
    for prop in (
        UniformNeighborProposal(HammingBall(2), space),
        LazyUniformProposal(HammingBall(1), space),
        MixtureProposal([UniformNeighborProposal(HammingShell(r), space) for r in (1, 4)]),
    ):
        P = kernel_matrix(space, model, prop).P
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-14)
        assert P.min() >= -1e-15
        assert detailed_balance_error(P, pi) < 1e-14
        assert total_variation(stationary_of(P).probs, pi) < 1e-10


@settings(max_examples=15, deadline=None)
@given(arrays(float, 5, elements=st.floats(-3, 3)))
def test_detailed_balance_topk(theta):
    space = TopK(5, 2)
    model = GibbsModel(theta)
    pi = brute_force_distribution(space, model).probs
    prop = MixtureProposal([UniformNeighborProposal(Swap(s), space) for s in (1, 2)])
    P = kernel_matrix(space, model, prop).P
    assert detailed_balance_error(P, pi) < 1e-14
    assert total_variation(stationary_of(P).probs, pi) < 1e-10


def test_stationary_on_reducible_chain_is_a_fixed_point():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    table = stationary_of(P)
    assert table.residual < 1e-12


def test_stationary_of_periodic_and_slow_chains():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    # lazy iteration converges even for a periodic chain
    assert np.allclose(stationary_of(P).probs, [0.5, 0.5])
    slow = np.array([[1 - 1e-6, 1e-6], [3e-6, 1 - 3e-6]])
    # mixing takes ~1e6 steps, beyond the default budget
    with pytest.raises(StationaryNotConverged):
        stationary_of(slow)
    assert np.allclose(stationary_of(slow, max_iter=10**9).probs, [0.75, 0.25], atol=1e-10)
    asym = np.array([[1 - 1e-9, 1e-9], [2e-9, 1 - 2e-9]])
    with pytest.raises(StationaryNotConverged):
        stationary_of(asym, tol=1e-30, max_iter=4)


def test_run_is_deterministic_and_records(tmp_path):
    space = Hypercube(5)
    model = GibbsModel(np.linspace(-1, 1, 5))
    prop = UniformNeighborProposal(HammingBall(1), space)
    cfg = ChainConfig(K=200, K0=20, chains=3)
    a = run(space, model, prop, cfg, np.random.default_rng(7), record=True)
    b = run(space, model, prop, cfg, np.random.default_rng(7), record=True)
    assert np.array_equal(a.estimate, b.estimate)
    assert len(a.trajectory) == 600
    assert 0 < a.acceptance_rate <= 1
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, a.trajectory)
    lines = path.read_text().splitlines()
    assert lines[0] == "chain,k,t_k,accepted,score"
    assert len(lines) == 601


def test_run_mh_estimate_converges():
    space = Hypercube(4)
    model = GibbsModel(np.array([1.0, -0.5, 0.0, 2.0]))
    prop = UniformNeighborProposal(HammingBall(1), space)
    res = run(space, model, prop, ChainConfig(K=4000, chains=4), np.random.default_rng(3))
    assert np.max(np.abs(res.estimate - marginal(space, model))) < 0.05


def test_run_sa_returns_best_final_state():
    space = Hypercube(6)
    model = GibbsModel(np.array([1.0, -1.0, 2.0, -2.0, 0.5, -0.5]))
    prop = UniformNeighborProposal(HammingBall(1), space)
    sched = GeometricTruncatedSchedule(5.0, 0.97, 0.01)
    res = run(space, model, prop, ChainConfig(mode=SA, K=500, chains=5, schedule=sched), np.random.default_rng(4))
    assert res.estimate.tolist() == [1, 0, 1, 0, 1, 0]
    assert score(res.estimate, model) == max(score(y, model) for y in res.final_states)


def test_mixture_run_requires_constant_temperature():
    space = Hypercube(3)
    mix = MixtureProposal([UniformNeighborProposal(HammingShell(1), space)])
    cfg = ChainConfig(K=10, schedule=GeometricTruncatedSchedule(2.0, 0.9, 1.0))
    with pytest.raises(ValueError):
        run(space, GibbsModel(np.zeros(3)), mix, cfg, np.random.default_rng(0))
    y, accepted, s = mixture_step(np.zeros(3, dtype=np.int8), GibbsModel(np.zeros(3)), mix, 1.0, np.random.default_rng(0))
    assert accepted and s == 0 and y.sum() == 1


def test_run_batch_matches_exact_marginal():
    space = Hypercube(6)
    rng = np.random.default_rng(5)
    theta = rng.normal(size=(20, 6))
    prop = UniformNeighborProposal(HammingBall(1), space)
    exact = np.vstack([marginal(space, GibbsModel(r)) for r in theta])
    out = run_batch(np.repeat(theta, 5, axis=0), prop, 3000, space.random(rng, 100), rng,
                    chains_per_instance=5, reference=exact)
    est = out.means.reshape(20, 5, 6).mean(axis=1)
    assert np.max(np.abs(est - exact)) < 0.08
    assert out.mse_curve.shape == (3000,)
    assert out.mse_curve[-1] == pytest.approx(np.mean(np.sum((est - exact) ** 2, axis=1)))
    assert out.mse_curve[-1] < out.mse_curve[9]


def test_run_batch_topk_stays_feasible():
    space = TopK(7, 3)
    rng = np.random.default_rng(6)
    prop = MixtureProposal([UniformNeighborProposal(Swap(s), space) for s in (1, 2)])
    out = run_batch(rng.normal(size=(30, 7)), prop, 200, space.random(rng, 30), rng)
    assert np.all(out.final_states.sum(axis=1) == 3)


def test_run_batch_per_row_lengths():
    space = Hypercube(3)
    rng = np.random.default_rng(8)
    prop = UniformNeighborProposal(HammingBall(1), space)
    Y0 = np.zeros((2, 3), dtype=np.int8)
    theta = np.full((2, 3), 50.0)  # every proposed flip 0 -> 1 is accepted
    out = run_batch(theta, prop, np.array([1, 50]), Y0, rng)
    assert out.final_states[0].sum() == 1
    assert out.final_states[1].sum() == 3
    assert out.means[0].sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        run_batch(theta, prop, 5, Y0, rng, K0=5)


def test_run_batch_deterministic():
    space = Hypercube(4)
    prop = LazyUniformProposal(HammingBall(1), space)
    theta = np.ones((3, 4))
    Y0 = np.zeros((3, 4), dtype=np.int8)
    a = run_batch(theta, prop, 100, Y0, np.random.default_rng(9))
    b = run_batch(theta, prop, 100, Y0, np.random.default_rng(9))
    assert np.array_equal(a.means, b.means)
