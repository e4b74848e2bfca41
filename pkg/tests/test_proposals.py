import numpy as np
import pytest

from combmcmc.proposals import (
    InvariantViolation,
    LazyUniformProposal,
    MixtureProposal,
    UniformNeighborProposal,
    mixture_correction,
    mixture_draw,
)
from combmcmc.spaces import HammingBall, HammingShell, Hypercube, Swap, TopK, enumerate_space


@pytest.mark.parametrize(
    "proposal",
    [
        UniformNeighborProposal(HammingBall(2), Hypercube(4)),
        LazyUniformProposal(HammingBall(1), Hypercube(4)),
        UniformNeighborProposal(Swap(1), TopK(5, 2)),
        LazyUniformProposal(Swap(2), TopK(5, 2)),
    ],
)
def test_support_is_a_distribution_matching_density(proposal):
    for y in enumerate_space(proposal.space):
        support = list(proposal.support(y))
        assert sum(q for _, q in support) == pytest.approx(1.0, abs=1e-14)
        for y2, q in support:
            assert proposal.density(y, y2) == pytest.approx(q)


def test_uniform_density_values():
    prop = UniformNeighborProposal(HammingBall(1), Hypercube(3))
    assert prop.density([0, 0, 0], [1, 0, 0]) == pytest.approx(1 / 3)
    assert prop.density([0, 0, 0], [1, 1, 0]) == 0.0
    assert prop.density([0, 0, 0], [0, 0, 0]) == 0.0
    assert prop.log_ratio([0, 0, 0], [1, 0, 0]) == 0.0


def test_lazy_self_mass_is_one_half_on_regular_graphs():
    prop = LazyUniformProposal(HammingShell(2), Hypercube(4))
    y = np.zeros(4, dtype=np.int8)
    assert prop.self_mass(y) == pytest.approx(0.5)
    assert prop.density(y, y) == pytest.approx(0.5)
    assert prop.density(y, np.array([1, 1, 0, 0])) == pytest.approx(1 / 12)


def test_lazy_draw_frequencies():
    prop = LazyUniformProposal(HammingBall(1), Hypercube(3))
    rng = np.random.default_rng(0)
    y = np.array([0, 1, 0], dtype=np.int8)
    n = 30000
    stays = sum(np.array_equal(prop.draw(y, rng), y) for _ in range(n))
    assert abs(stays - n / 2) < 5 * np.sqrt(n / 4)
    mask, ratio = prop.draw_mask_batch(np.repeat(y[None], n, axis=0), rng)
    still = np.sum(~mask.any(axis=1))
    assert abs(still - n / 2) < 5 * np.sqrt(n / 4)
    assert np.all(ratio == 0)


def test_mixture_draw_and_correction():
    space = Hypercube(4)
    mix = MixtureProposal([
        UniformNeighborProposal(HammingShell(1), space),
        UniformNeighborProposal(HammingShell(2), space),
    ])
    rng = np.random.default_rng(1)
    y = np.zeros(4, dtype=np.int8)
    members = [mixture_draw(mix, y, rng)[0] for _ in range(4000)]
    assert abs(np.mean(members) - 0.5) < 0.05
    assert mixture_correction(mix, 1, y, np.array([1, 1, 0, 0])) == pytest.approx(1.0)
    with pytest.raises(InvariantViolation):
        mixture_correction(mix, 0, y, np.array([1, 1, 0, 0]))


def test_state_dependent_mixture_correction():
    space = Hypercube(3)
    members = [UniformNeighborProposal(HammingShell(1), space), UniformNeighborProposal(HammingShell(2), space)]
    # the second member is only available at the origin
    mix = MixtureProposal(members, applicable=lambda y: [0, 1] if not np.any(y) else [0])
    y = np.zeros(3, dtype=np.int8)
    y2 = np.array([1, 0, 0], dtype=np.int8)
    assert mixture_correction(mix, 0, y, y2) == pytest.approx(2.0)
    assert mixture_correction(mix, 0, y2, y) == pytest.approx(0.5)
    with pytest.raises(NotImplementedError):
        mix.draw_mask_batch(np.zeros((2, 3), dtype=np.int8), np.random.default_rng(0))
    with pytest.raises(InvariantViolation):
        mixture_draw(MixtureProposal(members, applicable=lambda y: []), y, np.random.default_rng(0))


def test_empty_mixture_rejected():
    with pytest.raises(ValueError):
        MixtureProposal([])
