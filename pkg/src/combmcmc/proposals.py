"""Proposal distributions over a neighborhood system.

A proposal exposes ``draw(y, rng)``, ``density(y, y2)`` and ``support(y)``
(an iterator of ``(y2, q(y, y2))`` pairs).  ``support_kind`` is either
``"neighbors"`` or ``"neighbors+self"``.  Batched draws used by the vectorized
chains return a boolean flip mask per row together with the log proposal ratio
``log q(y2, y) - log q(y, y2)``.
"""

from __future__ import annotations

from typing import Callable, Iterator, Sequence

import numpy as np

from .spaces import (
    NeighborhoodSystem,
    Space,
    Swap,
    HammingBall,
    HammingShell,
    enumerate_space,
    flip,
)


def is_neighbor(system: NeighborhoodSystem, y, y2) -> bool:
    dist = int(np.sum(np.asarray(y) != np.asarray(y2)))
    if isinstance(system, HammingBall):
        return 1 <= dist <= system.r
    if isinstance(system, HammingShell):
        return dist == system.r
    if isinstance(system, Swap):
        return dist == 2 * system.s and int(np.sum(y)) == int(np.sum(y2))
    raise TypeError(f"unknown neighborhood system {system!r}")


class UniformNeighborProposal:
    """``q(y, y2) = 1 / |N(y)|`` on the neighbors of ``y``."""

    support_kind = "neighbors"

    def __init__(self, system: NeighborhoodSystem, space: Space):
        system.validate(space)
        self.system = system
        self.space = space

    def __repr__(self):
        return f"UniformNeighborProposal({self.system!r})"

    def draw(self, y, rng: np.random.Generator) -> np.ndarray:
        return flip(y, self.system.sample_flips(self.space, y, rng))

    def density(self, y, y2) -> float:
        if not is_neighbor(self.system, y, y2):
            return 0.0
        return 1.0 / self.system.degree(self.space, y)

    def support(self, y) -> Iterator[tuple[np.ndarray, float]]:
        q = 1.0 / self.system.degree(self.space, y)
        for flips in self.system.iter_flips(self.space, y):
            yield flip(y, flips), q

    def log_ratio(self, y, y2) -> float:
        return float(np.log(self.system.degree(self.space, y)) - np.log(self.system.degree(self.space, y2)))

    def draw_mask_batch(self, Y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        # built-in systems are regular, so the proposal is symmetric
        return self.system.sample_mask_batch(self.space, Y, rng), np.zeros(Y.shape[0])


class LazyUniformProposal:
    """``q(y, y2) = 1 / (2 d*)`` on neighbors and ``1 - d(y) / (2 d*)`` on ``y`` itself."""

    support_kind = "neighbors+self"

    def __init__(self, system: NeighborhoodSystem, space: Space):
        system.validate(space)
        self.system = system
        self.space = space
        if getattr(system, "regular", True):
            self.max_degree = system.degree(space)
        else:
            self.max_degree = max(system.degree(space, y) for y in enumerate_space(space))

    def __repr__(self):
        return f"LazyUniformProposal({self.system!r})"

    def self_mass(self, y) -> float:
        return 1.0 - self.system.degree(self.space, y) / (2.0 * self.max_degree)

    def draw(self, y, rng: np.random.Generator) -> np.ndarray:
        if rng.random() < self.self_mass(y):
            return np.array(y, dtype=np.int8, copy=True)
        return flip(y, self.system.sample_flips(self.space, y, rng))

    def density(self, y, y2) -> float:
        if np.array_equal(y, y2):
            return self.self_mass(y)
        if not is_neighbor(self.system, y, y2):
            return 0.0
        return 1.0 / (2.0 * self.max_degree)

    def support(self, y) -> Iterator[tuple[np.ndarray, float]]:
        q = 1.0 / (2.0 * self.max_degree)
        for flips in self.system.iter_flips(self.space, y):
            yield flip(y, flips), q
        yield np.array(y, dtype=np.int8, copy=True), self.self_mass(y)

    def log_ratio(self, y, y2) -> float:
        return 0.0

    def draw_mask_batch(self, Y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        mask = self.system.sample_mask_batch(self.space, Y, rng)
        stay = rng.random(Y.shape[0]) < 0.5
        mask[stay] = False
        return mask, np.zeros(Y.shape[0])


class MixtureProposal:
    """Members indexed ``0..S-1``; ``applicable(y)`` returns the usable member indices.

    When ``applicable`` is omitted every member is usable everywhere.
    """

    def __init__(self, members: Sequence, applicable: Callable | None = None):
        if not members:
            raise ValueError("a mixture needs at least one member")
        self.members = list(members)
        self._applicable = applicable

    def __repr__(self):
        return f"MixtureProposal({self.members!r})"

    @property
    def space(self):
        return self.members[0].space

    def applicable(self, y) -> list[int]:
        if self._applicable is None:
            return list(range(len(self.members)))
        return list(self._applicable(y))

    def draw_mask_batch(self, Y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if self._applicable is not None:
            raise NotImplementedError("batched mixtures require every member to be applicable everywhere")
        choice = rng.integers(0, len(self.members), size=Y.shape[0])
        mask = np.zeros(Y.shape, dtype=bool)
        log_ratio = np.zeros(Y.shape[0])
        for s, member in enumerate(self.members):
            rows = choice == s
            if rows.any():
                m, lr = member.draw_mask_batch(Y[rows], rng)
                mask[rows] = m
                log_ratio[rows] = lr
        return mask, log_ratio


class InvariantViolation(RuntimeError):
    pass


def uniform_neighbor_proposal(system: NeighborhoodSystem, space: Space) -> UniformNeighborProposal:
    return UniformNeighborProposal(system, space)


def lazy_uniform_proposal(system: NeighborhoodSystem, space: Space) -> LazyUniformProposal:
    return LazyUniformProposal(system, space)


def mixture_draw(mix: MixtureProposal, y, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    """Pick a member uniformly among ``Q(y)`` then draw from it."""
    usable = mix.applicable(y)
    if not usable:
        raise InvariantViolation("no neighborhood system is applicable at this solution")
    s = usable[int(rng.integers(len(usable)))]
    return s, mix.members[s].draw(y, rng)


def mixture_correction(mix: MixtureProposal, s: int, y, y2) -> float:
    """``|Q(y)| / |Q(y2)| * q_s(y2, y) / q_s(y, y2)`` for the sampled member only."""
    member = mix.members[s]
    forward = member.density(y, y2)
    if forward <= 0:
        raise InvariantViolation("forward proposal density is zero at the drawn candidate")
    return len(mix.applicable(y)) / len(mix.applicable(y2)) * member.density(y2, y) / forward
