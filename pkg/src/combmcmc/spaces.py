"""Finite solution sets and the neighborhood graphs defined on them.

Solutions are 0/1 numpy vectors.  Two sets are supported: the hypercube
``{0,1}^d`` and the ``k``-subsets of ``{1..d}`` (binary vectors with exactly
``k`` ones).  Every neighborhood system is described by *flip sets*: the
neighbor of ``y`` reached by flip set ``S`` is ``y`` with the coordinates in
``S`` toggled.  This keeps score deltas cheap and lets the same description
drive the scalar samplers, the batched samplers and the exact kernel matrices.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from math import comb, sqrt
from typing import Iterator, Sequence

import numpy as np

DEFAULT_ENUMERATION_CAP = 2**20


class ConfigurationError(ValueError):
    """Raised for out-of-range space or neighborhood parameters."""


class SpaceTooLarge(ValueError):
    """Raised when brute-force enumeration would exceed the configured cap."""


# ---------------------------------------------------------------------------
# solution sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Hypercube:
    """All binary vectors of length ``d``."""

    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError(f"hypercube dimension must be positive, got {self.d}")

    @property
    def cardinality(self) -> int:
        return 2**self.d

    @property
    def radius(self) -> float:
        """max ||y|| over the set."""
        return sqrt(self.d)

    def contains(self, y) -> bool:
        y = np.asarray(y)
        return y.shape == (self.d,) and bool(np.all((y == 0) | (y == 1)))

    def random(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = (self.d,) if size is None else (size, self.d)
        return rng.integers(0, 2, size=shape).astype(np.int8)


@dataclass(frozen=True)
class TopK:
    """Binary vectors of length ``d`` with exactly ``k`` ones."""

    d: int
    k: int

    def __post_init__(self):
        if not 0 < self.k < self.d:
            raise ConfigurationError(f"top-k requires 0 < k < d, got d={self.d}, k={self.k}")

    @property
    def cardinality(self) -> int:
        return comb(self.d, self.k)

    @property
    def radius(self) -> float:
        return sqrt(self.k)

    def contains(self, y) -> bool:
        y = np.asarray(y)
        return (
            y.shape == (self.d,)
            and bool(np.all((y == 0) | (y == 1)))
            and int(y.sum()) == self.k
        )

    def random(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else size
        keys = rng.random((n, self.d))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        out = (ranks < self.k).astype(np.int8)
        return out[0] if size is None else out


Space = Hypercube | TopK


def check_solution(space: Space, y) -> np.ndarray:
    y = np.asarray(y)
    if not space.contains(y):
        raise ConfigurationError(f"{y!r} is not an element of {space}")
    return y.astype(np.int8)


def encode(Y) -> np.ndarray:
    """Integer codes of binary rows; code order equals lexicographic order."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
    d = Y.shape[1]
    weights = 1 << np.arange(d - 1, -1, -1, dtype=np.int64)
    return Y @ weights


def enumerate_space(space: Space, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """Every element of ``space`` as rows of an int8 array, lexicographically ordered."""
    if space.cardinality > cap:
        raise SpaceTooLarge(
            f"space too large to enumerate: |Y| = {space.cardinality} exceeds cap {cap}"
        )
    d = space.d
    if isinstance(space, Hypercube):
        codes = np.arange(2**d, dtype=np.int64)
    else:
        combos = np.array(list(itertools.combinations(range(d), space.k)), dtype=np.int64)
        codes = np.sort(np.sum(1 << (d - 1 - combos), axis=1))
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


class StateIndex:
    """Maps enumerated solutions to their row index."""

    def __init__(self, states: np.ndarray):
        self.states = states
        self._codes = encode(states)

    def __len__(self):
        return len(self.states)

    def index(self, Y) -> np.ndarray:
        codes = encode(Y)
        idx = np.searchsorted(self._codes, codes)
        if np.any(idx >= len(self._codes)) or np.any(self._codes[np.minimum(idx, len(self._codes) - 1)] != codes):
            raise KeyError("solution not in the enumerated space")
        return idx


# ---------------------------------------------------------------------------
# neighborhood systems
# ---------------------------------------------------------------------------


def _rank_mask(keys: np.ndarray, counts) -> np.ndarray:
    """Boolean mask selecting, per row, the ``counts`` smallest keys."""
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    return ranks < np.reshape(counts, (-1, 1))


@dataclass(frozen=True)
class HammingBall:
    """Neighbors at Hamming distance 1..r (hypercube only)."""

    r: int

    def validate(self, space: Space) -> None:
        if not isinstance(space, Hypercube):
            raise ConfigurationError("HammingBall is defined on the hypercube only")
        if not 1 <= self.r <= space.d - 1:
            raise ConfigurationError(f"HammingBall radius must lie in [1, {space.d - 1}], got {self.r}")

    def degree(self, space: Space, y=None) -> int:
        return sum(comb(space.d, i) for i in range(1, self.r + 1))

    def iter_flips(self, space: Space, y) -> Iterator[tuple[int, ...]]:
        for i in range(1, self.r + 1):
            yield from itertools.combinations(range(space.d), i)

    def sample_flips(self, space: Space, y, rng: np.random.Generator) -> np.ndarray:
        weights = np.array([comb(space.d, i) for i in range(1, self.r + 1)], dtype=float)
        radius = 1 + rng.choice(self.r, p=weights / weights.sum()) if self.r > 1 else 1
        return rng.choice(space.d, size=radius, replace=False)

    def sample_mask_batch(self, space: Space, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        B, d = Y.shape
        if self.r == 1:
            mask = np.zeros((B, d), dtype=bool)
            mask[np.arange(B), rng.integers(0, d, size=B)] = True
            return mask
        weights = np.array([comb(d, i) for i in range(1, self.r + 1)], dtype=float)
        radius = 1 + rng.choice(self.r, size=B, p=weights / weights.sum())
        return _rank_mask(rng.random((B, d)), radius)


@dataclass(frozen=True)
class HammingShell:
    """Neighbors at Hamming distance exactly r (hypercube only).

    ``r = d`` is accepted: it pairs each vertex with its complement.
    """

    r: int

    def validate(self, space: Space) -> None:
        if not isinstance(space, Hypercube):
            raise ConfigurationError("HammingShell is defined on the hypercube only")
        if not 1 <= self.r <= space.d:
            raise ConfigurationError(f"HammingShell radius must lie in [1, {space.d}], got {self.r}")

    def degree(self, space: Space, y=None) -> int:
        return comb(space.d, self.r)

    def iter_flips(self, space: Space, y) -> Iterator[tuple[int, ...]]:
        yield from itertools.combinations(range(space.d), self.r)

    def sample_flips(self, space: Space, y, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(space.d, size=self.r, replace=False)

    def sample_mask_batch(self, space: Space, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        B, d = Y.shape
        if self.r == 1:
            mask = np.zeros((B, d), dtype=bool)
            mask[np.arange(B), rng.integers(0, d, size=B)] = True
            return mask
        if self.r == d:
            return np.ones((B, d), dtype=bool)
        return _rank_mask(rng.random((B, d)), np.full(B, self.r))


@dataclass(frozen=True)
class Swap:
    """Exchange ``s`` ones with ``s`` zeros (top-k only)."""

    s: int

    def validate(self, space: Space) -> None:
        if not isinstance(space, TopK):
            raise ConfigurationError("Swap is defined on the top-k set only")
        hi = min(space.k, space.d - space.k)
        if not 1 <= self.s <= hi:
            raise ConfigurationError(f"Swap size must lie in [1, {hi}], got {self.s}")

    def degree(self, space: Space, y=None) -> int:
        return comb(space.k, self.s) * comb(space.d - space.k, self.s)

    def iter_flips(self, space: Space, y) -> Iterator[tuple[int, ...]]:
        y = np.asarray(y)
        ones = np.flatnonzero(y == 1)
        zeros = np.flatnonzero(y == 0)
        for out in itertools.combinations(ones, self.s):
            for inn in itertools.combinations(zeros, self.s):
                yield tuple(sorted((*out, *inn)))

    def sample_flips(self, space: Space, y, rng: np.random.Generator) -> np.ndarray:
        y = np.asarray(y)
        out = rng.choice(np.flatnonzero(y == 1), size=self.s, replace=False)
        inn = rng.choice(np.flatnonzero(y == 0), size=self.s, replace=False)
        return np.concatenate([out, inn])

    def sample_mask_batch(self, space: Space, Y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        B, d = Y.shape
        keys = rng.random((B, d))
        ones = Y == 1
        s = np.full(B, self.s)
        return _rank_mask(np.where(ones, keys, 2.0), s) | _rank_mask(np.where(ones, 2.0, keys), s)


NeighborhoodSystem = HammingBall | HammingShell | Swap


def flip(y, flips) -> np.ndarray:
    out = np.array(y, dtype=np.int8, copy=True)
    idx = np.asarray(flips, dtype=np.int64)
    out[idx] = 1 - out[idx]
    return out


def iter_neighbors(y, system: NeighborhoodSystem, space: Space) -> Iterator[np.ndarray]:
    """Lazily yield every neighbor of ``y``."""
    system.validate(space)
    y = check_solution(space, y)
    for flips in system.iter_flips(space, y):
        yield flip(y, flips)


def neighbors(y, system: NeighborhoodSystem, space: Space) -> set[tuple[int, ...]]:
    """The full neighbor set of ``y`` as a set of tuples."""
    return {tuple(int(v) for v in n) for n in iter_neighbors(y, system, space)}


def is_connected(
    space: Space,
    systems: Sequence[NeighborhoodSystem],
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> bool:
    """Breadth-first search on the union graph of ``systems``."""
    for system in systems:
        system.validate(space)
    states = enumerate_space(space, cap)
    index = StateIndex(states)
    seen = np.zeros(len(states), dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        y = states[i]
        nbrs = [flip(y, f) for system in systems for f in system.iter_flips(space, y)]
        if not nbrs:
            continue
        for j in index.index(np.array(nbrs)):
            if not seen[j]:
                seen[j] = True
                queue.append(int(j))
    return bool(seen.all())
