"""Exact oracles for the Gibbs distribution ``pi(y) ~ exp((<theta, y> + phi(y)) / t)``.

The hypercube factorizes coordinate-wise; the top-k set is handled by a
forward/backward dynamic program in the (logsumexp, +) semiring, which gives
the cumulant, the marginals and exact samples in ``O(d k)``.  Anything else
falls back to brute-force enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

from .spaces import (
    DEFAULT_ENUMERATION_CAP,
    ConfigurationError,
    Hypercube,
    Space,
    TopK,
    enumerate_space,
)


class UnsupportedSpace(ValueError):
    """No exact oracle exists for this (space, structural term) pair."""


@dataclass(frozen=True)
class LinearCost:
    """Structural term ``phi(y) = -<c, y>``."""

    c: np.ndarray

    def __call__(self, y) -> float:
        return -float(np.dot(self.c, y))


@dataclass
class GibbsModel:
    """Direction ``theta``, temperature ``t`` and optional structural term ``phi``.

    ``phi`` is ``None`` (zero), a :class:`LinearCost`, or any callable mapping a
    solution to a float.
    """

    theta: np.ndarray
    temperature: float = 1.0
    phi: LinearCost | Callable | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if isinstance(self.phi, LinearCost):
            c = np.asarray(self.phi.c, dtype=float)
            if c.shape != self.theta.shape:
                raise ValueError("LinearCost vector must have the same length as theta")
            self.phi = LinearCost(c)

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def effective_theta(self) -> np.ndarray | None:
        """``theta`` with a linear structural term folded in, or None if phi is nonlinear."""
        if self.phi is None:
            return self.theta
        if isinstance(self.phi, LinearCost):
            return self.theta - self.phi.c
        return None

    def with_theta(self, theta) -> "GibbsModel":
        return GibbsModel(theta, self.temperature, self.phi)


@dataclass
class DistributionTable:
    support: np.ndarray
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to one")

    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        centered = self.support - mu
        return (centered * self.probs[:, None]).T @ centered


def _check_dim(y, model: GibbsModel) -> np.ndarray:
    y = np.asarray(y)
    if y.shape[-1] != model.d:
        raise ValueError(f"dimension mismatch: solution has {y.shape[-1]} coords, theta has {model.d}")
    return y


def score(y, model: GibbsModel) -> float:
    """Untempered objective ``<theta, y> + phi(y)``."""
    y = _check_dim(y, model)
    value = float(np.dot(model.theta, y))
    if model.phi is not None:
        value += model.phi(y)
    return value


def scores(Y, model: GibbsModel) -> np.ndarray:
    Y = _check_dim(np.atleast_2d(Y), model)
    if model.phi is None or isinstance(model.phi, LinearCost):
        return Y @ model.effective_theta()
    return Y @ model.theta + np.array([model.phi(y) for y in Y])


# ---------------------------------------------------------------------------
# top-k dynamic program
# ---------------------------------------------------------------------------


def _topk_tables(w: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward/backward log-partition tables for weights ``w`` (already divided by t).

    ``fwd[i, j]`` sums over the first ``i`` coordinates holding ``j`` ones;
    ``bwd[i, j]`` over coordinates ``i..d-1`` holding ``j`` ones.
    """
    d = w.shape[0]
    fwd = np.full((d + 1, k + 1), -np.inf)
    fwd[0, 0] = 0.0
    for i in range(d):
        fwd[i + 1, 0] = fwd[i, 0]
        fwd[i + 1, 1:] = np.logaddexp(fwd[i, 1:], fwd[i, :-1] + w[i])
    bwd = np.full((d + 1, k + 1), -np.inf)
    bwd[d, 0] = 0.0
    for i in range(d - 1, -1, -1):
        bwd[i, 0] = bwd[i + 1, 0]
        bwd[i, 1:] = np.logaddexp(bwd[i + 1, 1:], bwd[i + 1, :-1] + w[i])
    return fwd, bwd


def _topk_marginal(w: np.ndarray, k: int) -> np.ndarray:
    fwd, bwd = _topk_tables(w, k)
    log_z = fwd[-1, k]
    d = w.shape[0]
    out = np.empty(d)
    j = np.arange(k)
    for i in range(d):
        # y_i = 1 with j ones before i and k-1-j ones after
        out[i] = np.exp(logsumexp(fwd[i, j] + w[i] + bwd[i + 1, k - 1 - j]) - log_z)
    return out


def _topk_sample(w: np.ndarray, k: int, rng: np.random.Generator, n: int) -> np.ndarray:
    fwd, _ = _topk_tables(w, k)
    d = w.shape[0]
    out = np.zeros((n, d), dtype=np.int8)
    remaining = np.full(n, k)
    for i in range(d - 1, -1, -1):
        live = remaining > 0
        r = remaining[live]
        # P(y_i = 1 | r ones among coordinates 0..i)
        log_p = fwd[i, r - 1] + w[i] - fwd[i + 1, r]
        take = rng.random(r.shape[0]) < np.exp(log_p)
        rows = np.flatnonzero(live)[take]
        out[rows, i] = 1
        remaining[rows] -= 1
    return out


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def brute_force_distribution(space: Space, model: GibbsModel, cap: int = DEFAULT_ENUMERATION_CAP) -> DistributionTable:
    states = enumerate_space(space, cap)
    s = scores(states, model) / model.temperature
    log_p = s - logsumexp(s)
    probs = np.exp(log_p)
    probs /= probs.sum()
    return DistributionTable(states, probs)


def cumulant(space: Space, model: GibbsModel) -> float:
    """``A_t(theta) = t log sum_y exp(score(y) / t)``."""
    t = model.temperature
    w = model.effective_theta()
    if w is not None and isinstance(space, Hypercube):
        return float(t * np.sum(np.logaddexp(0.0, w / t)))
    if w is not None and isinstance(space, TopK):
        fwd, _ = _topk_tables(w / t, space.k)
        return float(t * fwd[-1, space.k])
    try:
        states = enumerate_space(space)
    except ValueError as exc:
        raise UnsupportedSpace("no exact cumulant for a non-enumerable space with nonlinear phi") from exc
    return float(t * logsumexp(scores(states, model) / t))


def marginal(space: Space, model: GibbsModel) -> np.ndarray:
    """``E_pi[Y]``, the layer output."""
    t = model.temperature
    w = model.effective_theta()
    if w is not None and isinstance(space, Hypercube):
        return expit(w / t)
    if w is not None and isinstance(space, TopK):
        return _topk_marginal(w / t, space.k)
    try:
        return brute_force_distribution(space, model).mean()
    except ValueError as exc:
        raise UnsupportedSpace("no exact marginal for a non-enumerable space with nonlinear phi") from exc


def sample_exact(space: Space, model: GibbsModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` i.i.d. draws from pi, as rows of an int8 array."""
    t = model.temperature
    w = model.effective_theta()
    if w is None:
        raise UnsupportedSpace("exact sampling requires phi to be zero or linear")
    if isinstance(space, Hypercube):
        return (rng.random((n, space.d)) < expit(w / t)).astype(np.int8)
    if isinstance(space, TopK):
        return _topk_sample(w / t, space.k, rng, n)
    raise UnsupportedSpace(f"no exact sampler for {space}")


def sample_exact_batch(space: Space, theta: np.ndarray, t: float, rng: np.random.Generator) -> np.ndarray:
    """One exact draw per row of ``theta`` (phi = 0)."""
    theta = np.atleast_2d(theta)
    if isinstance(space, Hypercube):
        return (rng.random(theta.shape) < expit(theta / t)).astype(np.int8)
    return np.vstack([_topk_sample(row / t, space.k, rng, 1) for row in theta])


def map_solve(space: Space, model: GibbsModel) -> np.ndarray:
    """Exact maximizer of the score; ties go to the lexicographically smallest solution."""
    w = model.effective_theta()
    if w is not None and isinstance(space, Hypercube):
        return (w > 0).astype(np.int8)
    if w is not None and isinstance(space, TopK):
        # lexicographic tie-break prefers ones at later coordinates
        order = np.lexsort((-np.arange(space.d), -w))
        y = np.zeros(space.d, dtype=np.int8)
        y[order[: space.k]] = 1
        return y
    try:
        states = enumerate_space(space)
    except ValueError as exc:
        raise UnsupportedSpace("no exact MAP for a non-enumerable space with nonlinear phi") from exc
    return states[int(np.argmax(scores(states, model)))]


def marginal_batch(space: Space, theta: np.ndarray, t: float) -> np.ndarray:
    theta = np.atleast_2d(theta)
    if isinstance(space, Hypercube):
        return expit(theta / t)
    return np.vstack([_topk_marginal(row / t, space.k) for row in theta])


def cumulant_batch(space: Space, theta: np.ndarray, t: float) -> np.ndarray:
    theta = np.atleast_2d(theta)
    if isinstance(space, Hypercube):
        return t * np.sum(np.logaddexp(0.0, theta / t), axis=1)
    return np.array([t * _topk_tables(row / t, space.k)[0][-1, space.k] for row in theta])


def check_space_for(space: Space, model: GibbsModel) -> None:
    if space.d != model.d:
        raise ConfigurationError(f"space dimension {space.d} differs from theta dimension {model.d}")
