"""Fenchel-Young losses and their one-step MCMC surrogates.

``fy_loss_exact``/``fy_gradient_exact`` use the exact oracles of
:mod:`combmcmc.gibbs`; ``fy_gradient_mcmc`` replaces the marginal with a chain
average.  The remaining functions describe a single transition started at a
target ``y``: its expectation, and the convex potential ``F_y`` whose gradient
is that expectation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .gibbs import GibbsModel, UnsupportedSpace, brute_force_distribution, cumulant, marginal, score
from .kernel import ChainConfig, run
from .spaces import Hypercube, Space

DEGREE_CAP = 10**5


@dataclass
class GradientEstimate:
    grad: np.ndarray
    estimate: np.ndarray
    meta: dict = field(default_factory=dict)


def _is_vertex(y) -> bool:
    y = np.asarray(y)
    return bool(np.all((y == 0) | (y == 1)))


def hypercube_regularizer(mu, t: float = 1.0) -> float:
    """Conjugate of ``t * sum log(1 + exp(theta / t))`` at ``mu`` in ``[0, 1]^d``."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0) or np.any(mu > 1):
        return np.inf
    return float(t * np.sum(xlogy(mu, mu) + xlogy(1 - mu, 1 - mu)))


def fy_loss_exact(space: Space, model: GibbsModel, y) -> float:
    """``A_t(theta) + Omega_t(y) - <theta, y>``.

    At a binary ``y`` the regularizer equals ``-phi(y)``, so the value is exact for
    every space with an exact cumulant.  A fractional ``y`` is handled exactly on
    the hypercube (zero or linear ``phi``); on the top-k set the value omits the
    regularizer and is defined up to an additive constant in ``y``.
    """
    y = np.asarray(y)
    A = cumulant(space, model)
    if _is_vertex(y):
        phi = model.phi(y) if model.phi is not None else 0.0
        return float(A - np.dot(model.theta, y) - phi)
    w = model.effective_theta()
    if w is None:
        raise UnsupportedSpace("fractional targets need a zero or linear structural term")
    if isinstance(space, Hypercube):
        return float(A + hypercube_regularizer(y, model.temperature) - np.dot(w, y))
    return float(A - np.dot(w, y))


def fy_gradient_exact(space: Space, model: GibbsModel, y) -> np.ndarray:
    return marginal(space, model) - np.asarray(y, dtype=float)


def fy_gradient_mcmc(
    space: Space,
    model: GibbsModel,
    proposal,
    config: ChainConfig,
    y_target,
    rng: np.random.Generator,
    init=None,
) -> GradientEstimate:
    """Chain mean minus target.  ``init="target"`` starts every chain at ``y_target``."""
    y_target = np.asarray(y_target)
    if isinstance(init, str):
        if init != "target":
            raise ValueError(f"unknown init {init!r}")
        init = y_target
    result = run(space, model, proposal, config, rng, init=init)
    meta = {"K": config.K, "K0": config.K0, "chains": config.chains, "acceptance_rate": result.acceptance_rate}
    return GradientEstimate(result.estimate - y_target, result.estimate, meta)


def jacobian_exact(space: Space, model: GibbsModel) -> np.ndarray:
    """``(1/t) Cov[Y]`` under the enumerated Gibbs distribution."""
    return brute_force_distribution(space, model).covariance() / model.temperature


# ---------------------------------------------------------------------------
# one transition from a fixed solution
# ---------------------------------------------------------------------------


def _transitions(model: GibbsModel, proposal, y, theta=None):
    """``(y2, log q(y, y2), log q(y2, y), delta)`` over the moves out of ``y``."""
    y = np.asarray(y, dtype=np.int8)
    m = model if theta is None else model.with_theta(theta)
    base = score(y, m)
    count = 0
    for y2, q in proposal.support(y):
        if np.array_equal(y2, y):
            continue
        count += 1
        if count > DEGREE_CAP:
            raise ValueError(f"neighborhood exceeds the degree cap {DEGREE_CAP}")
        yield y2, np.log(q), np.log(proposal.density(y2, y)), score(y2, m) - base


def expected_first_iterate(model: GibbsModel, proposal, y) -> np.ndarray:
    """``E[Y^(1)]`` for one MH transition started at ``y``."""
    y = np.asarray(y, dtype=np.int8)
    t = model.temperature
    out = y.astype(float)
    for y2, lq, lq_rev, delta in _transitions(model, proposal, y):
        log_acc = min(0.0, lq_rev - lq + delta / t)
        out += np.exp(lq + log_acc) * (y2 - y)
    return out


def expected_first_iterate_limit(model: GibbsModel, proposal, y, regime: str) -> np.ndarray:
    """Limit of :func:`expected_first_iterate` as ``t -> 0`` (``"cold"``) or ``t -> inf`` (``"hot"``).

    The cold limit moves only toward strictly improving neighbors.
    """
    y = np.asarray(y, dtype=np.int8)
    out = y.astype(float)
    for y2, lq, lq_rev, delta in _transitions(model, proposal, y):
        if regime == "cold":
            weight = np.exp(lq) if delta > 0 else 0.0
        elif regime == "hot":
            weight = np.exp(min(lq, lq_rev))
        else:
            raise ValueError("regime must be 'cold' or 'hot'")
        out += weight * (y2 - y)
    return out


def one_step_potential(model: GibbsModel, proposal, y, theta_eval) -> float:
    """``F_y(theta)``: convex, with gradient equal to the expected first iterate."""
    y = np.asarray(y, dtype=np.int8)
    theta_eval = np.asarray(theta_eval, dtype=float)
    t = model.temperature
    total = float(np.dot(theta_eval, y))
    for _, lq, lq_rev, delta in _transitions(model, proposal, y, theta_eval):
        log_alpha = lq_rev - lq + delta / t
        if log_alpha <= 0:
            total += t * np.exp(lq + log_alpha)
        else:
            total += t * np.exp(lq) * (1.0 + log_alpha)
    return total


def smoothness_constant(model: GibbsModel, proposal, y) -> float:
    """``E_q ||Y - y||^2 / t`` for a proposal started at ``y``."""
    y = np.asarray(y, dtype=np.int8)
    total = sum(q * float(np.sum((y2 - y) ** 2)) for y2, q in proposal.support(y))
    return total / model.temperature


def dataset_potential(model: GibbsModel, proposal, Y, theta_eval) -> float:
    return float(np.mean([one_step_potential(model, proposal, y, theta_eval) for y in Y]))


def dataset_expected_first_iterate(model: GibbsModel, proposal, Y) -> np.ndarray:
    return np.mean([expected_first_iterate(model, proposal, y) for y in Y], axis=0)
