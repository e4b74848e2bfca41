"""Learning loops on top of the MCMC layer.

``fit_unconditional`` recovers the direction of a Gibbs distribution from
samples (contrastive-divergence style, many independent problem instances at
once); ``fit_conditional`` trains a linear map from features to directions.
Both use the batched chain engine of :mod:`combmcmc.kernel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fy import hypercube_regularizer
from .gibbs import cumulant_batch, marginal_batch, sample_exact_batch
from .kernel import MH, run_batch
from .spaces import ConfigurationError, Hypercube, Space, TopK, check_solution

RANDOM = "random"
DATA = "data"
PERSISTENT = "persistent"
GROUND_TRUTH = "ground_truth"


class InteriorityError(ValueError):
    """The empirical mean lies on the boundary of the convex hull, so no finite MLE exists."""


class ScheduleInfeasible(RuntimeError):
    """The chain length demanded by the step-size schedule is beyond the configured maximum."""


@dataclass(frozen=True)
class InitSpec:
    """Where each chain starts at every optimizer step."""

    kind: str = PERSISTENT

    def __post_init__(self):
        if self.kind not in (RANDOM, DATA, PERSISTENT, GROUND_TRUTH):
            raise ConfigurationError(f"unknown init kind {self.kind!r}")


def space_radius(space: Space) -> float:
    return space.radius


@dataclass(frozen=True)
class ScheduleParams:
    """Step sizes ``gamma_n = a n^-b`` and chain lengths tied to the current iterate.

    ``K_n`` is the smallest integer satisfying both growth conditions, raised
    to ``K_floor`` if needed (the conditions are lower bounds, so a floor keeps
    them valid).
    """

    R_C: float
    a: float = 0.1
    b: float = 0.6
    a_prime: float = 1.0
    a_second: float = 1.0
    c: float = 0.8
    t: float = 1.0
    K_floor: int = 1
    K_max: int = 10**7

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigurationError("a must be positive")
        if not 0.5 < self.b <= 1:
            raise ConfigurationError("b must lie in (1/2, 1]")
        if not (self.a_prime > 0 and self.a_second > 0):
            raise ConfigurationError("a' and a'' must be positive")
        if not self.c > 1 - self.b / 2:
            raise ConfigurationError("c must exceed 1 - b/2")
        if not (self.R_C > 0 and self.t > 0 and self.K_floor >= 1):
            raise ConfigurationError("R_C, t and K_floor must be positive")

    @classmethod
    def for_space(cls, space: Space, **kwargs) -> "ScheduleParams":
        return cls(R_C=space_radius(space), **kwargs)

    def gamma(self, n) -> np.ndarray | float:
        return self.a * np.asarray(n, dtype=float) ** (-self.b)

    def length_bound(self, theta_norm) -> np.ndarray:
        """``floor(1 + a' exp(8 R_C ||theta|| / t))``; the chain length must exceed it."""
        expo = 8.0 * self.R_C * np.asarray(theta_norm, dtype=float) / self.t
        if np.any(expo > math.log(self.K_max)):
            raise ScheduleInfeasible(
                f"chain length bound exceeds K_max={self.K_max} (||theta|| up to {np.max(theta_norm):.3f})"
            )
        return np.floor(1.0 + self.a_prime * np.exp(expo)).astype(np.int64)

    def _min_after(self, n: int, K_prev) -> np.ndarray:
        """Smallest ``K`` with ``1/sqrt(K) - 1/sqrt(K_prev) <= a'' n^-c``."""
        K_prev = np.asarray(K_prev, dtype=float)
        slack = 1.0 / np.sqrt(K_prev) + self.a_second * float(n) ** (-self.c)
        K = np.where(slack >= 1.0, 1.0, np.ceil(1.0 / np.maximum(slack, 1e-300) ** 2))
        K = K.astype(np.int64)
        # guard against rounding at the boundary
        bad = 1.0 / np.sqrt(K) - 1.0 / np.sqrt(K_prev) > self.a_second * float(n) ** (-self.c)
        return K + bad

    def next_lengths(self, n: int, K_prev, theta_norm) -> np.ndarray:
        """``K_n`` given ``K_{n-1}`` and ``||theta_{n-1}||``; ``K_prev=None`` at ``n = 1``."""
        K = np.maximum(self.length_bound(theta_norm) + 1, self.K_floor)
        if K_prev is not None:
            K = np.maximum(K, self._min_after(n, K_prev))
        return K

    def check(self, n: int, gamma, K_n, K_prev, theta_prev_norm) -> dict:
        """Evaluate the three schedule conditions at step ``n``."""
        K_n = np.asarray(K_n)
        ok_i = bool(np.allclose(gamma, self.a * n ** (-self.b), rtol=1e-12, atol=0))
        ok_ii = bool(np.all(K_n > self.length_bound(theta_prev_norm)))
        if K_prev is None:
            ok_iii = True
        else:
            diff = 1.0 / np.sqrt(K_n) - 1.0 / np.sqrt(np.asarray(K_prev, dtype=float))
            ok_iii = bool(np.all(diff <= self.a_second * float(n) ** (-self.c)))
        return {"i": ok_i, "ii": ok_ii, "iii": ok_iii}


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adaptive-moment descent on an array of parameters."""

    def __init__(self, config: AdamConfig, shape):
        self.config = config
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.n = 0

    def update(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        cfg = self.config
        self.n += 1
        self.m = cfg.beta1 * self.m + (1 - cfg.beta1) * grad
        self.v = cfg.beta2 * self.v + (1 - cfg.beta2) * grad**2
        m_hat = self.m / (1 - cfg.beta1**self.n)
        v_hat = self.v / (1 - cfg.beta2**self.n)
        return params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Targets (and optional features) for one learning problem.

    A *population* dataset has no finite sample: its mean is the exact
    marginal at ``theta0`` and data-based initialization draws exact samples.
    """

    space: Space
    targets: np.ndarray | None = None
    features: np.ndarray | None = None
    theta0: np.ndarray | None = None
    t: float = 1.0

    def __post_init__(self):
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.int8).reshape(-1, self.space.d)
            for y in self.targets:
                check_solution(self.space, y)
            if self.features is not None:
                self.features = np.asarray(self.features, dtype=float)
                if self.features.shape[0] != self.targets.shape[0]:
                    raise ValueError("features and targets must have the same number of rows")
        elif self.theta0 is None:
            raise ValueError("a dataset needs targets or a population parameter")

    @classmethod
    def population(cls, space: Space, theta0, t: float = 1.0) -> "Dataset":
        return cls(space, theta0=np.asarray(theta0, dtype=float), t=t)

    @property
    def is_population(self) -> bool:
        return self.targets is None

    def __len__(self) -> int:
        return 0 if self.targets is None else self.targets.shape[0]

    def mean(self) -> np.ndarray:
        if self.is_population:
            return marginal_batch(self.space, self.theta0, self.t)[0]
        if len(self) == 0:
            raise ValueError("empty dataset has no mean")
        return self.targets.mean(axis=0)


def generate_unconditional(space: Space, theta0, t: float, N: int, rng: np.random.Generator) -> Dataset:
    """``N`` independent exact draws from the Gibbs distribution at ``theta0``."""
    theta0 = np.asarray(theta0, dtype=float)
    if N == 0:
        return Dataset(space, np.zeros((0, space.d), dtype=np.int8), theta0=theta0, t=t)
    Y = sample_exact_batch(space, np.broadcast_to(theta0, (N, space.d)), t, rng)
    return Dataset(space, Y, theta0=theta0, t=t)


def is_interior(space: Space, ybar) -> bool:
    """Whether ``ybar`` lies in the relative interior of the convex hull of ``space``."""
    ybar = np.asarray(ybar)
    inside = bool(np.all((ybar > 0) & (ybar < 1)))
    if isinstance(space, TopK):
        inside = inside and abs(float(ybar.sum()) - space.k) < 1e-9
    return inside


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def projector(space: Space) -> np.ndarray:
    """Identity on the hypercube; ``I - 11^T/d`` on the top-k set."""
    d = space.d
    if isinstance(space, TopK):
        return np.eye(d) - np.ones((d, d)) / d
    return np.eye(d)


def distance_sq(space: Space, theta_hat, theta0) -> np.ndarray:
    """Squared distance per row, modulo the directions the model cannot identify."""
    diff = np.atleast_2d(np.asarray(theta_hat) - np.asarray(theta0))
    if isinstance(space, TopK):
        diff = diff - diff.mean(axis=1, keepdims=True)
    return np.sum(diff**2, axis=1)


def population_loss(space: Space, theta_hat, ybar, t: float) -> np.ndarray:
    """Fenchel-Young loss at the mean target, per row (top-k: up to a constant)."""
    theta_hat = np.atleast_2d(theta_hat)
    ybar = np.atleast_2d(ybar)
    value = cumulant_batch(space, theta_hat, t) - np.sum(theta_hat * ybar, axis=1)
    if isinstance(space, Hypercube):
        value = value + np.array([hypercube_regularizer(mu, t) for mu in ybar])
    return value


def metrics(trajectory, theta0, space: Space, ybar=None, t: float = 1.0) -> list[dict]:
    """Per-step ``distance_sq`` (and ``loss_proxy`` when ``ybar`` is given), averaged over rows."""
    records = []
    for n, theta in enumerate(trajectory):
        rec = {"step": n, "distance_sq": float(np.mean(distance_sq(space, theta, theta0)))}
        if ybar is not None:
            rec["loss_proxy"] = float(np.mean(population_loss(space, theta, ybar, t)))
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# unconditional fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    theta: np.ndarray
    records: list[dict]
    trajectory: np.ndarray | None = field(default=None, repr=False)
    final_states: np.ndarray | None = field(default=None, repr=False)


class _Starts:
    """Resolves chain starting points for a stack of ``M`` instances with ``C`` chains each."""

    def __init__(self, space: Space, datasets: Sequence[Dataset], init: InitSpec, C: int):
        if init.kind == GROUND_TRUTH:
            raise ConfigurationError("ground-truth init needs a conditional dataset")
        self.space = space
        self.init = init
        self.C = C
        self.population = all(ds.is_population for ds in datasets)
        if self.population:
            self.theta0 = np.vstack([ds.theta0 for ds in datasets])
            self.t = datasets[0].t
            self.samples = None
        else:
            if any(ds.is_population for ds in datasets):
                raise ValueError("cannot mix population and finite datasets")
            sizes = {len(ds) for ds in datasets}
            if len(sizes) != 1:
                raise ValueError("all instances must have the same dataset size")
            self.samples = np.stack([ds.targets for ds in datasets]) if sizes != {0} else None
        self.has_data = self.population or self.samples is not None

    def _data(self, rng) -> np.ndarray:
        M = len(self.theta0) if self.population else self.samples.shape[0]
        if self.population:
            return sample_exact_batch(self.space, np.repeat(self.theta0, self.C, axis=0), self.t, rng)
        N = self.samples.shape[1]
        pick = rng.integers(0, N, size=M * self.C)
        return self.samples[np.repeat(np.arange(M), self.C), pick]

    def __call__(self, previous, rng, B: int) -> np.ndarray:
        kind = self.init.kind
        if kind == PERSISTENT and previous is not None:
            return previous
        if kind == RANDOM or not self.has_data:
            return self.space.random(rng, size=B)
        return self._data(rng)


def fit_unconditional(
    space: Space,
    datasets: Sequence[Dataset],
    proposal,
    theta_hat0: np.ndarray,
    rng: np.random.Generator,
    K: int = 1000,
    optimizer: AdamConfig | ScheduleParams | None = None,
    n_max: int = 1000,
    init: InitSpec = InitSpec(PERSISTENT),
    chains: int = 1,
    t: float = 1.0,
    theta0: np.ndarray | None = None,
    keep_trajectory: bool = True,
) -> FitResult:
    """Fit one direction per dataset by descending the Fenchel-Young loss at the data mean.

    With :class:`AdamConfig` every step runs ``K`` transitions per chain; with
    :class:`ScheduleParams` the step size and per-instance chain length follow
    the schedule and its conditions are recorded at every step.  ``theta0``
    (one row per instance) enables the distance metric.
    """
    optimizer = AdamConfig() if optimizer is None else optimizer
    M = len(datasets)
    theta = np.array(np.atleast_2d(theta_hat0), dtype=float)
    if theta.shape != (M, space.d):
        raise ValueError(f"theta_hat0 must have shape ({M}, {space.d})")
    ybar = np.vstack([ds.mean() for ds in datasets])
    for m, row in enumerate(ybar):
        if not is_interior(space, row):
            raise InteriorityError(f"instance {m}: dataset mean is not in the interior of the hull")
    starts = _Starts(space, datasets, init, chains)
    adam = Adam(optimizer, theta.shape) if isinstance(optimizer, AdamConfig) else None
    C = chains
    B = M * C
    states = None
    K_prev = None
    trajectory = [theta.copy()] if keep_trajectory else None
    records = []
    for n in range(1, n_max + 1):
        if adam is None:
            gamma = float(optimizer.gamma(n))
            K_inst = optimizer.next_lengths(n, K_prev, np.linalg.norm(theta, axis=1))
            checks = optimizer.check(n, gamma, K_inst, K_prev, np.linalg.norm(theta, axis=1))
            K_rows = np.repeat(K_inst, C)
        else:
            gamma = optimizer.lr
            K_inst = np.full(M, K)
            K_rows = K
            checks = None
        Y0 = starts(states, rng, B)
        out = run_batch(np.repeat(theta, C, axis=0), proposal, K_rows, Y0, rng, t=t, mode=MH, chains_per_instance=C)
        states = out.final_states
        y_hat = out.means.reshape(M, C, space.d).mean(axis=1)
        grad = y_hat - ybar
        theta = adam.update(theta, grad) if adam is not None else theta - gamma * grad
        K_prev = K_inst
        rec = {
            "step": n,
            "loss_proxy": float(np.mean(population_loss(space, theta, ybar, t))),
            "distance_sq": float(np.mean(distance_sq(space, theta, theta0))) if theta0 is not None else None,
            "acceptance_rate": float(np.mean(out.acceptance_rate)),
            "K_used": float(np.mean(K_inst)),
            "gamma_used": gamma,
        }
        if checks is not None:
            rec["schedule_ok"] = checks
        records.append(rec)
        if keep_trajectory:
            trajectory.append(theta.copy())
    return FitResult(theta, records, np.array(trajectory) if keep_trajectory else None, states)


# ---------------------------------------------------------------------------
# conditional fitting
# ---------------------------------------------------------------------------


@dataclass
class LinearModel:
    """``g_W(x) = W x`` with ``W`` of shape ``(d, p)``."""

    W: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.W.T


def fit_conditional(
    space: Space,
    dataset: Dataset,
    model: LinearModel,
    proposal,
    rng: np.random.Generator,
    K: int = 100,
    optimizer: AdamConfig | float | None = None,
    n_max: int = 200,
    batch_size: int = 32,
    init: InitSpec = InitSpec(GROUND_TRUTH),
    t: float = 1.0,
    W_true: np.ndarray | None = None,
    keep_trajectory: bool = True,
) -> FitResult:
    """Mini-batch training of a linear model; a float ``optimizer`` means plain SGD with that step."""
    if dataset.features is None or dataset.targets is None:
        raise ValueError("conditional fitting needs features and targets")
    X, Y = dataset.features, dataset.targets
    W = np.array(model.W, dtype=float)
    if W.shape != (space.d, X.shape[1]):
        raise ValueError(f"W must have shape ({space.d}, {X.shape[1]}), got {W.shape}")
    if init.kind == PERSISTENT:
        raise ConfigurationError("persistent init is not defined for per-sample chains")
    optimizer = AdamConfig() if optimizer is None else optimizer
    adam = Adam(optimizer, W.shape) if isinstance(optimizer, AdamConfig) else None
    N = X.shape[0]
    Bsz = min(batch_size, N)
    trajectory = [W.copy()] if keep_trajectory else None
    records = []
    for n in range(1, n_max + 1):
        idx = rng.choice(N, size=Bsz, replace=False)
        theta = X[idx] @ W.T
        if init.kind == GROUND_TRUTH:
            Y0 = Y[idx]
        elif init.kind == DATA:
            Y0 = Y[rng.integers(0, N, size=Bsz)]
        else:
            Y0 = space.random(rng, size=Bsz)
        out = run_batch(theta, proposal, K, Y0, rng, t=t, mode=MH)
        grad = (out.means - Y[idx]).T @ X[idx] / Bsz
        W = adam.update(W, grad) if adam is not None else W - float(optimizer) * grad
        rec = {
            "step": n,
            "loss_proxy": conditional_loss(space, W, X, Y, t),
            "distance_sq": float(np.sum((W - W_true) ** 2)) if W_true is not None else None,
            "acceptance_rate": float(np.mean(out.acceptance_rate)),
            "K_used": K,
            "gamma_used": optimizer.lr if adam is not None else float(optimizer),
        }
        records.append(rec)
        if keep_trajectory:
            trajectory.append(W.copy())
    return FitResult(W, records, np.array(trajectory) if keep_trajectory else None)


def conditional_loss(space: Space, W, X, Y, t: float = 1.0) -> float:
    """Exact Fenchel-Young loss averaged over the dataset (binary targets)."""
    theta = np.atleast_2d(X) @ np.asarray(W).T
    return float(np.mean(cumulant_batch(space, theta, t) - np.sum(theta * Y, axis=1)))
