"""The MCMC layer: simulated annealing / Metropolis-Hastings over a neighborhood graph.

Two engines share the same transition rule.  ``step``/``run`` work on a single
solution with any proposal object (including state-dependent mixtures);
``run_batch`` advances many independent chains at once with numpy and is what
the experiment drivers use on the hypercube and top-k sets.  ``kernel_matrix``
assembles the exact transition matrix on enumerable spaces for verification.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .gibbs import DistributionTable, GibbsModel, score, scores
from .proposals import MixtureProposal, mixture_correction, mixture_draw
from .spaces import DEFAULT_ENUMERATION_CAP, Space, StateIndex, enumerate_space

MH = "MH"
SA = "SA"


# ---------------------------------------------------------------------------
# temperature schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantSchedule:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("temperature must be positive")

    def __call__(self, k: int) -> float:
        return self.t

    def array(self, K: int) -> np.ndarray:
        return np.full(K, self.t)

    @property
    def constant(self) -> bool:
        return True


@dataclass(frozen=True)
class GeometricTruncatedSchedule:
    """``t_k = max(gamma^k * t0, t_min)``."""

    t0: float
    gamma: float
    t_min: float

    def __post_init__(self):
        if not (self.t0 > 0 and self.t_min > 0 and 0 < self.gamma <= 1):
            raise ValueError("need t0 > 0, t_min > 0 and gamma in (0, 1]")

    @classmethod
    def with_burn_in(cls, K0: int, gamma: float = 0.995, t: float = 1.0) -> "GeometricTruncatedSchedule":
        """Cooling that reaches ``t`` exactly at step ``K0``."""
        return cls(t / gamma**K0, gamma, t)

    def __call__(self, k: int) -> float:
        return max(self.gamma**k * self.t0, self.t_min)

    def array(self, K: int) -> np.ndarray:
        return np.maximum(self.gamma ** np.arange(K) * self.t0, self.t_min)

    @property
    def constant(self) -> bool:
        return self.gamma == 1.0 or self.t0 <= self.t_min


@dataclass
class ChainConfig:
    """Iteration budget for one layer evaluation.

    ``schedule=None`` means a constant schedule at the model temperature.
    """

    mode: str = MH
    K: int = 1000
    K0: int = 0
    chains: int = 1
    schedule: ConstantSchedule | GeometricTruncatedSchedule | None = None

    def __post_init__(self):
        if self.mode not in (MH, SA):
            raise ValueError(f"mode must be 'MH' or 'SA', got {self.mode!r}")
        if not self.K > self.K0 >= 0:
            raise ValueError("need K > K0 >= 0")
        if self.chains < 1:
            raise ValueError("need at least one chain")

    def schedule_for(self, model: GibbsModel):
        return self.schedule if self.schedule is not None else ConstantSchedule(model.temperature)


# ---------------------------------------------------------------------------
# scalar engine
# ---------------------------------------------------------------------------


def _accept(log_p: float, rng: np.random.Generator) -> bool:
    u = rng.random()
    return bool(log_p >= 0 or u == 0.0 or np.log(u) <= log_p)


def step(y, model: GibbsModel, proposal, t_k: float, mode: str, rng: np.random.Generator):
    """One transition of SA / MH.  Returns ``(next_state, accepted)``."""
    candidate = proposal.draw(y, rng)
    delta = score(candidate, model) - score(y, model)
    log_p = delta / t_k
    if mode == MH:
        log_p += np.log(proposal.density(candidate, y)) - np.log(proposal.density(y, candidate))
    if _accept(log_p, rng):
        return candidate, True
    return y, False


def mixture_step(y, model: GibbsModel, mix: MixtureProposal, t: float, rng: np.random.Generator):
    """One transition of the neighborhood-mixture chain: ``(next_state, accepted, member)``."""
    s, candidate = mixture_draw(mix, y, rng)
    alpha = mixture_correction(mix, s, y, candidate)
    log_p = np.log(alpha) + (score(candidate, model) - score(y, model)) / t
    if _accept(log_p, rng):
        return candidate, True, s
    return y, False, s


@dataclass
class ChainState:
    current: np.ndarray
    rng: np.random.Generator
    step: int = 0
    sum_of_iterates: np.ndarray = None

    def __post_init__(self):
        if self.sum_of_iterates is None:
            self.sum_of_iterates = np.zeros(self.current.shape[0])


@dataclass
class RunResult:
    estimate: np.ndarray
    final_states: np.ndarray
    acceptance_rate: float
    trajectory: list | None = field(default=None, repr=False)


def run(
    space: Space,
    model: GibbsModel,
    proposal,
    config: ChainConfig,
    rng: np.random.Generator,
    init=None,
    record: bool = False,
) -> RunResult:
    """Run ``config.chains`` chains of ``config.K`` transitions each.

    MH returns the average over chains of the mean of iterates ``K0+1..K``;
    SA returns the final iterate of the best-scoring chain.  ``init`` is one
    solution, one solution per chain, or None for uniform random starts.
    Chain ``c`` uses the ``c``-th child of ``rng``.
    """
    schedule = config.schedule_for(model)
    is_mix = isinstance(proposal, MixtureProposal)
    if is_mix and not schedule.constant:
        raise ValueError("the mixture chain runs at a constant temperature")
    temps = schedule.array(config.K)
    children = rng.spawn(config.chains)
    if init is None:
        starts = [space.random(child) for child in children]
    else:
        init = np.asarray(init, dtype=np.int8)
        starts = [init] * config.chains if init.ndim == 1 else list(init)

    means, finals, accepted_total, trajectory = [], [], 0, [] if record else None
    for c, (child, y) in enumerate(zip(children, starts)):
        state = ChainState(np.array(y, dtype=np.int8), child)
        for k in range(config.K):
            if is_mix:
                new, accepted, _ = mixture_step(state.current, model, proposal, temps[k], child)
            else:
                new, accepted = step(state.current, model, proposal, temps[k], config.mode, child)
            state.current = new
            state.step = k + 1
            accepted_total += accepted
            if state.step > config.K0:
                state.sum_of_iterates = state.sum_of_iterates + new
            if record:
                trajectory.append((c, state.step, float(temps[k]), bool(accepted), score(new, model)))
        means.append(state.sum_of_iterates / (config.K - config.K0))
        finals.append(state.current)

    finals = np.array(finals)
    if config.mode == SA:
        estimate = finals[int(np.argmax(scores(finals, model)))].astype(float)
    else:
        estimate = np.mean(means, axis=0)
    return RunResult(estimate, finals, accepted_total / (config.K * config.chains), trajectory)


def write_trajectory_csv(path, trajectory) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "k", "t_k", "accepted", "score"])
        for row in trajectory:
            writer.writerow([row[0], row[1], repr(row[2]), int(row[3]), repr(row[4])])


# ---------------------------------------------------------------------------
# batched engine
# ---------------------------------------------------------------------------


@dataclass
class BatchResult:
    means: np.ndarray
    final_states: np.ndarray
    acceptance_rate: np.ndarray
    mse_curve: np.ndarray | None = None


def run_batch(
    theta: np.ndarray,
    proposal,
    K,
    Y0: np.ndarray,
    rng: np.random.Generator,
    schedule=None,
    t: float = 1.0,
    K0: int = 0,
    mode: str = MH,
    chains_per_instance: int = 1,
    reference: np.ndarray | None = None,
) -> BatchResult:
    """Advance one chain per row of ``Y0`` with direction ``theta[row]`` (phi = 0).

    ``K`` is a scalar or a per-row array of chain lengths; a row stops moving
    once it has made its own number of transitions.  Rows are grouped
    instance-major in blocks of ``chains_per_instance``; when ``reference``
    (one exact marginal per instance) is given, the returned ``mse_curve[T - K0 - 1]``
    is the instance-averaged squared error of the chain-averaged running mean
    at step ``T``.
    """
    Y = np.array(Y0, dtype=np.int8, copy=True)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), Y.shape)
    B = Y.shape[0]
    lengths = np.broadcast_to(np.asarray(K, dtype=np.int64), (B,))
    K_max = int(lengths.max())
    if np.any(lengths <= K0):
        raise ValueError("every chain length must exceed the burn-in")
    temps = (schedule if schedule is not None else ConstantSchedule(t)).array(K_max)
    sums = np.zeros(Y.shape)
    accepted = np.zeros(B)
    C = chains_per_instance
    curve = None
    if reference is not None:
        reference = np.asarray(reference, dtype=float)
        curve = np.empty(K_max - K0)
    sign_theta_base = theta  # score change of flipping i is theta_i * (1 - 2 y_i)
    for k in range(K_max):
        mask, log_ratio = proposal.draw_mask_batch(Y, rng)
        active = k < lengths
        if not active.all():
            mask &= active[:, None]
        delta = np.sum(np.where(mask, sign_theta_base * (1 - 2 * Y), 0.0), axis=1)
        log_p = delta / temps[k]
        if mode == MH:
            log_p = log_p + log_ratio
        u = rng.random(B)
        take = np.log(u) <= log_p
        moved = take & mask.any(axis=1)
        Y[moved] ^= mask[moved].astype(np.int8)
        accepted += take & active
        if k + 1 > K0:
            sums += Y * active[:, None]
            if curve is not None:
                T = k + 1
                est = (sums / (T - K0)).reshape(-1, C, Y.shape[1]).mean(axis=1)
                curve[T - K0 - 1] = np.mean(np.sum((est - reference) ** 2, axis=1))
    means = sums / (lengths - K0)[:, None]
    return BatchResult(means, Y, accepted / lengths, curve)


# ---------------------------------------------------------------------------
# exact kernel analysis
# ---------------------------------------------------------------------------


@dataclass
class KernelMatrix:
    states: np.ndarray
    P: np.ndarray


def kernel_matrix(
    space: Space,
    model: GibbsModel,
    proposal,
    t: float | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> KernelMatrix:
    """Exact row-stochastic transition matrix over ``enumerate_space(space)``."""
    t = model.temperature if t is None else t
    states = enumerate_space(space, cap)
    index = StateIndex(states)
    s = scores(states, model)
    n = len(states)
    P = np.zeros((n, n))
    mix = proposal if isinstance(proposal, MixtureProposal) else MixtureProposal([proposal])
    q_count = np.array([len(mix.applicable(y)) for y in states])
    for a, y in enumerate(states):
        usable = mix.applicable(y)
        for m in usable:
            member = mix.members[m]
            for y2, q in member.support(y):
                b = int(index.index(y2)[0])
                if b == a or q <= 0:
                    continue
                alpha = q_count[a] / q_count[b] * member.density(y2, y) / q
                P[a, b] += q / len(usable) * min(1.0, alpha * np.exp((s[b] - s[a]) / t))
        P[a, a] = 1.0 - P[a].sum()
    return KernelMatrix(states, P)


class StationaryNotConverged(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"power iteration did not converge, residual {residual:.3e}")
        self.residual = residual


def stationary_of(P: np.ndarray, tol: float = 1e-12, max_iter: int = 10**6, states=None) -> DistributionTable:
    """Left fixed point of ``P`` by power iteration on the lazy kernel ``(I + P) / 2``.

    The lazy kernel has the same fixed point and is aperiodic, so iteration
    converges for any irreducible chain.  Steps are taken by repeated squaring;
    ``max_iter`` bounds the number of equivalent single-step iterations.
    """
    n = P.shape[0]
    M = 0.5 * (np.eye(n) + P)
    pi = np.full(n, 1.0 / n)
    steps = 1
    residual = np.inf
    while True:
        pi = pi @ M
        pi /= pi.sum()
        residual = float(np.max(np.abs(pi @ P - pi)))
        if residual < tol:
            break
        if steps >= max_iter:
            raise StationaryNotConverged(residual)
        M = M @ M
        steps *= 2
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    table = DistributionTable(states if states is not None else np.arange(n)[:, None], pi)
    table.residual = residual
    return table


def detailed_balance_error(P: np.ndarray, pi: np.ndarray) -> float:
    flow = pi[:, None] * P
    return float(np.max(np.abs(flow - flow.T)))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))
