"""Mixture MCMC over feasible routings, plus exhaustive oracles for tiny instances."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .instance import PcvrpInstance
from .moves import ALL_MOVES, MoveType, is_applicable, realized_distribution
from .solution import RoutingSolution, feasibility_check, incidence, is_feasible, objective

MAX_ENUMERATION_REQUESTS = 4


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first], *part]
        for k in range(len(part)):
            yield part[:k] + [[first, *part[k]]] + part[k + 1 :]


def enumerate_feasible(inst: PcvrpInstance) -> list[RoutingSolution]:
    """Every feasible solution, in a deterministic order."""
    n = len(inst.requests)
    if n > MAX_ENUMERATION_REQUESTS:
        raise ValueError(f"enumeration supports at most {MAX_ENUMERATION_REQUESTS} requests, got {n}")
    found = set()
    clients = list(inst.clients)
    for size in range(n + 1):
        for subset in itertools.combinations(clients, size):
            for blocks in _set_partitions(list(subset)):
                for orders in itertools.product(*(itertools.permutations(b) for b in blocks)):
                    sol = RoutingSolution(tuple(orders))
                    if is_feasible(inst, sol):
                        found.add(sol)
    return sorted(found, key=lambda s: (len(s.dispatched), s.routes))


def gibbs_over(inst: PcvrpInstance, states, t: float = 1.0, prizes=None) -> np.ndarray:
    s = np.array([objective(inst, y, prizes) for y in states]) / t
    return np.exp(s - logsumexp(s))


class RoutingChain:
    """The mixture kernel over routing moves, with per-state caches of the proposal laws."""

    def __init__(self, inst: PcvrpInstance, t: float = 1.0, moves=ALL_MOVES, beta: float = 1.0, prizes=None):
        if not t > 0:
            raise ValueError("temperature must be positive")
        self.inst = inst if prizes is None else inst.with_prizes(prizes)
        self.t = t
        self.moves = [MoveType(m, beta) for m in moves]
        self._laws: dict = {}
        self._applicable: dict = {}
        self._score: dict = {}

    def applicable(self, y: RoutingSolution) -> list[MoveType]:
        if y not in self._applicable:
            self._applicable[y] = [m for m in self.moves if is_applicable(self.inst, y, m.kind)]
        return self._applicable[y]

    def law(self, y: RoutingSolution, move: MoveType):
        key = (y, move)
        if key not in self._laws:
            dist = realized_distribution(self.inst, y, move)
            states = list(dist)
            probs = np.array([dist[s] for s in states])
            self._laws[key] = (states, probs, np.cumsum(probs), dist)
        return self._laws[key]

    def density(self, y, move, y2) -> float:
        if move not in self.applicable(y):
            return 0.0
        return self.law(y, move)[3].get(y2, 0.0)

    def score(self, y) -> float:
        if y not in self._score:
            self._score[y] = objective(self.inst, y)
        return self._score[y]

    def transition_row(self, y) -> dict:
        """Exact next-state law from ``y``."""
        Q = self.applicable(y)
        row: Counter = Counter()
        if not Q:
            return {y: 1.0}
        for move in Q:
            for y2, q in self.law(y, move)[3].items():
                if y2 == y:
                    continue
                alpha = len(Q) / len(self.applicable(y2)) * self.density(y2, move, y) / q
                acc = min(1.0, alpha * np.exp((self.score(y2) - self.score(y)) / self.t))
                row[y2] += q * acc / len(Q)
        row[y] = 1.0 - sum(row.values())
        return dict(row)

    def step(self, y, rng: np.random.Generator, u_move: float, u_draw: float, u_acc: float):
        """One transition driven by three uniforms; returns ``(next, accepted, move)``."""
        Q = self.applicable(y)
        if not Q:
            return y, False, None
        move = Q[min(int(u_move * len(Q)), len(Q) - 1)]
        states, probs, cum, _ = self.law(y, move)
        y2 = states[min(int(np.searchsorted(cum, u_draw * cum[-1], side="right")), len(states) - 1)]
        if y2 == y:
            return y, True, move
        q_fwd = probs[states.index(y2)]
        q_rev = self.density(y2, move, y)
        log_p = np.log(len(Q) / len(self.applicable(y2))) + np.log(q_rev) - np.log(q_fwd)
        log_p += (self.score(y2) - self.score(y)) / self.t
        if u_acc == 0.0 or np.log(u_acc) <= log_p:
            return y2, True, move
        return y, False, move


@dataclass
class RoutingChainResult:
    mean_incidence: np.ndarray
    visits: Counter = field(repr=False)
    acceptance_rate: float
    final: RoutingSolution


def sample_routing_chain(
    inst: PcvrpInstance,
    t: float,
    K: int,
    init: RoutingSolution,
    rng: np.random.Generator,
    prizes=None,
    moves=ALL_MOVES,
    beta: float = 1.0,
    chain: RoutingChain | None = None,
) -> RoutingChainResult:
    """Run ``K`` mixture transitions from ``init`` and average the incidence vectors of iterates ``1..K``."""
    ok, violation = feasibility_check(inst, init)
    if not ok:
        raise ValueError(f"infeasible initial solution: {violation.kind}: {violation.detail}")
    chain = chain or RoutingChain(inst, t, moves, beta, prizes)
    y = init
    visits: Counter = Counter()
    accepted = 0
    chunk = 65536
    done = 0
    while done < K:
        n = min(chunk, K - done)
        U = rng.random((n, 3))
        for u in U:
            y, acc, _ = chain.step(y, rng, u[0], u[1], u[2])
            visits[y] += 1
            accepted += acc
        done += n
    if K == 0:
        return RoutingChainResult(incidence(chain.inst, init).astype(float), visits, 0.0, init)
    mean = sum(count * incidence(chain.inst, s).astype(float) for s, count in visits.items()) / K
    return RoutingChainResult(mean, visits, accepted / K, y)


def kernel_matrix(chain: RoutingChain, states) -> np.ndarray:
    index = {s: k for k, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for a, y in enumerate(states):
        for y2, p in chain.transition_row(y).items():
            P[a, index[y2]] += p
    return P
