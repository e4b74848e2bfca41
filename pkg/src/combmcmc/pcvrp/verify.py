"""Invariant checks for the routing sampler on instances small enough to enumerate."""

from __future__ import annotations

from collections import Counter, deque

import numpy as np

from ..kernel import detailed_balance_error, stationary_of, total_variation
from .instance import PcvrpInstance
from .moves import ALL_MOVES, Move, MoveType, draw_many, raw_distribution
from .sampler import MAX_ENUMERATION_REQUESTS, RoutingChain, enumerate_feasible, gibbs_over, kernel_matrix, sample_routing_chain
from .solution import RoutingSolution


def support_reversibility(chain: RoutingChain, states) -> dict:
    """Every proposed move can be undone by the same move type."""
    violations = 0
    pairs = 0
    for y in states:
        for move in chain.applicable(y):
            for y2 in chain.law(y, move)[3]:
                if y2 == y:
                    continue
                pairs += 1
                if chain.density(y2, move, y) <= 0:
                    violations += 1
    return {"pairs": pairs, "violations": violations, "passed": violations == 0}


def irreducibility(chain: RoutingChain, states) -> dict:
    seen = {states[0]}
    queue = deque([states[0]])
    while queue:
        y = queue.popleft()
        for y2, p in chain.transition_row(y).items():
            if p > 0 and y2 not in seen:
                seen.add(y2)
                queue.append(y2)
    return {"reached": len(seen), "states": len(states), "passed": len(seen) == len(states)}


def proposal_frequencies(chain: RoutingChain, states, n_draws: int, rng: np.random.Generator, z: float = 3.0) -> dict:
    """Compare draw frequencies with exact densities, per move type at its richest state."""
    worst = 0.0
    cells = 0
    failures = []
    for move in chain.moves:
        candidates = [y for y in states if move in chain.applicable(y)]
        if not candidates:
            continue
        y = max(candidates, key=lambda s: (len(chain.law(s, move)[0]), s.routes))
        dist = chain.law(y, move)[3]
        counts = Counter(draw_many(chain.inst, y, move, rng, n_draws))
        for y2, q in dist.items():
            cells += 1
            sd = np.sqrt(n_draws * q * (1 - q))
            dev = abs(counts.get(y2, 0) - n_draws * q)
            score = dev / sd if sd > 0 else (0.0 if dev == 0 else np.inf)
            worst = max(worst, score)
            if score > z:
                failures.append({"move": move.kind.value, "candidate": [list(r) for r in y2.routes], "z": score})
        extra = set(counts) - set(dist)
        if extra:
            failures.append({"move": move.kind.value, "unexpected": len(extra)})
            worst = np.inf
    return {"cells": cells, "max_z": float(worst), "failures": failures, "passed": not failures}


def symmetric_ratio_error(inst: PcvrpInstance, states, beta: float = 1.0) -> dict:
    """``max |q(y', y) / q(y, y') - 1|`` for the raw swap and 2-opt proposals."""
    out = {}
    for kind in (Move.SWAP, Move.TWO_OPT):
        move = MoveType(kind, beta)
        err = 0.0
        n = 0
        for y in states:
            for y2, q in raw_distribution(inst, y, move).items():
                if y2 == y:
                    continue
                n += 1
                err = max(err, abs(raw_distribution(inst, y2, move)[y] / q - 1.0))
        out[kind.value] = {"pairs": n, "max_error": err}
    out["passed"] = all(v["max_error"] < 1e-12 for k, v in out.items() if k != "passed")
    return out


CHECKS = (
    "reversibility",
    "irreducibility",
    "proposal_frequencies",
    "symmetric_ratios",
    "detailed_balance",
    "stationary_tv",
    "chain_tv",
)


def verify_instance(
    inst: PcvrpInstance,
    t: float = 1.0,
    moves=ALL_MOVES,
    beta: float = 1.0,
    chain_steps: int = 10**6,
    n_draws: int = 10**5,
    seed: int = 0,
    tv_tol: float = 0.05,
    balance_tol: float = 1e-8,
    checks=None,
) -> dict:
    """Run the selected checks (all of ``CHECKS`` by default) and return a JSON-ready report."""
    checks = CHECKS if checks is None else tuple(checks)
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    if len(inst.requests) > MAX_ENUMERATION_REQUESTS:
        raise ValueError(f"oversized instance: stationarity checks need at most {MAX_ENUMERATION_REQUESTS} requests")
    states = enumerate_feasible(inst)
    if not states:
        raise ValueError("instance has no feasible solution")
    chain = RoutingChain(inst, t, moves, beta)
    report: dict = {"n_states": len(states)}
    if "reversibility" in checks:
        report["reversibility"] = support_reversibility(chain, states)
    if "irreducibility" in checks:
        report["irreducibility"] = irreducibility(chain, states)
    if "proposal_frequencies" in checks:
        report["proposal_frequencies"] = proposal_frequencies(chain, states, n_draws, np.random.default_rng([seed, 1]))
    if "symmetric_ratios" in checks:
        report["symmetric_ratios"] = symmetric_ratio_error(inst, states, beta)
    if {"detailed_balance", "stationary_tv", "chain_tv"} & set(checks):
        pi = gibbs_over(inst, states, t)
    if {"detailed_balance", "stationary_tv"} & set(checks):
        P = kernel_matrix(chain, states)
    if "detailed_balance" in checks:
        balance = detailed_balance_error(P, pi)
        report["detailed_balance"] = {"max_error": balance, "passed": balance < balance_tol}
    if "stationary_tv" in checks:
        stationary_tv = total_variation(stationary_of(P).probs, pi)
        report["stationary_tv"] = {"value": stationary_tv, "passed": stationary_tv < balance_tol}
    if "chain_tv" in checks:
        init = RoutingSolution.empty() if RoutingSolution.empty() in states else states[0]
        run = sample_routing_chain(inst, t, chain_steps, init, np.random.default_rng([seed, 2]), chain=chain)
        empirical = np.array([run.visits.get(s, 0) for s in states]) / chain_steps
        chain_tv = total_variation(empirical, pi)
        report["chain_tv"] = {
            "steps": chain_steps, "value": chain_tv,
            "acceptance_rate": run.acceptance_rate, "passed": chain_tv < tv_tol,
        }
    report["passed"] = all(v["passed"] for v in report.values() if isinstance(v, dict))
    return report
