"""Routing solutions: value type, feasibility, objective and incidence view."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .instance import DEPOT, PcvrpInstance


@dataclass(frozen=True)
class RoutingSolution:
    """A set of non-empty routes, each an ordered tuple of client nodes.

    Routes are kept in a canonical sorted order, so two solutions with the same
    routes compare equal regardless of which vehicle drives which route.
    """

    routes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        canonical = tuple(sorted(tuple(int(c) for c in r) for r in self.routes if len(r) > 0))
        object.__setattr__(self, "routes", canonical)

    @classmethod
    def empty(cls) -> "RoutingSolution":
        return cls(())

    @property
    def dispatched(self) -> frozenset[int]:
        return frozenset(c for r in self.routes for c in r)

    def undispatched(self, inst: PcvrpInstance) -> frozenset[int]:
        return frozenset(inst.clients) - self.dispatched

    def route_of(self, client: int) -> int:
        for k, r in enumerate(self.routes):
            if client in r:
                return k
        raise KeyError(f"client {client} is not dispatched")

    def position(self, client: int) -> tuple[int, int]:
        k = self.route_of(client)
        return k, self.routes[k].index(client)

    def next(self, client: int) -> int:
        """Following node, or the depot at the end of the route."""
        k, p = self.position(client)
        r = self.routes[k]
        return r[p + 1] if p + 1 < len(r) else DEPOT

    def prev(self, client: int) -> int:
        k, p = self.position(client)
        return self.routes[k][p - 1] if p > 0 else DEPOT

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for r in self.routes:
            path = (DEPOT, *r, DEPOT)
            out.extend(zip(path[:-1], path[1:]))
        return out

    def replace_routes(self, routes) -> "RoutingSolution":
        return RoutingSolution(tuple(routes))


# ---------------------------------------------------------------------------
# feasibility and objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # structure | capacity | time_window | depot_close | must_dispatch | fleet
    detail: str


def route_schedule(inst: PcvrpInstance, route) -> tuple[list[float], Violation | None]:
    """Service start times along ``route`` with waiting at early arrivals."""
    nodes = inst.nodes
    time = nodes[DEPOT].tw_open
    prev = DEPOT
    starts = []
    for c in route:
        arrive = time + inst.travel[prev, c]
        if arrive > nodes[c].tw_close:
            return starts, Violation("time_window", f"client {c} reached at {arrive:g} after close {nodes[c].tw_close:g}")
        start = max(arrive, nodes[c].tw_open)
        starts.append(start)
        time = start + nodes[c].service
        prev = c
    back = time + inst.travel[prev, DEPOT]
    if back > nodes[DEPOT].tw_close:
        return starts, Violation("depot_close", f"return at {back:g} after depot close {nodes[DEPOT].tw_close:g}")
    return starts, None


def feasibility_check(inst: PcvrpInstance, sol: RoutingSolution) -> tuple[bool, Violation | None]:
    """``(True, None)`` if feasible, else ``(False, first violation)``."""
    seen = [c for r in sol.routes for c in r]
    if len(seen) != len(set(seen)):
        return False, Violation("structure", "a client appears more than once")
    if any(c not in inst.clients for c in seen):
        return False, Violation("structure", "unknown client node")
    if len(sol.routes) > inst.n_vehicles:
        return False, Violation("fleet", f"{len(sol.routes)} routes exceed {inst.n_vehicles} vehicles")
    for r in sol.routes:
        load = sum(inst.nodes[c].demand for c in r)
        if load > inst.capacity:
            return False, Violation("capacity", f"route {r} carries {load:g} > {inst.capacity:g}")
        _, v = route_schedule(inst, r)
        if v is not None:
            return False, v
    dispatched = set(seen)
    for c in inst.clients:
        if inst.nodes[c].must_dispatch and c not in dispatched:
            return False, Violation("must_dispatch", f"client {c} must be dispatched")
    return True, None


def is_feasible(inst: PcvrpInstance, sol: RoutingSolution) -> bool:
    return feasibility_check(inst, sol)[0]


def objective(inst: PcvrpInstance, sol: RoutingSolution, prizes=None) -> float:
    """Total prize of dispatched clients minus routing cost."""
    prizes = inst.prizes if prizes is None else np.concatenate([[0.0], np.asarray(prizes, dtype=float)])
    gain = sum(prizes[c] for c in sol.dispatched)
    cost = sum(inst.cost[a, b] for a, b in sol.edges())
    return float(gain - cost)


# ---------------------------------------------------------------------------
# incidence view
# ---------------------------------------------------------------------------


def edge_list(inst: PcvrpInstance) -> list[tuple[int, int]]:
    """Coordinate order of incidence vectors: every ordered node pair ``(a, b)``, ``a != b``."""
    n = inst.n_nodes
    return [(a, b) for a in range(n) for b in range(n) if a != b]


def incidence(inst: PcvrpInstance, sol: RoutingSolution) -> np.ndarray:
    n = inst.n_nodes
    out = np.zeros(n * (n - 1), dtype=np.int8)
    for a, b in sol.edges():
        if a == b:
            continue  # a depot-depot loop never appears for non-empty routes
        out[a * (n - 1) + (b if b < a else b - 1)] = 1
    return out


def incidence_theta(inst: PcvrpInstance, prizes=None) -> np.ndarray:
    """Direction ``theta - c`` over edges, so that the objective is linear in the incidence vector."""
    prizes = inst.prizes if prizes is None else np.concatenate([[0.0], np.asarray(prizes, dtype=float)])
    return np.array([prizes[b] - inst.cost[a, b] for a, b in edge_list(inst)])


def solution_to_dict(inst: PcvrpInstance, sol: RoutingSolution) -> dict:
    ids = [node.id for node in inst.nodes]
    return {
        "routes": [[ids[c] for c in r] for r in sol.routes],
        "incidence": [[ids[a], ids[b], 1] for a, b in sol.edges()],
        "objective": objective(inst, sol),
    }


def dump_solution(inst: PcvrpInstance, sol: RoutingSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(inst, sol), fh, indent=2)
