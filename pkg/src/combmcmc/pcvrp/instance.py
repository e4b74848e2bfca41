"""Prize-collecting VRPTW instances: data model, validation and JSON IO.

Node 0 is the depot; request ``k`` of the input list is node ``k + 1``.
Routes, incidence vectors and proposal sets all use node indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

DEPOT = 0


class InstanceError(ValueError):
    """Malformed or inconsistent instance data."""


@dataclass(frozen=True)
class Node:
    id: str
    x: float
    y: float
    tw_open: float
    tw_close: float
    service: float = 0.0
    demand: float = 0.0
    must_dispatch: bool = False
    prize: float = 0.0


@dataclass
class PcvrpInstance:
    """Depot, requests, and the matrices derived from them.

    ``travel`` defaults to Euclidean distances between coordinates and ``cost``
    defaults to ``travel``.  ``n_vehicles`` bounds the number of non-empty
    routes and defaults to the number of requests.
    """

    depot: Node
    requests: list[Node]
    capacity: float
    cost: np.ndarray | None = None
    travel: np.ndarray | None = None
    n_vehicles: int | None = None
    proximity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        validate(self)
        n = self.n_nodes
        coords = np.array([[node.x, node.y] for node in self.nodes])
        euclid = np.sqrt(np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=2))
        self.travel = euclid if self.travel is None else np.asarray(self.travel, dtype=float)
        self.cost = self.travel.copy() if self.cost is None else np.asarray(self.cost, dtype=float)
        for name, mat in (("cost", self.cost), ("travel", self.travel)):
            if mat.shape != (n, n):
                raise InstanceError(f"{name} matrix must be {n}x{n}, got {mat.shape}")
            if np.any(mat < 0) or not np.all(np.isfinite(mat)):
                raise InstanceError(f"{name} matrix must be finite and nonnegative")
        if self.n_vehicles is None:
            self.n_vehicles = len(self.requests)
        if self.n_vehicles < 1:
            raise InstanceError("need at least one vehicle")
        self.proximity = proximity_matrix(self)

    @property
    def nodes(self) -> list[Node]:
        return [self.depot, *self.requests]

    @property
    def n_nodes(self) -> int:
        return len(self.requests) + 1

    @property
    def clients(self) -> range:
        return range(1, self.n_nodes)

    @property
    def prizes(self) -> np.ndarray:
        """Prize per node, 0 at the depot."""
        return np.array([0.0] + [r.prize for r in self.requests])

    def with_prizes(self, prizes) -> "PcvrpInstance":
        prizes = np.asarray(prizes, dtype=float)
        if prizes.shape != (len(self.requests),):
            raise InstanceError("one prize per request is required")
        reqs = [Node(**{**r.__dict__, "prize": float(p)}) for r, p in zip(self.requests, prizes)]
        return PcvrpInstance(self.depot, reqs, self.capacity, self.cost, self.travel, self.n_vehicles)


def validate(inst: PcvrpInstance) -> None:
    if not inst.capacity > 0:
        raise InstanceError(f"capacity must be positive, got {inst.capacity}")
    ids = [node.id for node in inst.nodes]
    if len(set(ids)) != len(ids):
        raise InstanceError("node ids must be unique")
    for node in inst.nodes:
        if node.demand < 0:
            raise InstanceError(f"request {node.id}: negative demand {node.demand}")
        if node.service < 0:
            raise InstanceError(f"request {node.id}: negative service duration")
        if node.tw_open > node.tw_close:
            raise InstanceError(f"request {node.id}: time window opens after it closes")
    if inst.depot.must_dispatch or inst.depot.prize != 0:
        raise InstanceError("the depot carries no prize and no dispatch flag")


def proximity_matrix(inst: PcvrpInstance) -> np.ndarray:
    """Symmetric heuristic distance: travel time plus a time-window incompatibility penalty."""
    T = inst.travel
    nodes = inst.nodes
    o = np.array([n.tw_open for n in nodes])
    c = np.array([n.tw_close for n in nodes])
    s = np.array([n.service for n in nodes])
    # penalty_ij: how long one must idle after serving i as late as possible before j opens
    late = np.maximum(0.0, o[None, :] - (c[:, None] + s[:, None] + T))
    return 0.5 * (T + T.T) + late + late.T


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _node(raw: dict, default_id: str) -> Node:
    tw = raw.get("tw", [raw.get("tw_open", 0.0), raw.get("tw_close", np.inf)])
    return Node(
        id=str(raw.get("id", default_id)),
        x=float(raw["x"]),
        y=float(raw["y"]),
        tw_open=float(tw[0]),
        tw_close=float(tw[1]),
        service=float(raw.get("service", 0.0)),
        demand=float(raw.get("demand", 0.0)),
        must_dispatch=bool(raw.get("must_dispatch", False)),
        prize=float(raw.get("prize", 0.0)),
    )


def instance_from_dict(data: dict) -> PcvrpInstance:
    try:
        depot = _node(data["depot"], "D")
        requests = [_node(r, str(k + 1)) for k, r in enumerate(data["requests"])]
        capacity = float(data["capacity"])
    except KeyError as exc:
        raise InstanceError(f"missing field {exc}") from exc
    cost = data.get("cost_matrix")
    travel = data.get("travel_matrix")
    return PcvrpInstance(
        depot,
        requests,
        capacity,
        cost=None if cost is None else np.array(cost, dtype=float),
        travel=None if travel is None else np.array(travel, dtype=float),
        n_vehicles=data.get("n_vehicles"),
    )


def instance_to_dict(inst: PcvrpInstance) -> dict:
    def node(n: Node) -> dict:
        return {
            "id": n.id, "x": n.x, "y": n.y, "tw": [n.tw_open, n.tw_close],
            "service": n.service, "demand": n.demand,
            "must_dispatch": n.must_dispatch, "prize": n.prize,
        }

    return {
        "depot": node(inst.depot),
        "requests": [node(r) for r in inst.requests],
        "capacity": inst.capacity,
        "cost_matrix": inst.cost.tolist(),
        "travel_matrix": inst.travel.tolist(),
        "n_vehicles": inst.n_vehicles,
    }


def load_instance(path) -> PcvrpInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(inst: PcvrpInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2))


FIXTURES = ("three_requests", "two_routes", "five_requests")


def load_fixture(name: str) -> PcvrpInstance:
    """One of the bundled small instances listed in ``FIXTURES``."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    text = resources.files("combmcmc.pcvrp").joinpath("data", f"{name}.json").read_text()
    return instance_from_dict(json.loads(text))
