"""Randomized local-search moves on routing solutions and their exact densities.

Each move picks an anchor client ``i`` uniformly from ``V1``, a partner ``j``
from ``V2[i]`` with softmax weights ``exp(-d(i, j) / beta)`` on max-normalized
proximities, and for insertions a side (before/after) with probability 1/2.
``raw_distribution`` enumerates that choice tree exactly, so densities cover
every path to the same candidate, no-op draws, and self-proposals.
``realized_distribution`` adds the infeasibility handling: an infeasible
candidate is redrawn, up to ``MAX_ATTEMPTS`` draws, after which the move
holds in place.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .instance import DEPOT, PcvrpInstance
from .solution import RoutingSolution, is_feasible

MAX_ATTEMPTS = 50
BEFORE, AFTER = "before", "after"


class Move(enum.Enum):
    RELOCATE = "relocate"
    RELOCATE_PAIR = "relocate_pair"
    SWAP = "swap"
    SWAP_PAIR = "swap_pair"
    TWO_OPT = "two_opt"
    SERVE_REMOVE = "serve_remove"


ALL_MOVES = tuple(Move)


@dataclass(frozen=True)
class MoveType:
    kind: Move
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


# ---------------------------------------------------------------------------
# valid client sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DispatchSets:
    D: frozenset
    D1: frozenset  # alone in their route
    D2: frozenset  # in a route of at most two clients
    last: frozenset
    undispatched: frozenset
    fresh_route: bool  # an empty route is available for a new vehicle
    singles: frozenset  # clients whose removal empties a route


def dispatch_sets(inst: PcvrpInstance, y: RoutingSolution) -> DispatchSets:
    D1 = frozenset(r[0] for r in y.routes if len(r) == 1)
    D2 = frozenset(c for r in y.routes if len(r) <= 2 for c in r)
    last = frozenset(r[-1] for r in y.routes)
    return DispatchSets(
        D=y.dispatched,
        D1=D1,
        D2=D2,
        last=last,
        undispatched=y.undispatched(inst),
        fresh_route=len(y.routes) < inst.n_vehicles,
        singles=D1,
    )


@dataclass(frozen=True)
class ValidSets:
    """``v1`` anchors and ``v2[i]`` partners (``i`` itself already excluded).

    For the merged serve/remove move, ``v1``/``v2`` describe serving (``DEPOT``
    in ``v2[i]`` means opening a new route) and ``removable`` lists the clients
    that can be removed.
    """

    v1: tuple
    v2: dict
    removable: tuple = ()


def valid_sets(inst: PcvrpInstance, y: RoutingSolution, kind: Move) -> ValidSets:
    S = dispatch_sets(inst, y)
    D = S.D

    def srt(it):
        return tuple(sorted(it))

    if kind is Move.RELOCATE:
        v1 = srt(D - S.D1)
        return ValidSets(v1, {i: srt(D - {i}) for i in v1})
    if kind is Move.RELOCATE_PAIR:
        v1 = srt(D - (S.D2 | S.last))
        return ValidSets(v1, {i: srt(D - {i, y.next(i)}) for i in v1})
    if kind is Move.SWAP:
        v1 = srt(D)
        return ValidSets(v1, {i: srt(D - {i}) for i in v1})
    if kind is Move.SWAP_PAIR:
        v1 = srt(D - S.last)
        return ValidSets(v1, {i: srt(D - S.last - {i, y.prev(i), y.next(i)}) for i in v1})
    if kind is Move.TWO_OPT:
        v1 = srt(D - S.D2)
        return ValidSets(v1, {i: srt(set(y.routes[y.route_of(i)]) - {i}) for i in v1})
    if kind is Move.SERVE_REMOVE:
        v1 = srt(S.undispatched)
        partners = srt(D) + ((DEPOT,) if S.fresh_route else ())
        removable = srt((D - S.D1) | S.singles)
        return ValidSets(v1, {i: partners for i in v1}, removable)
    raise ValueError(f"unknown move {kind!r}")


def is_applicable(inst: PcvrpInstance, y: RoutingSolution, kind: Move) -> bool:
    vs = valid_sets(inst, y, kind)
    if kind is Move.SERVE_REMOVE and vs.removable:
        return True
    return any(len(vs.v2[i]) > 0 for i in vs.v1)


def applicable_moves(inst: PcvrpInstance, y: RoutingSolution, moves=ALL_MOVES) -> list[Move]:
    return [m for m in moves if is_applicable(inst, y, m)]


# ---------------------------------------------------------------------------
# partner selection
# ---------------------------------------------------------------------------


def mean_distance(inst: PcvrpInstance, i: int, y: RoutingSolution) -> float:
    """Depot pseudo-distance: average proximity from ``i`` to the dispatched clients."""
    D = sorted(y.dispatched - {i})
    return float(np.mean(inst.proximity[i, D])) if D else 0.0


def partner_probs(inst: PcvrpInstance, y: RoutingSolution, i: int, partners, beta: float) -> np.ndarray:
    """Softmax over ``partners`` of ``-d(i, j) / beta`` after dividing by the largest distance."""
    if not partners:
        return np.zeros(0)
    d = np.array([mean_distance(inst, i, y) if j == DEPOT else inst.proximity[i, j] for j in partners])
    top = d.max()
    if top > 0:
        d = d / top
    w = np.exp(-(d - d.min()) / beta)
    return w / w.sum()


# ---------------------------------------------------------------------------
# route surgery
# ---------------------------------------------------------------------------


def _lists(y: RoutingSolution) -> list[list[int]]:
    return [list(r) for r in y.routes]


def _insert(routes, block, j, side):
    for r in routes:
        if j in r:
            p = r.index(j) + (1 if side == AFTER else 0)
            r[p:p] = block
            return
    raise KeyError(j)


def relocate(y: RoutingSolution, i: int, j: int, side: str, pair: bool = False) -> RoutingSolution:
    block = [i, y.next(i)] if pair else [i]
    routes = _lists(y)
    for r in routes:
        for c in block:
            if c in r:
                r.remove(c)
    _insert(routes, block, j, side)
    return RoutingSolution(tuple(map(tuple, routes)))


def swap(y: RoutingSolution, i: int, j: int, pair: bool = False) -> RoutingSolution:
    routes = _lists(y)
    (ki, pi), (kj, pj) = y.position(i), y.position(j)
    w = 2 if pair else 1
    a = routes[ki][pi : pi + w]
    b = routes[kj][pj : pj + w]
    if ki == kj and pi > pj:
        (pi, a), (pj, b) = (pj, b), (pi, a)
    if ki == kj:
        r = routes[ki]
        routes[ki] = r[:pi] + b + r[pi + w : pj] + a + r[pj + w :]
    else:
        routes[ki][pi : pi + w] = b
        routes[kj][pj : pj + w] = a
    return RoutingSolution(tuple(map(tuple, routes)))


def two_opt(y: RoutingSolution, i: int, j: int) -> RoutingSolution:
    (ki, pi), (kj, pj) = y.position(i), y.position(j)
    if ki != kj:
        raise ValueError("2-opt reverses a segment inside one route")
    lo, hi = min(pi, pj), max(pi, pj)
    routes = _lists(y)
    r = routes[ki]
    routes[ki] = r[:lo] + r[lo : hi + 1][::-1] + r[hi + 1 :]
    return RoutingSolution(tuple(map(tuple, routes)))


def serve(y: RoutingSolution, i: int, j: int, side: str) -> RoutingSolution:
    if j == DEPOT:
        return RoutingSolution(y.routes + ((i,),))
    routes = _lists(y)
    _insert(routes, [i], j, side)
    return RoutingSolution(tuple(map(tuple, routes)))


def remove(y: RoutingSolution, i: int) -> RoutingSolution:
    return RoutingSolution(tuple(tuple(c for c in r if c != i) for r in y.routes))


# ---------------------------------------------------------------------------
# exact densities
# ---------------------------------------------------------------------------


def choice_paths(inst: PcvrpInstance, y: RoutingSolution, move: MoveType):
    """Yield ``(probability, description, candidate)`` for every leaf of the choice tree."""
    kind, beta = move.kind, move.beta
    vs = valid_sets(inst, y, kind)
    if kind is Move.SERVE_REMOVE:
        n_rem, n_srv = len(vs.removable), len(vs.v1)
        if n_rem + n_srv == 0:
            return
        for i in vs.removable:
            yield 1.0 / (n_rem + n_srv), ("remove", i), remove(y, i)
        for i in vs.v1:
            partners = vs.v2[i]
            scale = 1.0 / (n_rem + n_srv)
            if not partners:
                # cannot happen: the depot or a dispatched client is always available
                continue
            for j, pj in zip(partners, partner_probs(inst, y, i, partners, beta)):
                if j == DEPOT:
                    yield scale * pj, ("serve", i, j, None), serve(y, i, j, None)
                else:
                    for side in (BEFORE, AFTER):
                        yield scale * pj * 0.5, ("serve", i, j, side), serve(y, i, j, side)
        return
    # anchors without any partner cannot complete the move, so i is uniform over the usable ones
    anchors = [i for i in vs.v1 if vs.v2[i]]
    if not anchors:
        return
    for i in anchors:
        pi = 1.0 / len(anchors)
        partners = vs.v2[i]
        for j, pj in zip(partners, partner_probs(inst, y, i, partners, beta)):
            if kind in (Move.RELOCATE, Move.RELOCATE_PAIR):
                for side in (BEFORE, AFTER):
                    cand = relocate(y, i, j, side, pair=kind is Move.RELOCATE_PAIR)
                    yield pi * pj * 0.5, (kind.value, i, j, side), cand
            elif kind is Move.SWAP:
                yield pi * pj, (kind.value, i, j), swap(y, i, j)
            elif kind is Move.SWAP_PAIR:
                yield pi * pj, (kind.value, i, j), swap(y, i, j, pair=True)
            else:
                yield pi * pj, (kind.value, i, j), two_opt(y, i, j)


def raw_distribution(inst: PcvrpInstance, y: RoutingSolution, move: MoveType) -> dict:
    """Candidate -> probability before any feasibility handling."""
    out = defaultdict(float)
    for p, _, cand in choice_paths(inst, y, move):
        out[cand] += p
    return dict(out)


def realized_distribution(inst: PcvrpInstance, y: RoutingSolution, move: MoveType) -> dict:
    """Law of the candidate returned by :func:`propose` (feasible candidates only)."""
    raw = raw_distribution(inst, y, move)
    feasible = {c: p for c, p in raw.items() if c == y or is_feasible(inst, c)}
    p_f = sum(feasible.values())
    if p_f <= 0:
        return {y: 1.0}
    miss = (1.0 - p_f) ** MAX_ATTEMPTS
    scale = (1.0 - miss) / p_f
    out = {c: p * scale for c, p in feasible.items()}
    out[y] = out.get(y, 0.0) + miss
    return out


def _path_sampler(inst: PcvrpInstance, y: RoutingSolution, move: MoveType):
    """``(sample, build)``: ``sample(rng)`` walks the choice tree once and returns the
    choices made, ``build(choices)`` applies them to ``y``.  Valid sets and partner
    laws are computed once.
    """
    kind, beta = move.kind, move.beta
    vs = valid_sets(inst, y, kind)
    cums = {i: np.cumsum(partner_probs(inst, y, i, vs.v2[i], beta)) for i in vs.v1 if vs.v2[i]}

    def partner(i, rng):
        c = cums[i]
        return vs.v2[i][min(int(np.searchsorted(c, rng.random() * c[-1], side="right")), len(c) - 1)]

    def side(rng):
        return BEFORE if rng.random() < 0.5 else AFTER

    if kind is Move.SERVE_REMOVE:
        n_rem, n_srv = len(vs.removable), len(vs.v1)

        def sample(rng):
            if rng.random() * (n_rem + n_srv) < n_rem:
                return ("remove", vs.removable[int(rng.integers(n_rem))])
            i = vs.v1[int(rng.integers(n_srv))]
            j = partner(i, rng)
            return ("serve", i, j, side(rng))

        def build(c):
            if c[0] == "remove":
                return remove(y, c[1])
            return serve(y, c[1], c[2], None if c[2] == DEPOT else c[3])

        return sample, build
    anchors = list(cums)
    sided = kind in (Move.RELOCATE, Move.RELOCATE_PAIR)

    def sample(rng):
        i = anchors[int(rng.integers(len(anchors)))]
        j = partner(i, rng)
        return (i, j, side(rng)) if sided else (i, j)

    def build(c):
        if sided:
            return relocate(y, c[0], c[1], c[2], pair=kind is Move.RELOCATE_PAIR)
        if kind is Move.SWAP:
            return swap(y, *c)
        if kind is Move.SWAP_PAIR:
            return swap(y, *c, pair=True)
        return two_opt(y, *c)

    return sample, build


def draw_many(inst: PcvrpInstance, y: RoutingSolution, move: MoveType, rng: np.random.Generator, n: int) -> list:
    """``n`` independent draws of the realized proposal (see ``draw``)."""
    if not is_applicable(inst, y, move.kind):
        raise ValueError(f"move {move.kind.value} is not applicable at this solution")
    sample, build = _path_sampler(inst, y, move)
    outcome: dict = {}  # choices -> feasible candidate or None
    out = []
    for _ in range(n):
        cand = y
        for _ in range(MAX_ATTEMPTS):
            c = sample(rng)
            if c not in outcome:
                built = build(c)
                outcome[c] = built if built == y or is_feasible(inst, built) else None
            if outcome[c] is not None:
                cand = outcome[c]
                break
        out.append(cand)
    return out


def draw(inst: PcvrpInstance, y: RoutingSolution, move: MoveType, rng: np.random.Generator) -> RoutingSolution:
    """Sample a feasible candidate by redrawing infeasible ones, holding in place after ``MAX_ATTEMPTS``."""
    return draw_many(inst, y, move, rng, 1)[0]


def propose(inst: PcvrpInstance, y: RoutingSolution, move: MoveType, rng: np.random.Generator):
    """``(candidate, q(y, candidate), q(candidate, y))`` under the realized proposal."""
    cand = draw(inst, y, move, rng)
    q_fwd = realized_distribution(inst, y, move)[cand]
    q_rev = realized_distribution(inst, cand, move).get(y, 0.0) if is_applicable(inst, cand, move.kind) else 0.0
    return cand, q_fwd, q_rev


# ---------------------------------------------------------------------------
# closed forms (raw proposal, candidate reached by a genuine move)
# ---------------------------------------------------------------------------


def _p(inst, y, move, i, j) -> float:
    """Probability that partner ``j`` is chosen for anchor ``i`` (0 for an unavailable partner)."""
    partners = valid_sets(inst, y, move.kind).v2.get(i, ())
    if j not in partners:
        return 0.0
    return float(partner_probs(inst, y, i, partners, move.beta)[partners.index(j)])


def _n_anchors(inst, y, kind) -> int:
    vs = valid_sets(inst, y, kind)
    return sum(1 for i in vs.v1 if vs.v2[i])


def closed_form_pair_symmetric(inst, y, move: MoveType, i: int, j: int) -> float:
    """Swap, swap pair and 2-opt: density carried by the unordered pair ``{i, j}``.

    Routes form an unordered set, so a different pair can produce the same
    solution (swapping both clients of two 2-client routes); the full density
    sums this over every such pair.
    """
    return (_p(inst, y, move, i, j) + _p(inst, y, move, j, i)) / _n_anchors(inst, y, move.kind)


def swap_pair_ratio(inst, y, move: MoveType, i: int, j: int) -> float:
    """``q(y', y) / q(y, y')`` for a swap of pairs anchored at ``i`` and ``j``."""
    y2 = swap(y, i, j, pair=True)
    return closed_form_pair_symmetric(inst, y2, move, i, j) / closed_form_pair_symmetric(inst, y, move, i, j)


def normalizer(inst, y, move: MoveType, i: int) -> float:
    """Softmax normalizer sum for anchor ``i`` on the max-normalized distances."""
    partners = valid_sets(inst, y, move.kind).v2.get(i, ())
    if not partners:
        return 0.0
    d = np.array([inst.proximity[i, k] for k in partners])
    top = d.max()
    if top > 0:
        d = d / top
    return float(np.sum(np.exp(-d / move.beta)))


def closed_form_relocate(inst, y, move: MoveType, i: int, j: int, side: str) -> tuple[float, float]:
    """Forward and reverse raw densities of relocating ``i`` (or its pair) ``side`` of ``j``.

    Only paths anchored at ``i`` are counted; an exchange of two adjacent
    clients can also be reached by moving the other client, which the
    enumeration in :func:`raw_distribution` includes.
    """
    pair = move.kind is Move.RELOCATE_PAIR
    y2 = relocate(y, i, j, side, pair=pair)
    j_alt = y.next(j) if side == AFTER else y.prev(j)
    fwd = 0.5 * (_p(inst, y, move, i, j) + _p(inst, y, move, i, j_alt)) / _n_anchors(inst, y, move.kind)
    back_after = y.prev(i)
    back_before = y.next(y.next(i)) if pair else y.next(i)
    rev = 0.5 * (_p(inst, y2, move, i, back_after) + _p(inst, y2, move, i, back_before)) / _n_anchors(inst, y2, move.kind)
    return fwd, rev


def closed_form_serve_remove(inst, y, move: MoveType, action) -> tuple[float, float]:
    """Forward and reverse raw densities for ``("remove", i)`` or ``("serve", i, j, side)``."""
    def total(sol):
        vs = valid_sets(inst, sol, Move.SERVE_REMOVE)
        return len(vs.removable) + len(vs.v1)

    if action[0] == "remove":
        i = action[1]
        y2 = remove(y, i)
        fwd = 1.0 / total(y)
        if i in dispatch_sets(inst, y).singles:
            rev = _p(inst, y2, move, i, DEPOT) / total(y2)
        else:
            # a depot neighbour reached as partner would open a new route instead
            nbrs = [k for k in (y.prev(i), y.next(i)) if k != DEPOT]
            rev = 0.5 * sum(_p(inst, y2, move, i, k) for k in nbrs) / total(y2)
        return fwd, rev
    _, i, j, side = action
    y2 = serve(y, i, j, side)
    if j == DEPOT:
        fwd = _p(inst, y, move, i, DEPOT) / total(y)
    else:
        j_alt = y.prev(j) if side == BEFORE else y.next(j)
        fwd = 0.5 * _p(inst, y, move, i, j)
        if j_alt != DEPOT:
            fwd += 0.5 * _p(inst, y, move, i, j_alt)
        fwd /= total(y)
    return fwd, 1.0 / total(y2)
