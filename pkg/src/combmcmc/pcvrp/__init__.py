"""Prize-collecting vehicle routing with time windows, as a state space for the MCMC layer."""

from .instance import (
    DEPOT,
    FIXTURES,
    InstanceError,
    Node,
    PcvrpInstance,
    instance_from_dict,
    instance_to_dict,
    load_fixture,
    load_instance,
    save_instance,
)
from .moves import (
    ALL_MOVES,
    Move,
    MoveType,
    applicable_moves,
    dispatch_sets,
    propose,
    raw_distribution,
    realized_distribution,
    valid_sets,
)
from .sampler import RoutingChain, enumerate_feasible, gibbs_over, kernel_matrix, sample_routing_chain
from .solution import (
    RoutingSolution,
    dump_solution,
    feasibility_check,
    incidence,
    objective,
    solution_to_dict,
)

__all__ = [
    "DEPOT",
    "FIXTURES",
    "InstanceError",
    "Node",
    "PcvrpInstance",
    "instance_from_dict",
    "instance_to_dict",
    "load_fixture",
    "load_instance",
    "save_instance",
    "ALL_MOVES",
    "Move",
    "MoveType",
    "applicable_moves",
    "dispatch_sets",
    "propose",
    "raw_distribution",
    "realized_distribution",
    "valid_sets",
    "RoutingChain",
    "enumerate_feasible",
    "gibbs_over",
    "kernel_matrix",
    "sample_routing_chain",
    "RoutingSolution",
    "dump_solution",
    "feasibility_check",
    "incidence",
    "objective",
    "solution_to_dict",
]
