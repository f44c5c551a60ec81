"""Analysis and design of CSMA/CA tree networks without hidden nodes.

Computes explicit QoS-respecting throughput-region inner bounds for tree
networks under unslotted CSMA/CA, validates a low-discard fixed-point
approximation against the full per-node analysis, and designs hop- and
relay-constrained tree topologies that maximize the bounds.
"""

__version__ = "0.1.0"

from .backend import backend_name
from .bounds import (
    QosTargets,
    ThroughputBounds,
    bound_b,
    bound_b1,
    bound_b2,
    bound_bprime,
    equal_rate_inner_throughput,
    hop_limits,
    member_delta,
    member_delta_delay,
    split_qos,
    tau_max,
)
from .detailed import DetailedSolution, end_to_end, qna_delay, service_moments, solve_detailed
from .design import (
    DesignProblem,
    enumerate_candidates,
    select_best,
    shortest_path_tree,
    steiner_with_budget,
    throughput_search,
)
from .model import (
    ArrivalRates,
    Edge,
    NetworkGraph,
    Node,
    ProtocolParams,
    TreeTopology,
    backoff_stage_means,
    beta_from_alpha,
    mean_backoff,
    node_loads,
    tx_duration,
    validate_tree,
)
from .scenarios import Scenario, generate_scenario, jain_fairness, load_scenario, save_scenario
from .simplified import (
    SimplifiedSolution,
    discard_probability,
    domination_check,
    mg1_delay,
    scalar_derivative,
    solve_scalar,
    solve_vector,
)

__all__ = [
    "ArrivalRates",
    "DesignProblem",
    "DetailedSolution",
    "Edge",
    "NetworkGraph",
    "Node",
    "ProtocolParams",
    "QosTargets",
    "Scenario",
    "SimplifiedSolution",
    "ThroughputBounds",
    "TreeTopology",
    "backend_name",
    "backoff_stage_means",
    "beta_from_alpha",
    "bound_b",
    "bound_b1",
    "bound_b2",
    "bound_bprime",
    "discard_probability",
    "domination_check",
    "end_to_end",
    "enumerate_candidates",
    "equal_rate_inner_throughput",
    "generate_scenario",
    "hop_limits",
    "jain_fairness",
    "load_scenario",
    "mean_backoff",
    "member_delta",
    "member_delta_delay",
    "mg1_delay",
    "node_loads",
    "qna_delay",
    "save_scenario",
    "scalar_derivative",
    "select_best",
    "service_moments",
    "shortest_path_tree",
    "solve_detailed",
    "solve_scalar",
    "solve_vector",
    "split_qos",
    "steiner_with_budget",
    "tau_max",
    "throughput_search",
    "tx_duration",
    "validate_tree",
]
