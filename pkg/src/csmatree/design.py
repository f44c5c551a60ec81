"""Topology construction and selection.

Shortest-path trees maximize the equal-rate inner bound (they minimize the
total hop count); the relay-budgeted construction trades hops for fewer
relays via local search with random restarts; candidate enumeration and the
grid throughput search mirror the brute-force optimality study.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from .bounds import QosTargets, ThroughputBounds, equal_rate_inner_throughput
from .detailed import solve_detailed, qna_delay
from .model import ArrivalRates, ModelError, NetworkGraph, ProtocolParams, TreeTopology, validate_tree
from .simplified import UnstableQueueError, node_delays, solve_vector


class DesignError(ModelError):
    pass


class CandidateCapError(DesignError):
    """Relay-subset enumeration would exceed the configured cap."""


def _bfs_distances(adj: dict[int, list[int]], root: int) -> dict[int, int]:
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _spt_from_distances(
    graph: NetworkGraph,
    adj: dict[int, list[int]],
    dist: dict[int, int],
    rng: random.Random | None = None,
) -> TreeTopology | None:
    """Parent map along BFS distances; smallest-id parent unless ``rng`` given."""
    sink = graph.sink
    parent: dict[int, int] = {}
    for u in adj:
        if u == sink or u not in dist:
            continue
        options = [v for v in adj[u] if dist.get(v, math.inf) == dist[u] - 1]
        if not options:
            return None
        parent[u] = options[0] if rng is None else rng.choice(options)
    missing = [k for k in graph.sources if k not in dist]
    if missing:
        return None
    return TreeTopology.from_parent(parent, graph.sources, sink)


def shortest_path_tree(
    graph: NetworkGraph, allowed: set[int] | None = None, rng: random.Random | None = None
) -> TreeTopology:
    """Hop-count BFS tree from the sink; each source's hop count equals its
    graph distance. Ties break to the smallest node id (or via ``rng``).

    Raises DesignError when some source is disconnected.
    """
    adj = graph.adjacency(allowed)
    if graph.sink not in adj:
        raise DesignError("sink not in the allowed node set")
    dist = _bfs_distances(adj, graph.sink)
    tree = _spt_from_distances(graph, adj, dist, rng)
    if tree is None:
        missing = sorted(k for k in graph.sources if k not in dist)
        raise DesignError(f"sources {missing} cannot reach the sink")
    return tree


@dataclass(frozen=True)
class DesignProblem:
    graph: NetworkGraph
    h_max: int
    n_max: int
    qos: QosTargets
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_max < 0:
            raise ModelError("n_max must be >= 0")
        if self.h_max < 1:
            raise ModelError("h_max must be >= 1")


@dataclass(frozen=True)
class SteinerResult:
    tree: TreeTopology
    feasible: bool
    relay_count: int
    total_hops: int
    restarts_used: int


def _reduce_relays(
    graph: NetworkGraph, tree: TreeTopology, h_max: int, n_max: int
) -> TreeTopology | None:
    """Local search: drop one relay at a time, re-running a hop-feasible SPT
    over the remaining nodes, until the relay budget holds. Returns None when
    stuck above the budget."""
    sources = set(graph.sources)
    current = tree
    while len(current.relays_used) > n_max:
        best: TreeTopology | None = None
        for drop in current.relays_used:
            allowed = set(sources) | {graph.sink}
            allowed.update(r for r in current.relays_used if r != drop)
            adj = graph.adjacency(allowed)
            dist = _bfs_distances(adj, graph.sink)
            cand = _spt_from_distances(graph, adj, dist, None)
            if cand is None or cand.max_hops > h_max:
                continue
            if best is None or cand.total_hops < best.total_hops:
                best = cand
        if best is None:
            return None
        current = best
    return current if current.max_hops <= h_max else None


def steiner_with_budget(problem: DesignProblem) -> SteinerResult:
    """Relay-budgeted, hop-constrained tree via restarted local search.

    Each restart begins from a randomly tie-broken shortest path tree and
    repeatedly removes one relay (re-running a hop-feasible SPT over the
    remaining nodes) until the relay count fits the budget or no removal
    stays feasible. Among feasible candidates over all restarts the one with
    the least total hop count wins. Seeded runs are reproducible.
    """
    graph, h_max, n_max = problem.graph, problem.h_max, problem.n_max
    rng = random.Random(problem.seed)
    best: TreeTopology | None = None
    fallback: TreeTopology | None = None
    for _ in range(max(1, problem.restarts)):
        start = shortest_path_tree(graph, rng=rng)
        if start.max_hops > h_max:
            continue
        if fallback is None or start.total_hops < fallback.total_hops:
            fallback = start
        reduced = _reduce_relays(graph, start, h_max, n_max)
        if reduced is None:
            continue
        if best is None or reduced.total_hops < best.total_hops:
            best = reduced
    if best is not None:
        return SteinerResult(
            best, True, len(best.relays_used), best.total_hops, problem.restarts
        )
    if fallback is None:
        raise DesignError("no hop-feasible tree exists for this graph")
    return SteinerResult(
        fallback, False, len(fallback.relays_used), fallback.total_hops, problem.restarts
    )


def enumerate_candidates(
    graph: NetworkGraph,
    h_max: int,
    base_spt: TreeTopology,
    max_subsets: int = 10**6,
):
    """Yield hop-feasible SPTs over sources plus every relay subset of size
    0..n_SPT, where n_SPT is the relay count of ``base_spt``.

    Subsets yielding disconnected sources or hop violations are discarded.
    Raises CandidateCapError up front when the subset count exceeds
    ``max_subsets``.
    """
    n_spt = len(base_spt.relays_used)
    relays = graph.relays
    total = sum(math.comb(len(relays), n) for n in range(n_spt + 1))
    if total > max_subsets:
        raise CandidateCapError(
            f"{total} relay subsets exceed the cap of {max_subsets}; "
            "restrict the relay set or lower the subset size"
        )
    sources = set(graph.sources)
    for n in range(n_spt + 1):
        for subset in combinations(relays, n):
            allowed = sources | {graph.sink} | set(subset)
            adj = graph.adjacency(allowed)
            dist = _bfs_distances(adj, graph.sink)
            tree = _spt_from_distances(graph, adj, dist, None)
            if tree is None or tree.max_hops > h_max:
                continue
            if not validate_tree(tree, graph, h_max):
                continue
            yield tree


DEFAULT_GRID_START = 0.001


def throughput_grid(step: float = 0.1, start: float = DEFAULT_GRID_START):
    """0.001, step, 2*step, ... (pkts/sec), unbounded generator."""
    yield start
    k = 1
    while True:
        yield round(k * step, 10)
        k += 1


@dataclass(frozen=True)
class QosProbe:
    rate_pps: float
    ok: bool
    max_delta: float
    max_hop_delay_s: float | None
    converged: bool


@dataclass(frozen=True)
class SearchResult:
    best_rate_pps: float
    trace: tuple[QosProbe, ...]


def qos_at_rate(
    tree: TreeTopology,
    rate_pps: float,
    qos: QosTargets,
    link_per: float,
    params: ProtocolParams,
    layer: str = "detailed",
    check_delay: bool = True,
) -> QosProbe:
    """Evaluate equal-arrival QoS at one rate: per-link discard (and per-link
    mean delay when requested) against the targets. Analysis failures at a
    point mark it violating."""
    rates = ArrivalRates.equal(tree.sources, rate_pps)
    try:
        if layer == "detailed":
            sol = solve_detailed(tree, rates, params, link_per)
            if not sol.converged or sol.saturated_nodes:
                return QosProbe(rate_pps, False, math.inf, None, False)
            max_delta = sol.max_delta()
            max_delay = None
            if check_delay:
                qna, _ = qna_delay(tree, sol, rates, params)
                max_delay = params.symbols_to_seconds(
                    max(s.sojourn for s in qna.values())
                )
        elif layer == "simplified":
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sol = solve_vector(tree, rates, params, link_per, delta_bar=qos.delta_bar)
            if not sol.converged:
                return QosProbe(rate_pps, False, math.inf, None, False)
            max_delta = sol.max_delta()
            max_delay = None
            if check_delay:
                max_delay = params.symbols_to_seconds(
                    max(node_delays(sol, params).values())
                )
        else:
            raise DesignError(f"unknown analysis layer {layer!r}")
    except UnstableQueueError:
        return QosProbe(rate_pps, False, math.inf, None, True)
    ok = max_delta <= qos.delta_bar
    if check_delay and max_delay is not None:
        ok = ok and max_delay <= qos.d_bar_seconds
    return QosProbe(rate_pps, ok, max_delta, max_delay, True)


def throughput_search(
    tree: TreeTopology,
    qos: QosTargets,
    link_per: float,
    params: ProtocolParams,
    layer: str = "detailed",
    grid_step: float = 0.1,
    check_delay: bool = True,
    extra_rates: tuple[float, ...] = (),
) -> SearchResult:
    """Largest equal arrival rate on the grid meeting the per-link targets.

    Climbs {0.001, step, 2 step, ...} merged with ``extra_rates`` and stops
    at the first violation (the QoS response is expected monotone; the trace
    records every probe for diagnostics).
    """
    probes: list[QosProbe] = []
    best = 0.0
    for rate in _merged_rates(grid_step, extra_rates):
        probe = qos_at_rate(tree, rate, qos, link_per, params, layer, check_delay)
        probes.append(probe)
        if not probe.ok:
            break
        best = rate
    return SearchResult(best, tuple(probes))


def _merged_rates(grid_step: float, extra_rates):
    """Strictly increasing merge of the default grid with extra probe rates."""
    gen = throughput_grid(grid_step)
    pending = sorted(set(extra_rates))
    nxt = next(gen)
    last = None
    while True:
        if pending and pending[0] <= nxt:
            rate = pending.pop(0)
        else:
            rate = nxt
            nxt = next(gen)
        if rate <= 0 or (last is not None and rate <= last):
            continue
        last = rate
        yield rate


@dataclass(frozen=True)
class DesignReport:
    mode: str
    seed: int
    tree_parent: dict[int, int]
    relay_count: int
    total_hops: int
    max_hops: int
    inner_bound_pps: float
    searched_pps: float | None
    layer: str
    qos_trace: tuple[QosProbe, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "parent": {str(k): v for k, v in sorted(self.tree_parent.items())},
            "relay_count": self.relay_count,
            "total_hops": self.total_hops,
            "max_hops": self.max_hops,
            "inner_bound_pps": self.inner_bound_pps,
            "searched_pps": self.searched_pps,
            "layer": self.layer,
            "trace": [
                {
                    "rate_pps": p.rate_pps,
                    "ok": p.ok,
                    "max_delta": p.max_delta,
                    "max_hop_delay_s": p.max_hop_delay_s,
                }
                for p in self.qos_trace
            ],
        }


def select_best(
    candidates,
    qos: QosTargets,
    link_per: float,
    params: ProtocolParams,
    layer: str = "detailed",
    grid_step: float = 0.1,
    check_delay: bool = False,
) -> tuple[TreeTopology, float]:
    """Argmax of searched throughput over candidate trees.

    Ties break to fewer relays, then lower total hops, then the smaller
    parent map (full determinism). Raises DesignError on an empty set.
    """
    best_tree: TreeTopology | None = None
    best_rate = -1.0
    best_key = None
    for tree in candidates:
        result = throughput_search(
            tree, qos, link_per, params, layer, grid_step, check_delay
        )
        key = (
            -result.best_rate_pps,
            len(tree.relays_used),
            tree.total_hops,
            sorted(tree.parent.items()),
        )
        if best_key is None or key < best_key:
            best_key = key
            best_tree = tree
            best_rate = result.best_rate_pps
    if best_tree is None:
        raise DesignError("empty candidate set")
    return best_tree, best_rate
