"""Network/tree data model, protocol parameters, and timing conversions.

All internal arithmetic is in symbol-time units (rates in packets/symbol,
durations in symbols). Conversion to and from seconds happens only at I/O
boundaries via :meth:`ProtocolParams.rate_to_per_symbol` and friends.
Node ids are dense integers; the sink is id 0 by convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

SINK_ID = 0

SOURCE = "source"
RELAY = "relay"
SINK = "sink"


class ModelError(ValueError):
    """Invalid model input (bad parameters, malformed graph or tree)."""


@dataclass(frozen=True)
class ProtocolParams:
    """Unslotted CSMA/CA parameters in symbol-time units.

    ``n_c`` is the maximum number of successive CCA failures before a packet
    is discarded (macMaxCSMABackoffs + 1) and ``n_t`` the maximum number of
    transmission failures before discard (aMaxFrameRetries + 1). Defaults
    follow the standard: macminBE=3, macmaxBE=5, macMaxCSMABackoffs=4,
    aMaxFrameRetries=3.
    """

    n_c: int = 5
    n_t: int = 4
    be_min: int = 3
    be_max: int = 5
    slot_symbols: int = 20
    cca_symbols: int = 8
    turnaround_symbols: int = 12
    ack_symbols: int = 22
    symbol_seconds: float = 16e-6
    packet_bytes: int = 131

    def __post_init__(self):
        if self.n_c < 1:
            raise ModelError("n_c must be >= 1")
        if self.n_t < 1:
            raise ModelError("n_t must be >= 1")
        if self.be_min > self.be_max:
            raise ModelError("be_min must be <= be_max")
        if self.be_min < 0:
            raise ModelError("backoff exponents must be nonnegative")
        if self.packet_bytes <= 0:
            raise ModelError("packet_bytes must be positive")
        if self.symbol_seconds <= 0:
            raise ModelError("symbol_seconds must be positive")

    @property
    def tx_symbols(self) -> float:
        """Data frame airtime: 2 symbols per byte (O-QPSK, 4 bits/symbol)."""
        return 2.0 * self.packet_bytes

    def rate_to_per_symbol(self, pkts_per_sec: float) -> float:
        return pkts_per_sec * self.symbol_seconds

    def rate_to_per_sec(self, pkts_per_symbol: float) -> float:
        return pkts_per_symbol / self.symbol_seconds

    def seconds_to_symbols(self, seconds: float) -> float:
        return seconds / self.symbol_seconds

    def symbols_to_seconds(self, symbols: float) -> float:
        return symbols * self.symbol_seconds


def tx_duration(params: ProtocolParams) -> float:
    """Packet transmission time T_tx in symbols (data frame only)."""
    if params.packet_bytes <= 0:
        raise ModelError("packet_bytes must be positive")
    return params.tx_symbols


def backoff_stage_means(params: ProtocolParams) -> tuple[float, ...]:
    """Mean duration of each backoff stage (window mean plus one CCA).

    Stage k draws uniformly from {0, ..., 2^BE - 1} slots with
    BE = min(be_min + k, be_max); the stage ends with an 8-symbol CCA.
    Defaults give (78, 158, 318, 318, 318).
    """
    out = []
    for k in range(params.n_c):
        be = min(params.be_min + k, params.be_max)
        window_mean_slots = (2**be - 1) / 2.0
        out.append(params.slot_symbols * window_mean_slots + params.cca_symbols)
    return tuple(out)


def mean_backoff(params: ProtocolParams, alpha: float) -> float:
    """Mean total backoff time of a head-of-line packet, B(alpha).

    Stage k is reached only after k successive CCA failures, so its mean
    contributes with weight alpha^k.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ModelError("alpha must lie in [0, 1]")
    stages = backoff_stage_means(params)
    return sum(alpha**k * stages[k] for k in range(params.n_c))


def attempt_sum(params: ProtocolParams, alpha: float) -> float:
    """Mean number of CCA attempts per head-of-line packet, 1+alpha+...+alpha^(n_c-1)."""
    return sum(alpha**k for k in range(params.n_c))


def beta_from_alpha(params: ProtocolParams, alpha: float) -> float:
    """CCA attempt rate while in backoff (per symbol).

    Ratio of mean CCA attempts to mean backoff time; nonincreasing in alpha.
    Defaults pin beta(0) = 1/78 and beta(1) = 1/238.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ModelError("alpha must lie in [0, 1]")
    return attempt_sum(params, alpha) / mean_backoff(params, alpha)


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        if self.kind not in (SOURCE, RELAY, SINK):
            raise ModelError(f"unknown node kind {self.kind!r}")


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    per: float

    def __post_init__(self):
        if self.a == self.b:
            raise ModelError(f"self-loop at node {self.a}")
        if not 0.0 <= self.per <= 1.0:
            raise ModelError("per-link PER must lie in [0, 1]")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class NetworkGraph:
    """Simple undirected graph over one sink, sources, and candidate relays."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    worst_case_per: float = 0.02

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate node ids")
        sinks = [n for n in self.nodes if n.kind == SINK]
        if len(sinks) != 1:
            raise ModelError("graph must contain exactly one sink")
        id_set = set(ids)
        seen = set()
        for e in self.edges:
            if e.a not in id_set or e.b not in id_set:
                raise ModelError(f"edge ({e.a},{e.b}) references unknown node")
            if e.key in seen:
                raise ModelError(f"duplicate edge ({e.a},{e.b})")
            seen.add(e.key)
            if e.per > self.worst_case_per + 1e-15:
                raise ModelError(
                    f"edge ({e.a},{e.b}) PER {e.per} exceeds target {self.worst_case_per}"
                )

    @property
    def sink(self) -> int:
        return next(n.id for n in self.nodes if n.kind == SINK)

    @property
    def sources(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.kind == SOURCE))

    @property
    def relays(self) -> tuple[int, ...]:
        return tuple(sorted(n.id for n in self.nodes if n.kind == RELAY))

    def node(self, node_id: int) -> Node:
        return next(n for n in self.nodes if n.id == node_id)

    def adjacency(self, allowed: set[int] | None = None) -> dict[int, list[int]]:
        """Neighbor lists (sorted for determinism), optionally restricted."""
        adj: dict[int, list[int]] = {}
        ids = {n.id for n in self.nodes} if allowed is None else allowed
        for i in ids:
            adj[i] = []
        for e in self.edges:
            if e.a in ids and e.b in ids:
                adj[e.a].append(e.b)
                adj[e.b].append(e.a)
        for i in adj:
            adj[i].sort()
        return adj

    def has_edge(self, a: int, b: int) -> bool:
        key = frozenset((a, b))
        return any(e.key == key for e in self.edges)


@dataclass(frozen=True)
class TreeTopology:
    """Tree rooted at the sink, given by a parent map over transmitting nodes.

    ``hops[k]`` is the hop count from source k to the sink, ``routed[k]``
    the tuple of transmitting nodes on k's path (source first), and
    ``load_multiplier[j]`` the number of sources whose paths use node j.
    """

    sink: int
    sources: tuple[int, ...]
    parent: dict[int, int]
    hops: dict[int, int] = field(default_factory=dict)
    routed: dict[int, tuple[int, ...]] = field(default_factory=dict)
    load_multiplier: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_parent(cls, parent: dict[int, int], sources, sink: int = SINK_ID) -> "TreeTopology":
        sources = tuple(sorted(sources))
        if sink in parent:
            raise ModelError("sink must not have a parent")
        hops: dict[int, int] = {}
        routed: dict[int, tuple[int, ...]] = {}
        mult: dict[int, int] = {}
        used: set[int] = set()
        for k in sources:
            path = []
            u = k
            while u != sink:
                if u in path:
                    raise ModelError(f"cycle through node {u}")
                if u not in parent:
                    raise ModelError(f"source {k}: node {u} has no parent")
                path.append(u)
                u = parent[u]
                if len(path) > len(parent) + 1:
                    raise ModelError(f"source {k} does not reach the sink")
            hops[k] = len(path)
            routed[k] = tuple(path)
            used.update(path)
            for j in path:
                mult[j] = mult.get(j, 0) + 1
        # keep only the parent entries actually on some source path
        pruned = {u: parent[u] for u in used}
        return cls(
            sink=sink,
            sources=sources,
            parent=pruned,
            hops=hops,
            routed=routed,
            load_multiplier=mult,
        )

    @property
    def transmitters(self) -> tuple[int, ...]:
        """All transmitting nodes (every tree node except the sink)."""
        return tuple(sorted(self.parent))

    @property
    def relays_used(self) -> tuple[int, ...]:
        src = set(self.sources)
        return tuple(sorted(u for u in self.parent if u not in src))

    @property
    def total_hops(self) -> int:
        return sum(self.hops.values())

    @property
    def max_hops(self) -> int:
        return max(self.hops.values()) if self.hops else 0

    def children(self) -> dict[int, list[int]]:
        ch: dict[int, list[int]] = {u: [] for u in self.parent}
        ch[self.sink] = []
        for u, p in sorted(self.parent.items()):
            ch[p].append(u)
        return ch

    def topo_order(self) -> list[int]:
        """Transmitting nodes ordered leaves-first (children before parents)."""
        ch = self.children()
        order: list[int] = []

        def visit(u: int):
            for c in ch[u]:
                visit(c)
            if u != self.sink:
                order.append(u)

        visit(self.sink)
        return order


@dataclass(frozen=True)
class ArrivalRates:
    """Per-source exogenous rates, stored in packets/sec."""

    pkts_per_sec: dict[int, float]

    def __post_init__(self):
        for k, v in self.pkts_per_sec.items():
            if v < 0:
                raise ModelError(f"negative arrival rate at source {k}")

    @classmethod
    def equal(cls, sources, rate: float) -> "ArrivalRates":
        return cls({k: rate for k in sources})

    def per_symbol(self, params: ProtocolParams) -> dict[int, float]:
        return {k: params.rate_to_per_symbol(v) for k, v in self.pkts_per_sec.items()}


def node_loads(tree: TreeTopology, lam: dict[int, float]) -> dict[int, float]:
    """Offered load into each transmitting node assuming no discards.

    ``lam`` maps every source to its rate; the unit of the result matches the
    input unit. The sink is excluded.
    """
    missing = [k for k in tree.sources if k not in lam]
    if missing:
        raise ModelError(f"missing arrival rate for sources {missing}")
    nu = {u: 0.0 for u in tree.transmitters}
    for k in tree.sources:
        for j in tree.routed[k]:
            nu[j] += lam[k]
    return nu


@dataclass(frozen=True)
class TreeVerdict:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_tree(tree: TreeTopology, graph: NetworkGraph, h_max: int) -> TreeVerdict:
    """Check that all tree edges exist in the graph and hop counts obey h_max."""
    edge_keys = {e.key for e in graph.edges}
    for u in sorted(tree.parent):
        p = tree.parent[u]
        if frozenset((u, p)) not in edge_keys:
            return TreeVerdict(False, f"tree edge ({u},{p}) is not a graph edge")
    for k in tree.sources:
        if tree.hops[k] > h_max:
            return TreeVerdict(False, f"source {k} uses {tree.hops[k]} hops > h_max={h_max}")
    return TreeVerdict(True)
