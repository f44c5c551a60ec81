import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmatree.model import (
    ArrivalRates,
    Edge,
    ModelError,
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

DEFAULTS = ProtocolParams()


def chain_tree(n_sources):
    # s_n -> ... -> s_1 -> sink
    parent = {i: i - 1 for i in range(1, n_sources + 1)}
    return TreeTopology.from_parent(parent, range(1, n_sources + 1))


def star_tree(m):
    parent = {i: 0 for i in range(1, m + 1)}
    return TreeTopology.from_parent(parent, range(1, m + 1))


class TestTxDuration:
    def test_default_packet(self):
        assert tx_duration(DEFAULTS) == 262  # 4.192 ms at 16 us/symbol

    def test_empty_packet_rejected(self):
        with pytest.raises(ModelError):
            ProtocolParams(packet_bytes=0)

    def test_single_byte(self):
        assert tx_duration(ProtocolParams(packet_bytes=1)) == 2


class TestBackoffStages:
    def test_defaults(self):
        assert backoff_stage_means(DEFAULTS) == (78, 158, 318, 318, 318)

    def test_degenerate_window(self):
        p = ProtocolParams(n_c=1, be_min=0, be_max=0)
        assert backoff_stage_means(p) == (8,)

    def test_single_stage_defaults(self):
        assert backoff_stage_means(ProtocolParams(n_c=1)) == (78,)


class TestMeanBackoff:
    def test_alpha_zero(self):
        assert mean_backoff(DEFAULTS, 0.0) == 78

    def test_alpha_one(self):
        assert mean_backoff(DEFAULTS, 1.0) == 1190

    def test_two_stage_midpoint(self):
        p = ProtocolParams(n_c=2)
        assert backoff_stage_means(p) == (78, 158)
        assert mean_backoff(p, 0.5) == 78 + 0.5 * 158


class TestBetaFromAlpha:
    def test_exact_anchors(self):
        assert beta_from_alpha(DEFAULTS, 0.0) == 1 / 78
        assert beta_from_alpha(DEFAULTS, 1.0) == 1 / 238

    def test_two_stage(self):
        p = ProtocolParams(n_c=2)
        assert beta_from_alpha(p, 0.5) == pytest.approx(1.5 / 157, rel=1e-15)

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200)
    def test_nonincreasing(self, a1, a2):
        lo, hi = sorted((a1, a2))
        assert beta_from_alpha(DEFAULTS, lo) >= beta_from_alpha(DEFAULTS, hi) - 1e-15

    @given(st.floats(0, 1))
    def test_default_bounds(self, a):
        b = beta_from_alpha(DEFAULTS, a)
        assert 1 / 238 - 1e-15 <= b <= 1 / 78 + 1e-15


class TestNodeLoads:
    def test_zero_rates(self):
        tree = chain_tree(2)
        assert node_loads(tree, {1: 0.0, 2: 0.0}) == {1: 0.0, 2: 0.0}

    def test_chain_aggregation(self):
        # s1 is next to the sink and relays s2
        tree = chain_tree(2)
        nu = node_loads(tree, {1: 1.0, 2: 1.0})
        assert nu == {1: 2.0, 2: 1.0}

    def test_star(self):
        m, lam = 7, 0.3
        tree = star_tree(m)
        nu = node_loads(tree, {k: lam for k in range(1, m + 1)})
        assert all(v == lam for v in nu.values())
        assert sum(nu.values()) == pytest.approx(m * lam)

    def test_missing_rate(self):
        with pytest.raises(ModelError):
            node_loads(chain_tree(2), {1: 1.0})


def grid_graph(h_max_chain):
    """Sink plus a chain of sources of the given length, all edges admissible."""
    nodes = [Node(0, "sink")] + [Node(i, "source") for i in range(1, h_max_chain + 1)]
    edges = [Edge(i, i - 1, 0.01) for i in range(1, h_max_chain + 1)]
    return NetworkGraph(tuple(nodes), tuple(edges))


class TestValidateTree:
    def test_accept(self):
        g = grid_graph(3)
        tree = chain_tree(3)
        assert validate_tree(tree, g, 5)

    def test_hop_violation(self):
        g = grid_graph(6)
        tree = TreeTopology.from_parent({i: i - 1 for i in range(1, 7)}, [6])
        verdict = validate_tree(tree, g, 5)
        assert not verdict
        assert "source 6" in verdict.reason

    def test_non_graph_edge(self):
        g = grid_graph(2)
        tree = TreeTopology.from_parent({1: 0, 2: 0}, [1, 2])  # 2-0 not an edge
        verdict = validate_tree(tree, g, 5)
        assert not verdict
        assert "(2,0)" in verdict.reason


class TestTreeTopology:
    def test_double_counting(self):
        # sum_k h_k equals sum over transmitting nodes of the load multiplier
        tree = TreeTopology.from_parent({1: 0, 2: 1, 3: 1, 4: 2}, [2, 3, 4])
        assert tree.total_hops == sum(tree.load_multiplier.values())

    @given(st.integers(2, 12), st.randoms(use_true_random=False))
    @settings(max_examples=60)
    def test_double_counting_random(self, n, rng):
        parent = {i: rng.randrange(0, i) for i in range(1, n + 1)}
        sources = [i for i in range(1, n + 1) if rng.random() < 0.7] or [n]
        tree = TreeTopology.from_parent(parent, sources)
        assert tree.total_hops == sum(tree.load_multiplier.values())

    def test_cycle_rejected(self):
        with pytest.raises(ModelError):
            TreeTopology.from_parent({1: 2, 2: 1}, [1])

    def test_unreachable_rejected(self):
        with pytest.raises(ModelError):
            TreeTopology.from_parent({1: 0}, [2])

    def test_pruning(self):
        # node 9 hangs off the tree but routes no source: dropped
        tree = TreeTopology.from_parent({1: 0, 9: 1}, [1])
        assert tree.transmitters == (1,)

    def test_topo_order_children_first(self):
        tree = TreeTopology.from_parent({1: 0, 2: 1, 3: 2, 4: 1}, [3, 4])
        order = tree.topo_order()
        assert order.index(3) < order.index(2) < order.index(1)
        assert order.index(4) < order.index(1)


class TestUnits:
    @given(st.floats(1e-6, 1e6))
    def test_rate_round_trip(self, pps):
        p = DEFAULTS
        back = p.rate_to_per_sec(p.rate_to_per_symbol(pps))
        assert abs(back - pps) / pps < 1e-12

    def test_graph_invariants(self):
        with pytest.raises(ModelError):
            NetworkGraph((Node(0, "sink"), Node(1, "sink")), ())
        with pytest.raises(ModelError):
            NetworkGraph(
                (Node(0, "sink"), Node(1, "source")),
                (Edge(0, 1, 0.5),),
                worst_case_per=0.02,
            )

    def test_arrival_rates(self):
        with pytest.raises(ModelError):
            ArrivalRates({1: -0.1})
        r = ArrivalRates.equal([1, 2], 3.0)
        assert r.per_symbol(DEFAULTS)[1] == pytest.approx(3.0 * 16e-6)
