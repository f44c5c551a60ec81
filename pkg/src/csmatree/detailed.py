"""Full per-node MAC fixed point and the two-moment queueing delay chain.

This is the reference analysis: per-node CCA failure, collision, discard,
and queue-occupancy probabilities coupled through every node's perceived
attempt rate, plus a GI/GI/1 delay recursion that carries interarrival
variability down the tree. The low-discard layer in :mod:`simplified` is
validated against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .model import (
    ArrivalRates,
    ProtocolParams,
    TreeTopology,
    backoff_stage_means,
    beta_from_alpha,
    mean_backoff,
)
from .simplified import SolverError, UnstableQueueError


@dataclass(frozen=True)
class DetailedNodeState:
    """Converged per-node quantities (rates per symbol, times in symbols)."""

    beta: float  # CCA attempt rate while in backoff
    alpha: float  # CCA failure probability
    eta: float  # wins-backoff-first probability
    c: float  # finishes backoff within the 12-symbol window
    tau_perceived: float  # this node's attempt rate as others perceive it
    b: float  # fraction of non-empty time spent in backoff
    q: float  # queue non-empty probability, min{1, nu/sigma}
    p: float  # collision probability given transmission
    gamma: float  # transmission failure probability
    r: float  # attempted-and-failed probability, gamma(1 - alpha^n_c)
    sigma_inv: float  # mean HOL service time
    delta: float  # packet discard probability
    nu: float  # total arrival rate
    theta: float  # goodput, nu(1 - delta)


@dataclass(frozen=True)
class DetailedSolution:
    nodes: tuple[int, ...]
    states: dict[int, DetailedNodeState]
    converged: bool
    iterations: int
    residual: float
    saturated_nodes: tuple[int, ...]

    def tau_minus(self, node: int) -> float:
        """Total attempt rate perceived by ``node`` (everyone else's tau)."""
        total = sum(s.tau_perceived for s in self.states.values())
        return total - self.states[node].tau_perceived

    def tau_minus_map(self) -> dict[int, float]:
        total = sum(s.tau_perceived for s in self.states.values())
        return {i: total - s.tau_perceived for i, s in self.states.items()}

    def max_delta(self) -> float:
        return max(s.delta for s in self.states.values())


def solve_detailed(
    tree: TreeTopology,
    rates: ArrivalRates,
    params: ProtocolParams,
    link_per: float,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    damping: float = 0.5,
) -> DetailedSolution:
    """Damped successive substitution on the full fixed point.

    The residual is the max-norm over the per-node (tau, alpha) updates.
    Non-convergence is reported on the result, not raised; saturated nodes
    (queue-busy probability clamped at 1) are listed and indicate the load
    is outside the model's stable range.
    """
    nodes = tree.transmitters
    index = {node: pos for pos, node in enumerate(nodes)}
    lam_map = rates.per_symbol(params)
    lam = np.array([lam_map.get(i, 0.0) for i in nodes])
    parent_idx = np.array(
        [index.get(tree.parent[i], -1) for i in nodes], dtype=np.int32
    )
    order = np.array([index[i] for i in tree.topo_order()], dtype=np.int32)
    stages = np.array(backoff_stage_means(params))

    tau, alpha, nu, delta, iterations, residual, _ = backend.detailed_kernel(
        lam,
        parent_idx,
        order,
        stages,
        params.tx_symbols,
        params.n_c,
        params.n_t,
        link_per,
        tol,
        max_iter,
        damping,
    )

    total_tau = float(tau.sum())
    states: dict[int, DetailedNodeState] = {}
    saturated = []
    for i in nodes:
        pos = index[i]
        st = _node_state(
            params,
            link_per,
            float(alpha[pos]),
            float(tau[pos]),
            total_tau - float(tau[pos]),
            float(nu[pos]),
        )
        states[i] = st
        if st.q >= 1.0:
            saturated.append(i)
    return DetailedSolution(
        nodes=nodes,
        states=states,
        converged=residual < tol,
        iterations=iterations,
        residual=residual,
        saturated_nodes=tuple(saturated),
    )


def _node_state(
    params: ProtocolParams,
    link_per: float,
    alpha: float,
    tau: float,
    tau_minus: float,
    nu: float,
) -> DetailedNodeState:
    beta = beta_from_alpha(params, alpha)
    eta = beta / (beta + tau_minus)
    c = 1.0 - math.exp(-12.0 * beta)
    p = collision_probability(eta, c, tau_minus)
    gamma = p + (1.0 - p) * link_per
    anc = alpha**params.n_c
    r = gamma * (1.0 - anc)
    sumr = sum(r**j for j in range(params.n_t))
    bbar = mean_backoff(params, alpha)
    sigma_inv = (bbar + (1.0 - anc) * params.tx_symbols) * sumr
    delta = anc * sumr + r**params.n_t
    q = min(1.0, nu * sigma_inv)
    b = bbar / (bbar + (1.0 - anc) * params.tx_symbols)
    return DetailedNodeState(
        beta=beta,
        alpha=alpha,
        eta=eta,
        c=c,
        tau_perceived=tau,
        b=b,
        q=q,
        p=p,
        gamma=gamma,
        r=r,
        sigma_inv=sigma_inv,
        delta=delta,
        nu=nu,
        theta=nu * (1.0 - delta),
    )


def collision_probability(eta: float, c: float, tau_minus: float) -> float:
    """Collision probability of a transmitted packet.

    Either this node won the backoff race and someone else's CCA landed in
    the 12-symbol turnaround window, or someone else won and this node's CCA
    landed in theirs. An idle network (eta = c = 0) yields 0.
    """
    den = eta + (1.0 - eta) * c
    if den <= 0.0:
        return 0.0
    r3 = eta * (1.0 - math.exp(-12.0 * tau_minus))
    r4 = (1.0 - eta) * c
    return (r3 + r4) / den


def service_mgf(params: ProtocolParams, alpha: float, gamma: float, beta: float, z: float) -> float:
    """Moment generating function of the HOL service time at argument ``z``."""
    d = beta * (1.0 - alpha)
    t = params.tx_symbols
    return d * (1.0 - gamma) * math.exp(-z * t) / (z + d * (1.0 - gamma * math.exp(-z * t)))


def service_moments(
    params: ProtocolParams, alpha: float, gamma: float, beta: float
) -> tuple[float, float, float]:
    """(E(S), E(S^2), c_S^2) from the service-time MGF's closed-form derivatives."""
    if gamma >= 1.0:
        raise SolverError("gamma = 1 gives divergent service time")
    if beta <= 0.0 or alpha >= 1.0:
        raise SolverError("service moments need beta > 0 and alpha < 1")
    d = beta * (1.0 - alpha)
    t = params.tx_symbols
    dg = d * (1.0 - gamma)
    es = (1.0 + d * t) / dg
    es2 = (
        t * t
        + 2.0 * t / dg
        + 3.0 * gamma * t * t / (1.0 - gamma)
        + 2.0 * (1.0 + d * gamma * t) ** 2 / (dg * dg)
    )
    cs2 = es2 / (es * es) - 1.0
    return es, es2, cs2


@dataclass(frozen=True)
class QnaNodeState:
    es: float  # mean service time (symbols)
    es2: float  # second moment (symbols^2)
    cs2: float  # service-time squared coefficient of variation
    ca2: float  # interarrival squared coefficient of variation
    cd2: float  # departure squared coefficient of variation
    rho: float  # utilization
    sojourn: float  # mean sojourn time (symbols)
    total_in: float  # total arrival rate (per symbol)


def qna_delay(
    tree: TreeTopology,
    solution: DetailedSolution,
    rates: ArrivalRates,
    params: ProtocolParams,
) -> tuple[dict[int, QnaNodeState], dict[int, float]]:
    """Two-moment delay chain over the tree.

    Sources inject Poisson traffic (c_A^2 = 1); downstream interarrival
    variability follows from superposing predecessor departures. Returns the
    per-node states and the per-source end-to-end mean delay in symbols.
    Raises UnstableQueueError naming the first node with utilization >= 1.
    """
    lam_map = rates.per_symbol(params)
    children = tree.children()
    qna: dict[int, QnaNodeState] = {}
    for i in tree.topo_order():  # leaves first: predecessors before the node
        st = solution.states[i]
        es, es2, cs2 = service_moments(params, st.alpha, st.gamma, st.beta)
        total_in = st.nu
        rho = total_in * es
        if rho >= 1.0:
            raise UnstableQueueError(f"utilization {rho:.4f} >= 1 at node {i}")
        lam_i = lam_map.get(i, 0.0)
        if total_in > 0.0:
            ca2 = (
                lam_i + sum(qna[j].total_in * qna[j].cd2 for j in children[i])
            ) / total_in
        else:
            ca2 = 1.0
        cd2 = (1.0 - st.delta) * (
            1.0 + rho * rho * (cs2 - 1.0) + (1.0 - rho * rho) * (ca2 - 1.0)
        )
        sojourn = rho * es * (ca2 + cs2) / (2.0 * (1.0 - rho)) + es
        qna[i] = QnaNodeState(
            es=es,
            es2=es2,
            cs2=cs2,
            ca2=ca2,
            cd2=cd2,
            rho=rho,
            sojourn=sojourn,
            total_in=total_in,
        )
    delays = {
        k: sum(qna[i].sojourn for i in tree.routed[k]) for k in tree.sources
    }
    return qna, delays


def end_to_end(
    tree: TreeTopology,
    solution: DetailedSolution,
    rates: ArrivalRates,
    params: ProtocolParams,
) -> dict[int, tuple[float, float]]:
    """Per-source (delivery probability, mean delay in symbols)."""
    _, delays = qna_delay(tree, solution, rates, params)
    out = {}
    for k in tree.sources:
        prob = 1.0
        for i in tree.routed[k]:
            prob *= 1.0 - solution.states[i].delta
        out[k] = (prob, delays[k])
    return out
