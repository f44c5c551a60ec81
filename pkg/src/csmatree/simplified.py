"""Low-discard-regime analysis: vector and scalar fixed points, the shared
discard formula, M/G/1 per-node delay, and the scalar-dominates-vector check.

The vector fixed point couples the attempt rate each node perceives,
tau_minus_i, to the per-node CCA failure probability; in the uniqueness
regime (total load below ``bound_b1``) the map is a contraction on [0, a]^N
and plain iteration from zero converges. The scalar fixed point collapses
the network to its total attempt rate driven by the total load
M = sum_k lambda_k h_k.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .model import (
    ArrivalRates,
    ModelError,
    ProtocolParams,
    TreeTopology,
    attempt_sum,
    beta_from_alpha,
    node_loads,
)


class SolverError(RuntimeError):
    pass


class UnstableQueueError(SolverError):
    """A node's M/G/1 utilization reached 1."""


class RegimeWarning(UserWarning):
    """Operating point outside the guaranteed-uniqueness regime."""


def alpha_from_tau(params: ProtocolParams, tau_minus: float) -> float:
    """CCA failure probability seen at perceived attempt rate tau_minus."""
    t = params.tx_symbols * tau_minus
    return t / (1.0 + t)


def gamma_from_tau(params: ProtocolParams, tau_minus: float, link_per: float) -> float:
    """Transmission failure probability: link error or vulnerable-window collision."""
    return link_per + (1.0 - link_per) * (1.0 - math.exp(-12.0 * tau_minus))


def discard_probability(alpha: float, gamma: float, params: ProtocolParams) -> float:
    """Per-node packet discard probability.

    A packet is lost either to n_c successive CCA failures during one of its
    up-to-n_t transmission rounds, or to n_t failed transmissions:
    delta = alpha^n_c (1 + r + ... + r^(n_t-1)) + r^n_t with
    r = gamma (1 - alpha^n_c). Shared by the detailed and simplified layers.
    """
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= gamma <= 1.0:
        raise ModelError("alpha and gamma must lie in [0, 1]")
    anc = alpha**params.n_c
    r = gamma * (1.0 - anc)
    sumr = sum(r**j for j in range(params.n_t))
    return anc * sumr + r**params.n_t


def discard_from_tau(params: ProtocolParams, tau_minus: float, link_per: float) -> float:
    return discard_probability(
        alpha_from_tau(params, tau_minus),
        gamma_from_tau(params, tau_minus, link_per),
        params,
    )


@dataclass(frozen=True)
class SimplifiedSolution:
    nodes: tuple[int, ...]
    tau_minus: dict[int, float]
    alpha: dict[int, float]
    gamma: dict[int, float]
    delta: dict[int, float]
    nu: dict[int, float]  # offered loads (packets/symbol), no-discard approximation
    converged: bool
    iterations: int
    residual: float
    in_regime: bool

    def max_delta(self) -> float:
        return max(self.delta.values()) if self.delta else 0.0

    def delivery(self, tree: TreeTopology) -> dict[int, float]:
        """End-to-end delivery probability per source."""
        out = {}
        for k in tree.sources:
            prob = 1.0
            for i in tree.routed[k]:
                prob *= 1.0 - self.delta[i]
            out[k] = prob
        return out


def total_load(tree: TreeTopology, rates: ArrivalRates, params: ProtocolParams) -> float:
    """M = sum_k lambda_k h_k in packets/symbol."""
    lam = rates.per_symbol(params)
    return sum(lam[k] * tree.hops[k] for k in tree.sources)


def vector_step(
    params: ProtocolParams, nu: dict[int, float], x: dict[int, float]
) -> dict[int, float]:
    """One substitution step of the vector map: x_i <- sum_{j!=i} nu_j g(alpha(x_j))."""
    g = {
        j: nu[j] * attempt_sum(params, alpha_from_tau(params, x[j])) for j in x
    }
    total = sum(g.values())
    return {i: total - g[i] for i in x}


def solve_vector(
    tree: TreeTopology,
    rates: ArrivalRates,
    params: ProtocolParams,
    link_per: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    delta_bar: float = 0.0208,
    x0: dict[int, float] | None = None,
) -> SimplifiedSolution:
    """Solve the vector fixed point over the tree's transmitting nodes.

    Inside the uniqueness regime (total load below bound_b1(delta_bar)) plain
    iteration from zero is used; outside, iteration proceeds with damping 0.5
    and a RegimeWarning (non-uniqueness possible) instead of refusing, which
    the throughput search needs near the boundary. ``delta_bar`` only feeds
    the regime check; its default is the conventional 90%-delivery/5-hop
    target.
    """
    from .bounds import bound_b1  # deferred: bounds builds on this module

    nodes = tree.transmitters
    lam = rates.per_symbol(params)
    nu = node_loads(tree, lam)
    m_load = total_load(tree, rates, params)
    b1 = params.rate_to_per_symbol(bound_b1(delta_bar, params))
    in_regime = m_load < b1
    damping = 1.0 if in_regime else 0.5
    if not in_regime:
        warnings.warn(
            f"total load {m_load:.3e}/symbol is outside the uniqueness regime "
            f"({b1:.3e}); iterating with damping",
            RegimeWarning,
            stacklevel=2,
        )
    nu_arr = np.array([nu[i] for i in nodes])
    x0_arr = None if x0 is None else np.array([x0[i] for i in nodes])
    x, iterations, residual = backend.vector_kernel(
        nu_arr, params.tx_symbols, params.n_c, tol, max_iter, damping, x0_arr
    )
    converged = residual < tol
    tau_minus = {i: float(x[pos]) for pos, i in enumerate(nodes)}
    alpha = {i: alpha_from_tau(params, tau_minus[i]) for i in nodes}
    gamma = {i: gamma_from_tau(params, tau_minus[i], link_per) for i in nodes}
    delta = {i: discard_probability(alpha[i], gamma[i], params) for i in nodes}
    return SimplifiedSolution(
        nodes=nodes,
        tau_minus=tau_minus,
        alpha=alpha,
        gamma=gamma,
        delta=delta,
        nu=nu,
        converged=converged,
        iterations=iterations,
        residual=residual,
        in_regime=in_regime,
    )


@dataclass(frozen=True)
class ScalarSolution:
    tau_bar: float
    alpha: float
    total_load: float
    converged: bool
    iterations: int


def solve_scalar(
    m_load: float,
    params: ProtocolParams,
    tol: float = 1e-14,
    max_iter: int = 100_000,
) -> ScalarSolution:
    """Solve tau = M (1 + alpha + ... + alpha^(n_c-1)), alpha = T tau/(1+T tau).

    ``m_load`` is the total network load in packets/symbol. Initialized at M;
    unique in [0, a] whenever the vector regime condition holds.
    """
    if m_load < 0:
        raise ModelError("total load must be nonnegative")
    if m_load == 0.0:
        return ScalarSolution(0.0, 0.0, 0.0, True, 0)
    tau = m_load
    converged = False
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        a = alpha_from_tau(params, tau)
        new = m_load * attempt_sum(params, a)
        if abs(new - tau) < tol:
            tau = new
            converged = True
            break
        tau = new
    return ScalarSolution(tau, alpha_from_tau(params, tau), m_load, converged, iterations)


def scalar_derivative(m_load: float, params: ProtocolParams) -> float:
    """Closed-form derivative of the scalar fixed point tau(M).

    d tau / dM = (tau/M) / (1 - M g'(tau)) with g the attempt-sum map; the
    M -> 0 limit is g(0) = 1.
    """
    if m_load < 0:
        raise ModelError("total load must be nonnegative")
    if m_load == 0.0:
        return 1.0
    sol = solve_scalar(m_load, params)
    t = params.tx_symbols
    a = sol.alpha
    dg_da = sum(k * a ** (k - 1) for k in range(1, params.n_c))
    da_dtau = t / (1.0 + t * sol.tau_bar) ** 2
    g_prime = dg_da * da_dtau
    return (sol.tau_bar / m_load) / (1.0 - m_load * g_prime)


def service_mean_simplified(
    params: ProtocolParams, alpha: float, gamma: float, beta: float
) -> float:
    """Mean head-of-line service time E(S) in symbols (geometric retries)."""
    if gamma >= 1.0:
        raise SolverError("gamma = 1 gives divergent service time")
    d = beta * (1.0 - alpha)
    return (1.0 + d * params.tx_symbols) / (d * (1.0 - gamma))


def service_cs2_simplified(
    params: ProtocolParams, alpha: float, gamma: float, beta: float
) -> float:
    """Squared coefficient of variation of the service time (low-gamma form)."""
    u = beta * (1.0 - alpha) * params.tx_symbols
    return gamma + 1.0 / (1.0 + u) ** 2


def mg1_delay(
    nu: float,
    alpha: float,
    gamma: float,
    beta: float,
    params: ProtocolParams,
    node: int | None = None,
) -> float:
    """Mean sojourn time (symbols) of an M/G/1 node at offered load ``nu``/symbol.

    Pollaczek-Khinchine with the simplified service moments:
    rho E(S)(1+c_S^2)/(2(1-rho)) + E(S).
    """
    es = service_mean_simplified(params, alpha, gamma, beta)
    rho = nu * es
    if rho >= 1.0:
        where = f" at node {node}" if node is not None else ""
        raise UnstableQueueError(f"utilization {rho:.4f} >= 1{where}")
    cs2 = service_cs2_simplified(params, alpha, gamma, beta)
    return rho * es * (1.0 + cs2) / (2.0 * (1.0 - rho)) + es


def node_delays(sol: SimplifiedSolution, params: ProtocolParams) -> dict[int, float]:
    """Per-node M/G/1 sojourn times (symbols) at the solved operating point."""
    out = {}
    for i in sol.nodes:
        beta = beta_from_alpha(params, sol.alpha[i])
        out[i] = mg1_delay(sol.nu[i], sol.alpha[i], sol.gamma[i], beta, params, node=i)
    return out


def end_to_end_simplified(
    tree: TreeTopology, sol: SimplifiedSolution, params: ProtocolParams
) -> dict[int, tuple[float, float]]:
    """Per-source (delivery probability, mean delay in symbols)."""
    delays = node_delays(sol, params)
    delivery = sol.delivery(tree)
    return {k: (delivery[k], sum(delays[i] for i in tree.routed[k])) for k in tree.sources}


@dataclass(frozen=True)
class DominationReport:
    tau_bar: float
    max_tau_minus: float
    slack: float  # relative, (tau_bar - max_tau_minus)/tau_bar


def domination_check(
    tree: TreeTopology,
    rates: ArrivalRates,
    params: ProtocolParams,
    link_per: float,
) -> DominationReport:
    """Assert the scalar rate dominates every perceived rate; return the slack."""
    vec = solve_vector(tree, rates, params, link_per)
    scal = solve_scalar(total_load(tree, rates, params), params)
    max_tm = max(vec.tau_minus.values()) if vec.tau_minus else 0.0
    if scal.tau_bar == 0.0 and max_tm == 0.0:
        return DominationReport(0.0, 0.0, 0.0)
    if scal.tau_bar < max_tm * (1.0 - 1e-9):
        raise SolverError(
            f"domination violated: tau_bar={scal.tau_bar:.6e} < max tau_minus={max_tm:.6e}"
        )
    return DominationReport(scal.tau_bar, max_tm, (scal.tau_bar - max_tm) / scal.tau_bar)
