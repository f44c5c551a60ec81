"""QoS splitting, hop-limit derivation, and the explicit throughput bounds.

The chain: a per-link discard target delta_bar caps the admissible CCA
failure probability (alpha_max) and hence the perceived attempt rate
(tau_max). Inverting the scalar fixed point at tau_max yields the total-load
bound B2; the contraction condition yields B1; B = min(B1, B2) bounds
sum_k lambda_k h_k. A per-node load bound B' follows from requiring the
worst-case M/G/1 sojourn to stay within the per-link delay target.

All bound values are returned in packets/sec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ModelError, ProtocolParams, TreeTopology, attempt_sum, beta_from_alpha
from .simplified import (
    ArrivalRates,
    alpha_from_tau,
    discard_from_tau,
    node_loads,
    solve_scalar,
    total_load,
)


class InfeasibleTargetError(ModelError):
    """The QoS target cannot be met by any positive operating point."""


@dataclass(frozen=True)
class QosTargets:
    """Per-link targets, optionally derived by splitting end-to-end goals."""

    delta_bar: float
    d_bar_seconds: float
    h_max: int
    p_del: float | None = None
    d_max_seconds: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta_bar < 1.0:
            raise ModelError("delta_bar must lie in (0, 1)")
        if self.d_bar_seconds <= 0:
            raise ModelError("d_bar must be positive")
        if self.h_max < 1:
            raise ModelError("h_max must be >= 1")

    @classmethod
    def from_end_to_end(cls, p_del: float, d_max_seconds: float, h_max: int) -> "QosTargets":
        db, dbar = split_qos(p_del, d_max_seconds, h_max)
        return cls(
            delta_bar=db,
            d_bar_seconds=dbar,
            h_max=h_max,
            p_del=p_del,
            d_max_seconds=d_max_seconds,
        )


def split_qos(p_del: float, d_max_seconds: float, h_max: int) -> tuple[float, float]:
    """Split end-to-end delivery/delay targets equally over at most h_max links.

    Returns (delta_bar, d_bar_seconds): delta_bar = 1 - p_del^(1/h_max),
    d_bar = d_max / h_max.
    """
    if not 0.0 < p_del < 1.0:
        raise ModelError("p_del must lie in (0, 1)")
    if d_max_seconds <= 0:
        raise ModelError("d_max must be positive")
    if h_max < 1:
        raise ModelError("h_max must be >= 1")
    delta_bar = 1.0 - math.exp(math.log(p_del) / h_max)
    return delta_bar, d_max_seconds / h_max


@dataclass(frozen=True)
class HopLimits:
    h_delay: int
    h_delivery: int
    h_no_hidden: int

    @property
    def h_max(self) -> int:
        return min(self.h_delay, self.h_delivery, self.h_no_hidden)


def lone_packet_delay(params: ProtocolParams, link_per: float) -> float:
    """Mean single-hop delay (seconds) with no contention.

    Expected transmission attempts sum_{j<n_t} l^j, each costing the first
    backoff stage plus turnaround, data frame, turnaround, and ACK.
    """
    attempts = sum(link_per**j for j in range(params.n_t))
    stage0 = params.slot_symbols * (2**params.be_min - 1) / 2.0 + params.cca_symbols
    per_attempt = (
        stage0
        + params.turnaround_symbols
        + params.tx_symbols
        + params.turnaround_symbols
        + params.ack_symbols
    )
    return params.symbols_to_seconds(attempts * per_attempt)


def hop_limits(
    params: ProtocolParams,
    link_per: float,
    d_max_seconds: float,
    p_del: float,
    r_cs: float,
    r: float,
) -> HopLimits:
    """Hop-count caps from the delay, delivery, and no-hidden-node requirements.

    Under the lone-packet model the per-link discard is l^(n_t+1); carrier
    sensing over a whole path requires 2 h r <= r_cs.
    """
    if d_max_seconds <= 0 or not 0.0 < p_del < 1.0 or r_cs <= 0 or r <= 0:
        raise ModelError("hop limit inputs must be positive (p_del in (0,1))")
    h_delay = math.floor(d_max_seconds / lone_packet_delay(params, link_per))
    delta_lone = link_per ** (params.n_t + 1)
    h_delivery = math.floor(math.log(p_del) / math.log(1.0 - delta_lone))
    h_no_hidden = math.floor(r_cs / (2.0 * r))
    return HopLimits(h_delay, h_delivery, h_no_hidden)


def _bisect_increasing(fn, target: float, lo: float, hi: float, tol: float) -> float:
    """Root of fn(x) = target for nondecreasing fn with fn(lo) < target < fn(hi)."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def alpha_max(delta_bar: float, params: ProtocolParams) -> float:
    return delta_bar ** (1.0 / params.n_c)


def tau_ceiling(delta_bar: float, params: ProtocolParams) -> float:
    """a = alpha_max / (T_tx (1 - alpha_max)): the rate box [0, a]."""
    am = alpha_max(delta_bar, params)
    return am / (params.tx_symbols * (1.0 - am))


def tau_max(delta_bar: float, link_per: float, params: ProtocolParams, tol: float = 1e-12) -> float:
    """Largest perceived attempt rate keeping the per-node discard within delta_bar.

    Bisection on the monotone delta(tau) built from the simplified alpha and
    gamma maps; capped at the box edge ``a`` when even delta(a) < delta_bar.
    """
    floor_delta = link_per**params.n_t
    if delta_bar <= floor_delta:
        raise InfeasibleTargetError(
            f"delta_bar={delta_bar} is not above the zero-load discard floor "
            f"l^n_t={floor_delta}: no positive attempt rate admits it"
        )
    a = tau_ceiling(delta_bar, params)
    if discard_from_tau(params, a, link_per) < delta_bar:
        return a
    return _bisect_increasing(
        lambda t: discard_from_tau(params, t, link_per), delta_bar, 0.0, a, tol
    )


def bound_b1(delta_bar: float, params: ProtocolParams) -> float:
    """Uniqueness-regime total-load bound B1(delta_bar) in packets/sec.

    Minimum of the box-invariance bound a/(1+alpha_max+...+alpha_max^(n_c-1))
    and the contraction bound 1/(T_tx (1+2 alpha_max+...+(n_c-1) alpha_max^(n_c-2))).
    """
    if not 0.0 < delta_bar < 1.0:
        raise ModelError("delta_bar must lie in (0, 1)")
    am = alpha_max(delta_bar, params)
    a = tau_ceiling(delta_bar, params)
    term1 = a / attempt_sum(params, am)
    dg = sum(k * am ** (k - 1) for k in range(1, params.n_c))
    term2 = 1.0 / (params.tx_symbols * dg) if dg > 0 else math.inf
    return params.rate_to_per_sec(min(term1, term2))


def contraction_lipschitz_sum(
    delta_bar: float, params: ProtocolParams, m_load_per_symbol: float
) -> float:
    """sum_j L_j = T_tx (1+2a+...+(n_c-1)a^(n_c-2)) * sum_k lambda_k h_k."""
    am = alpha_max(delta_bar, params)
    dg = sum(k * am ** (k - 1) for k in range(1, params.n_c))
    return params.tx_symbols * dg * m_load_per_symbol


def bound_b2(
    delta_bar: float, link_per: float, params: ProtocolParams, tol: float = 1e-12
) -> float:
    """Total-load bound B2: the M at which the scalar fixed point hits tau_max.

    Bisection over M (the scalar solution is monotone in the total load);
    returned in packets/sec.
    """
    tm = tau_max(delta_bar, link_per, params)
    # tau(M) = M g(...) >= M, so M = tm brackets the target from above
    m = _bisect_increasing(
        lambda m_: solve_scalar(m_, params).tau_bar, tm, 0.0, tm, tol * 1e-3
    )
    return params.rate_to_per_sec(m)


def bound_b(delta_bar: float, link_per: float, params: ProtocolParams) -> float:
    """B = min(B1, B2) in packets/sec (total-load membership bound)."""
    return min(bound_b1(delta_bar, params), bound_b2(delta_bar, link_per, params))


def service_envelope(
    delta_bar: float, link_per: float, params: ProtocolParams
) -> tuple[float, float]:
    """Worst-case service moments (S_bar symbols, cs2_bar) over the QoS region.

    E(S) and c_S^2 are increasing in the perceived rate, so both are
    evaluated at tau_max, with beta from the backoff model at
    alpha(tau_max). The low-discard regime drops the failure probability
    from the service moments themselves (service of an eventually-successful
    packet), leaving S_bar = (1+u)/(beta(1-alpha)) and
    cs2_bar = 1/(1+u)^2 with u = beta (1-alpha) T_tx.
    """
    tm = tau_max(delta_bar, link_per, params)
    al = alpha_from_tau(params, tm)
    beta = beta_from_alpha(params, al)
    d = beta * (1.0 - al)
    u = d * params.tx_symbols
    s_bar = (1.0 + u) / d
    cs2_bar = 1.0 / (1.0 + u) ** 2
    return s_bar, cs2_bar


def bound_bprime(
    delta_bar: float, d_bar_seconds: float, link_per: float, params: ProtocolParams
) -> float:
    """Per-node load bound B'(delta_bar, d_bar) in packets/sec.

    Solves rho S_bar (1+cs2_bar)/(2(1-rho)) + S_bar = d_bar for the
    utilization and returns nu = rho/S_bar. Requires d_bar > S_bar.
    """
    s_bar, cs2_bar = service_envelope(delta_bar, link_per, params)
    d_bar = params.seconds_to_symbols(d_bar_seconds)
    if d_bar <= s_bar:
        raise InfeasibleTargetError(
            f"per-link delay target {d_bar_seconds*1e3:.3f} ms is not above the "
            f"worst-case service time {params.symbols_to_seconds(s_bar)*1e3:.3f} ms"
        )
    head = d_bar - s_bar
    rho = 2.0 * head / (s_bar * (1.0 + cs2_bar) + 2.0 * head)
    return params.rate_to_per_sec(rho / s_bar)


@dataclass(frozen=True)
class ThroughputBounds:
    """All explicit bounds for one (protocol, PER, QoS) configuration."""

    params: ProtocolParams
    link_per: float
    qos: QosTargets
    alpha_max: float
    a: float
    tau_max: float
    b1: float
    b2: float
    b: float
    b_prime: float
    s_bar: float
    cs2_bar: float

    @classmethod
    def compute(
        cls, qos: QosTargets, link_per: float, params: ProtocolParams
    ) -> "ThroughputBounds":
        b1 = bound_b1(qos.delta_bar, params)
        b2 = bound_b2(qos.delta_bar, link_per, params)
        s_bar, cs2_bar = service_envelope(qos.delta_bar, link_per, params)
        return cls(
            params=params,
            link_per=link_per,
            qos=qos,
            alpha_max=alpha_max(qos.delta_bar, params),
            a=tau_ceiling(qos.delta_bar, params),
            tau_max=tau_max(qos.delta_bar, link_per, params),
            b1=b1,
            b2=b2,
            b=min(b1, b2),
            b_prime=bound_bprime(qos.delta_bar, qos.d_bar_seconds, link_per, params),
            s_bar=s_bar,
            cs2_bar=cs2_bar,
        )

    def to_dict(self) -> dict:
        return {
            "delta_bar": self.qos.delta_bar,
            "d_bar_ms": self.qos.d_bar_seconds * 1e3,
            "h_max": self.qos.h_max,
            "link_per": self.link_per,
            "alpha_max": self.alpha_max,
            "a_per_symbol": self.a,
            "tau_max_per_symbol": self.tau_max,
            "b1_pps": self.b1,
            "b2_pps": self.b2,
            "b_pps": self.b,
            "b_prime_pps": self.b_prime,
            "s_bar_symbols": self.s_bar,
            "cs2_bar": self.cs2_bar,
        }


@dataclass(frozen=True)
class MembershipVerdict:
    member: bool
    total_load_pps: float
    bound_pps: float
    max_node_load_pps: float | None = None
    node_bound_pps: float | None = None


def member_delta(
    tree: TreeTopology, rates: ArrivalRates, bounds: ThroughputBounds
) -> MembershipVerdict:
    """Total-load membership: sum_k lambda_k h_k < B (strict at the boundary)."""
    load = sum(rates.pkts_per_sec[k] * tree.hops[k] for k in tree.sources)
    return MembershipVerdict(load < bounds.b, load, bounds.b)


def member_delta_delay(
    tree: TreeTopology, rates: ArrivalRates, bounds: ThroughputBounds
) -> MembershipVerdict:
    """Joint membership: member_delta and max_i nu_i <= B' (non-strict)."""
    base = member_delta(tree, rates, bounds)
    nu = node_loads(tree, rates.pkts_per_sec)
    max_nu = max(nu.values()) if nu else 0.0
    ok = base.member and max_nu <= bounds.b_prime
    return MembershipVerdict(ok, base.total_load_pps, bounds.b, max_nu, bounds.b_prime)


def equal_rate_inner_throughput(tree: TreeTopology, bounds: ThroughputBounds) -> float:
    """Largest common rate (pkts/sec) certified by the inner bound.

    min(B / sum_k h_k, B' / max_i m_i): the total-load bound spread over the
    tree's hop count, capped by the per-node load bound at the busiest node.
    """
    max_mult = max(tree.load_multiplier.values())
    return min(bounds.b / tree.total_hops, bounds.b_prime / max_mult)
