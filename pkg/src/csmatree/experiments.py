"""Validation suites, sensitivity sweeps, and report emission.

Each study regenerates seeded scenarios, runs both analysis layers, and
reduces to the worst-case statistics the acceptance suite asserts. Reports
are deterministic: identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field

from . import __version__ as _version
from .bounds import QosTargets, ThroughputBounds, bound_b1
from .detailed import end_to_end, qna_delay, solve_detailed
from .design import DesignProblem, steiner_with_budget
from .model import ArrivalRates, ModelError, ProtocolParams, TreeTopology
from .scenarios import Scenario, generate_scenario, jain_fairness
from .simplified import (
    domination_check,
    end_to_end_simplified,
    solve_vector,
    total_load,
)

# Below this discard level, relative errors are noise; report absolute.
DELTA_ERROR_THRESHOLD = 0.002

DEFAULT_REGIME_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 0.95)


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "provenance": self.provenance,
            "columns": list(self.columns),
            "rows": [list(r) for r in self.rows],
        }


def _provenance(params: ProtocolParams, **extra) -> dict:
    doc = {
        "tool_version": _version,
        "n_c": params.n_c,
        "n_t": params.n_t,
        "be_min": params.be_min,
        "be_max": params.be_max,
        "packet_bytes": params.packet_bytes,
    }
    doc.update(extra)
    return doc


def study_tree(scen: Scenario, qos: QosTargets, relay_budget: int = 4) -> TreeTopology:
    """The per-scenario tree the validation studies analyze: hop-constrained,
    relay-budgeted construction seeded from the scenario."""
    prob = DesignProblem(
        scen.graph, qos.h_max, relay_budget, qos, restarts=5, seed=scen.sub_seed
    )
    return steiner_with_budget(prob).tree


def regime_rate_grid(
    tree: TreeTopology,
    qos: QosTargets,
    params: ProtocolParams,
    fractions=DEFAULT_REGIME_FRACTIONS,
) -> tuple[float, ...]:
    """Equal-rate grid (pkts/sec) spanning the uniqueness regime of a tree."""
    edge = bound_b1(qos.delta_bar, params) / tree.total_hops
    return tuple(f * edge for f in fractions)


@dataclass(frozen=True)
class AccuracyRow:
    seed: int
    node_count: int
    total_hops: int
    tau_pct: float
    delta_abs_low: float
    delta_pct_high: float
    delivery_pct: float
    delay_pct: float


def validate_accuracy(
    scenarios,
    qos: QosTargets,
    params: ProtocolParams,
    link_per: float,
    rate_fractions=DEFAULT_REGIME_FRACTIONS,
) -> ExperimentReport:
    """Worst-case simplified-vs-detailed errors per scenario.

    tau_minus and end-to-end delivery/delay errors are percentages; the
    max-discard error is absolute when the detailed max discard is at or
    below 0.002 and a percentage above it.
    """
    rows = []
    for scen in scenarios:
        tree = study_tree(scen, qos)
        grid = regime_rate_grid(tree, qos, params, rate_fractions)
        worst_tau = worst_del = worst_delay = 0.0
        worst_abs = worst_pct = 0.0
        for rate in grid:
            rates = ArrivalRates.equal(tree.sources, rate)
            det = solve_detailed(tree, rates, params, link_per)
            simp = solve_vector(tree, rates, params, link_per, delta_bar=qos.delta_bar)
            det_tm = det.tau_minus_map()
            for i in tree.transmitters:
                if det_tm[i] > 0:
                    err = abs(simp.tau_minus[i] - det_tm[i]) / det_tm[i] * 100.0
                    worst_tau = max(worst_tau, err)
            dmax_det = det.max_delta()
            dmax_simp = simp.max_delta()
            if dmax_det <= DELTA_ERROR_THRESHOLD:
                worst_abs = max(worst_abs, abs(dmax_simp - dmax_det))
            else:
                worst_pct = max(
                    worst_pct, abs(dmax_simp - dmax_det) / dmax_det * 100.0
                )
            det_e2e = end_to_end(tree, det, rates, params)
            simp_e2e = end_to_end_simplified(tree, simp, params)
            for k in tree.sources:
                dp, dd = det_e2e[k]
                sp, sd = simp_e2e[k]
                worst_del = max(worst_del, abs(sp - dp) / dp * 100.0)
                worst_delay = max(worst_delay, abs(sd - dd) / dd * 100.0)
        rows.append(
            (
                scen.seed,
                len(tree.transmitters) + 1,
                tree.total_hops,
                worst_tau,
                worst_abs,
                worst_pct,
                worst_del,
                worst_delay,
            )
        )
    return ExperimentReport(
        kind="accuracy",
        columns=(
            "seed",
            "node_count",
            "total_hops",
            "tau_minus_pct_err",
            "max_delta_abs_err_low",
            "max_delta_pct_err_high",
            "delivery_pct_err",
            "delay_pct_err",
        ),
        rows=tuple(rows),
        provenance=_provenance(params, link_per=link_per, delta_bar=qos.delta_bar),
    )


def validate_slackness(
    scenarios,
    qos: QosTargets,
    params: ProtocolParams,
    link_per: float,
    rate_fractions=DEFAULT_REGIME_FRACTIONS,
) -> ExperimentReport:
    """Worst relative slack of the scalar rate over max tau_minus, per scenario."""
    rows = []
    for scen in scenarios:
        tree = study_tree(scen, qos)
        grid = regime_rate_grid(tree, qos, params, rate_fractions)
        worst = 0.0
        for rate in grid:
            rates = ArrivalRates.equal(tree.sources, rate)
            rep = domination_check(tree, rates, params, link_per)
            worst = max(worst, rep.slack * 100.0)
        rows.append((scen.seed, len(tree.transmitters) + 1, worst))
    return ExperimentReport(
        kind="slackness",
        columns=("seed", "node_count", "worst_slack_pct"),
        rows=tuple(rows),
        provenance=_provenance(params, link_per=link_per, delta_bar=qos.delta_bar),
    )


def validate_fairness(
    scenarios,
    qos: QosTargets,
    params: ProtocolParams,
    link_per: float,
    rates_pps=(0.001, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0),
) -> ExperimentReport:
    """Least Jain index of the perceived-rate vector per scenario (detailed)."""
    rows = []
    for scen in scenarios:
        tree = study_tree(scen, qos)
        least = 1.0
        for rate in rates_pps:
            rates = ArrivalRates.equal(tree.sources, rate)
            det = solve_detailed(tree, rates, params, link_per)
            if not det.converged or det.saturated_nodes:
                continue
            least = min(least, jain_fairness(det.tau_minus_map().values()))
        rows.append((scen.seed, len(tree.transmitters) + 1, least))
    return ExperimentReport(
        kind="fairness",
        columns=("seed", "node_count", "least_jain_index"),
        rows=tuple(rows),
        provenance=_provenance(params, link_per=link_per),
    )


SWEEP_RANGES = {"n_c": (3, 4, 5, 6), "n_t": (2, 3, 4, 5), "be_min": (1, 2, 3, 4)}


def sweep_params(which: str, value: int, base: ProtocolParams) -> ProtocolParams:
    """Parameters for one sweep point; the be_min sweep keeps the default
    window span (be_max moves with be_min) so every stage ladder has the
    same shape."""
    if which == "n_c":
        return ProtocolParams(
            n_c=value,
            n_t=base.n_t,
            be_min=base.be_min,
            be_max=base.be_max,
            packet_bytes=base.packet_bytes,
        )
    if which == "n_t":
        return ProtocolParams(
            n_c=base.n_c,
            n_t=value,
            be_min=base.be_min,
            be_max=base.be_max,
            packet_bytes=base.packet_bytes,
        )
    if which == "be_min":
        span = base.be_max - base.be_min
        return ProtocolParams(
            n_c=base.n_c,
            n_t=base.n_t,
            be_min=value,
            be_max=value + span,
            packet_bytes=base.packet_bytes,
        )
    raise ModelError(f"unknown sweep parameter {which!r}")


def sensitivity_sweep(
    which: str,
    values,
    qos: QosTargets,
    link_per: float,
    base: ProtocolParams | None = None,
) -> ExperimentReport:
    """B1, B2, B, B' (pkts/sec) per parameter value, others at defaults."""
    base = base or ProtocolParams()
    rows = []
    for v in values:
        p = sweep_params(which, v, base)
        b = ThroughputBounds.compute(qos, link_per, p)
        rows.append((v, b.b1, b.b2, b.b, b.b_prime))
    return ExperimentReport(
        kind=f"sweep_{which}",
        columns=(which, "b1_pps", "b2_pps", "b_pps", "b_prime_pps"),
        rows=tuple(rows),
        provenance=_provenance(base, link_per=link_per, delta_bar=qos.delta_bar),
    )


def perturb_rates(
    sources, rate_pps: float, seed: int, steps=(0.01, 0.02, 0.03, 0.04, 0.05)
) -> ArrivalRates:
    """Half the sources get a uniform increment, half a decrement (odd counts
    put the extra source in the decrement half)."""
    rng = random.Random(seed)
    src = sorted(sources)
    up = set(rng.sample(src, len(src) // 2))
    return ArrivalRates(
        {
            k: rate_pps + rng.choice(steps) if k in up else rate_pps - rng.choice(steps)
            for k in src
        }
    )


def perturbation_study(
    tree: TreeTopology,
    rate_pps: float,
    qos: QosTargets,
    params: ProtocolParams,
    link_per: float,
    seed: int,
    trials: int = 12,
) -> ExperimentReport:
    """Detailed-analysis QoS at rates jittered around ``rate_pps``.

    Reports the worst link discard and worst single-hop mean delay per trial
    against the targets, plus the mean perturbed rate.
    """
    rows = []
    for t in range(trials):
        rates = perturb_rates(tree.sources, rate_pps, seed + t)
        det = solve_detailed(tree, rates, params, link_per)
        qna, _ = qna_delay(tree, rates=rates, solution=det, params=params)
        worst_delta = det.max_delta()
        worst_delay = params.symbols_to_seconds(max(s.sojourn for s in qna.values()))
        mean_rate = sum(rates.pkts_per_sec.values()) / len(rates.pkts_per_sec)
        delta_excess = max(0.0, (worst_delta - qos.delta_bar) / qos.delta_bar * 100.0)
        delay_excess = max(
            0.0, (worst_delay - qos.d_bar_seconds) / qos.d_bar_seconds * 100.0
        )
        rows.append(
            (t, mean_rate, worst_delta, delta_excess, worst_delay, delay_excess)
        )
    return ExperimentReport(
        kind="perturbation",
        columns=(
            "trial",
            "mean_rate_pps",
            "worst_delta",
            "delta_excess_pct",
            "worst_hop_delay_s",
            "delay_excess_pct",
        ),
        rows=tuple(rows),
        provenance=_provenance(
            params,
            link_per=link_per,
            delta_bar=qos.delta_bar,
            d_bar_seconds=qos.d_bar_seconds,
            base_rate_pps=rate_pps,
            seed=seed,
        ),
    )


def render_report(report: ExperimentReport, fmt: str) -> bytes:
    """Serialize a report to deterministic JSON or CSV bytes."""
    if fmt == "json":
        return (json.dumps(report.to_dict(), indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow(row)
        return buf.getvalue().encode()
    raise ModelError(f"unknown report format {fmt!r}")


def emit(report: ExperimentReport, fmt: str, path) -> int:
    """Write a report; returns the byte count."""
    data = render_report(report, fmt)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)
