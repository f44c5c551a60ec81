"""Command-line interface.

Subcommands: scenario-gen, analyze, bounds, design, validate, sweep,
perturb. Exit code 0 only when every asserted invariant of the invoked
study holds.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bounds import QosTargets, ThroughputBounds
from .detailed import end_to_end, solve_detailed
from .design import (
    DesignProblem,
    enumerate_candidates,
    equal_rate_inner_throughput,
    select_best,
    shortest_path_tree,
    steiner_with_budget,
    throughput_search,
)
from .experiments import (
    SWEEP_RANGES,
    emit,
    perturbation_study,
    render_report,
    sensitivity_sweep,
    study_tree,
    validate_accuracy,
    validate_fairness,
    validate_slackness,
)
from .model import ArrivalRates, ProtocolParams
from .scenarios import (
    Scenario,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from .simplified import end_to_end_simplified, solve_vector


def _add_protocol_args(p: argparse.ArgumentParser):
    p.add_argument("--nc", type=int, default=5, help="max successive CCA failures")
    p.add_argument("--nt", type=int, default=4, help="max transmission failures")
    p.add_argument("--be-min", type=int, default=3)
    p.add_argument("--be-max", type=int, default=5)
    p.add_argument("--packet-bytes", type=int, default=131)


def _add_qos_args(p: argparse.ArgumentParser):
    p.add_argument("--delta-bar", type=float, help="per-link discard target")
    p.add_argument("--d-bar", type=float, help="per-link mean delay target (s)")
    p.add_argument("--p-del", type=float, help="end-to-end delivery target")
    p.add_argument("--d-max", type=float, help="end-to-end mean delay target (s)")
    p.add_argument("--h-max", type=int, default=5)
    p.add_argument("--l", type=float, default=0.02, dest="link_per", help="worst-case link PER")


def _params(args) -> ProtocolParams:
    return ProtocolParams(
        n_c=args.nc,
        n_t=args.nt,
        be_min=args.be_min,
        be_max=args.be_max,
        packet_bytes=args.packet_bytes,
    )


def _qos(args) -> QosTargets:
    if args.delta_bar is not None and args.d_bar is not None:
        return QosTargets(args.delta_bar, args.d_bar, args.h_max)
    if args.p_del is not None and args.d_max is not None:
        return QosTargets.from_end_to_end(args.p_del, args.d_max, args.h_max)
    return QosTargets.from_end_to_end(0.9, 0.1, args.h_max)


def _write_out(args, text: str):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_scenario_gen(args) -> int:
    scen = generate_scenario(
        args.seed,
        m=args.sources,
        relays=args.relays,
        side=args.side,
        radius=args.radius,
        link_per=args.link_per,
        h_max=args.h_max,
        relay_budget=args.n_max,
    )
    qos = _qos(args)
    if args.out:
        save_scenario(args.out, scen, _params(args), qos)
    else:
        from .scenarios import scenario_to_dict

        json.dump(scenario_to_dict(scen, _params(args), qos), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


def cmd_bounds(args) -> int:
    params = _params(args)
    qos = _qos(args)
    bounds = ThroughputBounds.compute(qos, args.link_per, params)
    doc = bounds.to_dict()
    if args.format == "json" or args.out:
        _write_out(args, json.dumps(doc, indent=2) + "\n")
    if not args.out:
        width = max(len(k) for k in doc)
        for k, v in doc.items():
            print(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    return 0


def cmd_analyze(args) -> int:
    graph, params, qos = load_scenario(args.scenario)
    params = params or _params(args)
    tree = shortest_path_tree(graph)
    rates = ArrivalRates.equal(tree.sources, args.rate)
    if args.layer == "detailed":
        sol = solve_detailed(tree, rates, params, args.link_per)
        e2e = end_to_end(tree, sol, rates, params)
        doc = {
            "analysis": "detailed",
            "converged": sol.converged,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "saturated_nodes": list(sol.saturated_nodes),
            "nodes": {
                str(i): {
                    "tau": s.tau_perceived,
                    "alpha": s.alpha,
                    "beta": s.beta,
                    "gamma": s.gamma,
                    "delta": s.delta,
                    "nu_pps": params.rate_to_per_sec(s.nu),
                    "q": s.q,
                }
                for i, s in sorted(sol.states.items())
            },
        }
    else:
        sol = solve_vector(tree, rates, params, args.link_per)
        e2e = end_to_end_simplified(tree, sol, params)
        doc = {
            "analysis": "simplified",
            "converged": sol.converged,
            "iterations": sol.iterations,
            "residual": sol.residual,
            "in_regime": sol.in_regime,
            "nodes": {
                str(i): {
                    "tau_minus": sol.tau_minus[i],
                    "alpha": sol.alpha[i],
                    "gamma": sol.gamma[i],
                    "delta": sol.delta[i],
                    "nu_pps": params.rate_to_per_sec(sol.nu[i]),
                }
                for i in sol.nodes
            },
        }
    doc["sources"] = {
        str(k): {
            "hops": tree.hops[k],
            "delivery": e2e[k][0],
            "delay_ms": params.symbols_to_seconds(e2e[k][1]) * 1e3,
        }
        for k in tree.sources
    }
    _write_out(args, json.dumps(doc, indent=2) + "\n")
    return 0 if doc["converged"] else 1


def cmd_design(args) -> int:
    graph, params, qos = load_scenario(args.scenario)
    params = params or _params(args)
    qos = qos or _qos(args)
    bounds = ThroughputBounds.compute(qos, args.link_per, params)

    if args.mode == "spt":
        tree = shortest_path_tree(graph)
        mode_ok = tree.max_hops <= args.h_max
    elif args.mode == "steiner":
        prob = DesignProblem(
            graph, args.h_max, args.n_max, qos, restarts=args.restarts, seed=args.seed
        )
        res = steiner_with_budget(prob)
        tree, mode_ok = res.tree, res.feasible
    else:  # enumerate
        base = shortest_path_tree(graph)
        cands = enumerate_candidates(graph, args.h_max, base)
        tree, _ = select_best(
            cands, qos, args.link_per, params, layer=args.layer, grid_step=args.grid_step
        )
        mode_ok = True

    inner = equal_rate_inner_throughput(tree, bounds)
    search = throughput_search(
        tree,
        qos,
        args.link_per,
        params,
        layer=args.layer,
        grid_step=args.grid_step,
        check_delay=False,
        extra_rates=(inner,),
    )
    doc = {
        "mode": args.mode,
        "seed": args.seed,
        "feasible": mode_ok,
        "parent": {str(k): v for k, v in sorted(tree.parent.items())},
        "relay_count": len(tree.relays_used),
        "total_hops": tree.total_hops,
        "max_hops": tree.max_hops,
        "inner_bound_pps": inner,
        "searched_pps": search.best_rate_pps,
        "layer": args.layer,
    }
    _write_out(args, json.dumps(doc, indent=2) + "\n")
    if args.csv_out:
        import csv as _csv

        with open(args.csv_out, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(["rate_pps", "ok", "max_delta"])
            for p in search.trace:
                w.writerow([p.rate_pps, p.ok, p.max_delta])
    ok = mode_ok and search.best_rate_pps + 1e-12 >= inner
    return 0 if ok else 1


def _scenarios_for_validation(args) -> list[Scenario]:
    return [
        generate_scenario(
            args.seed + i,
            radius=args.radius,
            link_per=args.link_per,
            h_max=args.h_max,
            relay_budget=args.n_max,
        )
        for i in range(args.count)
    ]


def cmd_validate(args) -> int:
    params = _params(args)
    qos = _qos(args)
    scens = _scenarios_for_validation(args)
    if args.study == "accuracy":
        report = validate_accuracy(scens, qos, params, args.link_per)
        tau = max(r[3] for r in report.rows)
        delivery = max(r[6] for r in report.rows)
        delay = max(r[7] for r in report.rows)
        ok = tau <= 12.0 and delivery <= 0.2 and delay <= 7.0
    elif args.study == "slackness":
        report = validate_slackness(scens, qos, params, args.link_per)
        ok = max(r[2] for r in report.rows) <= 3.5
    else:  # fairness
        report = validate_fairness(scens, qos, params, args.link_per)
        ok = min(r[2] for r in report.rows) >= 0.985
    if args.out:
        emit(report, args.format, args.out)
    else:
        sys.stdout.write(render_report(report, args.format).decode())
    return 0 if ok else 1


def cmd_sweep(args) -> int:
    qos = _qos(args)
    report = sensitivity_sweep(args.which, SWEEP_RANGES[args.which], qos, args.link_per)
    if args.out:
        emit(report, args.format, args.out)
    else:
        sys.stdout.write(render_report(report, args.format).decode())
    return 0


def cmd_perturb(args) -> int:
    params = _params(args)
    qos = _qos(args)
    scen = generate_scenario(
        args.seed,
        radius=args.radius,
        link_per=args.link_per,
        h_max=args.h_max,
        relay_budget=args.n_max,
    )
    tree = study_tree(scen, qos, args.n_max)
    if args.rate is None:
        search = throughput_search(
            tree, qos, args.link_per, params, layer="detailed", check_delay=False
        )
        rate = search.best_rate_pps
    else:
        rate = args.rate
    report = perturbation_study(tree, rate, qos, params, args.link_per, args.seed)
    if args.out:
        emit(report, args.format, args.out)
    else:
        sys.stdout.write(render_report(report, args.format).decode())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="csmatree",
        description="QoS throughput bounds and topology design for CSMA/CA trees",
    )
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    ap.add_argument("--out", help="output path (default: stdout)")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario_opts=False):
        _add_protocol_args(p)
        _add_qos_args(p)
        if scenario_opts:
            p.add_argument("--sources", type=int, default=10)
            p.add_argument("--relays", type=int, default=30)
            p.add_argument("--side", type=float, default=150.0)
            p.add_argument("--radius", type=float, default=55.0)
            p.add_argument("--n-max", type=int, default=4)

    p = sub.add_parser("scenario-gen", help="generate a reproducible scenario file")
    common(p, scenario_opts=True)
    p.set_defaults(func=cmd_scenario_gen)

    p = sub.add_parser("bounds", help="compute B1, B2, B, B' for a configuration")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("analyze", help="fixed-point analysis of a scenario's SPT")
    common(p)
    p.add_argument("scenario", help="scenario JSON path")
    p.add_argument("--rate", type=float, default=1.0, help="equal arrival rate (pkts/s)")
    p.add_argument("--layer", choices=("detailed", "simplified"), default="detailed")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("design", help="construct and evaluate a tree topology")
    common(p)
    p.add_argument("scenario", help="scenario JSON path")
    p.add_argument("--mode", choices=("spt", "steiner", "enumerate"), default="spt")
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--layer", choices=("detailed", "simplified"), default="detailed")
    p.add_argument("--grid-step", type=float, default=0.1)
    p.add_argument("--csv-out", help="write the QoS trace as CSV")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("validate", help="accuracy/slackness/fairness studies")
    common(p, scenario_opts=True)
    p.add_argument("study", choices=("accuracy", "slackness", "fairness"))
    p.add_argument("--count", type=int, default=5)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="bound sensitivity to one protocol parameter")
    common(p)
    p.add_argument("which", choices=("n_c", "n_t", "be_min"))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("perturb", help="QoS under jittered arrival rates")
    common(p, scenario_opts=True)
    p.add_argument("--rate", type=float, help="base rate (default: searched throughput)")
    p.set_defaults(func=cmd_perturb)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
