"""Command-line pipeline: every stage reads and writes plain files.

Stages communicate only through the documented formats (edge lists, demand
lists, routing JSON, scenario/impact CSVs, graph JSON, prediction CSVs), so
an external impact predictor can be swapped in at the ``encode`` ->
``file:`` seam without touching this package.

Exit codes: 0 success, 1 usage error, 2 infeasibility or validation error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import failure as fail
from . import graphenc, netmodel, robustdesign, routing
from .errors import RobustnetError

ENV_OUTDIR = "ROBUSTNET_OUTDIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3


@dataclass
class RunConfig:
    """Resolved options for one subcommand invocation."""

    command: str
    out_dir: Path
    seed: int = 0
    threads: int = 1
    scheme: str = routing.SCHEME_MCF
    max_failures: int = 2
    predictor: str = "oracle"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(parser):
    parser.add_argument("--out", help="output directory (default: $ROBUSTNET_OUTDIR or .)")
    parser.add_argument("--config", help="key = value overrides, one per line")
    parser.add_argument("--threads", type=int, default=0,
                        help="scenario-sweep parallelism (default: all cores)")


def build_parser() -> _Parser:
    parser = _Parser(prog="robustnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--avg-degree", type=float, default=3.0)
    p.add_argument("--base-capacity", type=float, default=1.0)
    p.add_argument("--total-volume", type=float, default=None)
    p.add_argument("--uniform-capacities", action="store_true")
    _add_common(p)

    p = sub.add_parser("route", help="compute a routing decision")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--scheme", choices=["mcf", "ospf"], default="mcf")
    _add_common(p)

    p = sub.add_parser("failures", help="enumerate connected failure scenarios")
    p.add_argument("--topology", required=True)
    p.add_argument("--f", dest="max_failures", type=int, default=2)
    _add_common(p)

    p = sub.add_parser("impact", help="evaluate failure impacts")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--routing", required=True)
    p.add_argument("--failures", required=True)
    p.add_argument("--evaluator", choices=["oracle", "simplified"], default="oracle")
    _add_common(p)

    p = sub.add_parser("critical", help="select the critical failure set")
    p.add_argument("--impact", required=True)
    _add_common(p)

    p = sub.add_parser("encode", help="emit predictor input graph and labels")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--routing", required=True)
    p.add_argument("--failures", required=True)
    p.add_argument("--impact", help="oracle impact CSV for the label file")
    _add_common(p)

    p = sub.add_parser("validate", help="worst-case MLU over the scenario set")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--routing", required=True)
    p.add_argument("--failures", required=True)
    p.add_argument("--predictor", default="oracle",
                   help="oracle | simplified | file:<predictions.csv>")
    p.add_argument("--k", type=int, default=None, help="verification budget")
    _add_common(p)

    p = sub.add_parser("upgrade", help="minimum-cost congestion-free upgrade")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--routing", required=True)
    p.add_argument("--failures", required=True)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--full", action="store_true", help="reference mode: constrain all scenarios")
    p.add_argument("--round-up", action="store_true")
    _add_common(p)

    p = sub.add_parser("te", help="fault-tolerant traffic engineering")
    p.add_argument("--topology", required=True)
    p.add_argument("--tm", required=True)
    p.add_argument("--routing", required=True)
    p.add_argument("--failures", required=True)
    p.add_argument("--predictor", default="oracle")
    p.add_argument("--max-iterations", type=int, default=20)
    _add_common(p)

    p = sub.add_parser("report", help="aggregate CSV reports")
    p.add_argument("--kind", choices=["impact-distribution", "simplified-error", "speedup"],
                   required=True)
    p.add_argument("--impact", help="impact CSV (impact-distribution)")
    p.add_argument("--oracle-impact", help="oracle impact CSV (simplified-error)")
    p.add_argument("--simplified-impact", help="simplified impact CSV (simplified-error)")
    p.add_argument("--reports", nargs="*", default=[], help="report JSONs (speedup)")
    _add_common(p)

    return parser


def _apply_config_file(args):
    if not getattr(args, "config", None):
        return
    for lineno, line in enumerate(Path(args.config).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _UsageError(f"{args.config}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise _UsageError(f"{args.config}:{lineno}: unknown option {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value.strip("\"'"))


def _out_dir(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get(ENV_OUTDIR) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(args) -> int:
    if args.threads and args.threads > 0:
        return args.threads
    return os.cpu_count() or 1


def _write_meta(out: Path, args, command: str) -> None:
    meta = {
        "command": command,
        "argv": [f"{k}={v}" for k, v in sorted(vars(args).items()) if k != "config"],
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    }
    (out / f"meta_{command}.json").write_text(json.dumps(meta, indent=2) + "\n")


def _json_dump(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load_pipeline_inputs(args):
    topology = netmodel.load_topology(args.topology)
    tm = netmodel.load_tm(args.tm, topology.num_nodes)
    instance = netmodel.NetworkInstance(topology, tm)
    decision = routing.load_decision(args.routing, topology)
    scenarios = fail.read_scenarios_csv(args.failures)
    return instance, decision, scenarios


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_gen(args, out: Path) -> int:
    topology = netmodel.generate_random_topology(
        args.nodes, seed=args.seed, avg_degree=args.avg_degree
    )
    if not args.uniform_capacities:
        topology = netmodel.assign_random_capacities(
            topology, base=args.base_capacity, seed=args.seed + 1
        )
    total = args.total_volume
    if total is None:
        total = 0.5 * args.base_capacity * args.nodes
    tm = netmodel.generate_gravity_tm(topology, total_volume=total, seed=args.seed + 2)
    instance = netmodel.NetworkInstance(topology, tm, seed=args.seed)
    netmodel.save_instance(instance, out)
    print(f"instance: {args.nodes} nodes, {topology.num_links} links -> {out}")
    return EXIT_OK


def _cmd_route(args, out: Path) -> int:
    topology = netmodel.load_topology(args.topology)
    tm = netmodel.load_tm(args.tm, topology.num_nodes)
    instance = netmodel.NetworkInstance(topology, tm)
    decision, mlu = routing.solve_routing(instance, args.scheme)
    decision = routing.decompose_to_paths(topology, decision)
    path = out / f"routing_{args.scheme}.json"
    routing.save_decision(decision, path)
    print(f"{args.scheme} routing: mlu={mlu:.6f} -> {path}")
    return EXIT_OK


def _cmd_failures(args, out: Path) -> int:
    topology = netmodel.load_topology(args.topology)
    scenarios = fail.enumerate_failures(topology, args.max_failures)
    path = out / "failures.csv"
    fail.write_scenarios_csv(path, scenarios, topology)
    print(f"{len(scenarios)} connected scenarios (f={args.max_failures}) -> {path}")
    return EXIT_OK


def _cmd_impact(args, out: Path) -> int:
    instance, decision, scenarios = _load_pipeline_inputs(args)
    evaluator = fail.impact_oracle if args.evaluator == "oracle" else fail.impact_simplified
    records = fail.evaluate_scenarios(
        instance, decision, scenarios, evaluator, threads=_threads(args)
    )
    labels = fail.classify(records)
    path = out / f"impact_{args.evaluator}_{decision.scheme}.csv"
    fail.write_impact_csv(path, records, scenarios, labels)
    worst = max(records, key=lambda r: r.impact)
    print(f"{len(records)} impacts, worst={worst.impact:.4f} "
          f"(scenario {worst.scenario_id}) -> {path}")
    return EXIT_OK


def _cmd_critical(args, out: Path) -> int:
    records, scenarios, _ = fail.read_impact_csv(args.impact)
    labels = fail.classify(records)
    critical = fail.select_critical(records, labels)
    chosen = set(critical.scenario_ids)
    path = out / "critical.csv"
    fail.write_impact_csv(
        path,
        sorted((r for r in records if r.scenario_id in chosen),
               key=lambda r: (-r.impact, r.scenario_id)),
        scenarios,
        [l for r, l in zip(records, labels) if r.scenario_id in chosen],
    )
    print(f"critical set: {len(chosen)} of {len(records)} scenarios -> {path}")
    return EXIT_OK


def _cmd_encode(args, out: Path) -> int:
    instance, decision, scenarios = _load_pipeline_inputs(args)
    graph = graphenc.build_input_graph(instance, decision, scenarios)
    graph = graphenc.encode_features(instance, decision, graph)
    graph_path = out / "graph.json"
    graphenc.serialize_graph(graph, graph_path)
    written = [str(graph_path)]
    if args.impact:
        records, impact_scenarios, label_names = fail.read_impact_csv(args.impact)
        labels_path = out / "labels.csv"
        fail.write_impact_csv(labels_path, records, impact_scenarios, fail.classify(records))
        written.append(str(labels_path))
    print(f"encoded {len(graph.nodes)} nodes / {len(graph.edges)} edges -> "
          + ", ".join(written))
    return EXIT_OK


def _cmd_validate(args, out: Path) -> int:
    instance, decision, scenarios = _load_pipeline_inputs(args)
    predictor = robustdesign.PredictorHandle.from_spec(args.predictor, instance, decision)
    report = robustdesign.robust_validate(
        instance, decision, scenarios, predictor, k=args.k, threads=_threads(args)
    )
    path = out / "validation.json"
    _json_dump(path, report.to_dict())
    print(f"worst-case mlu={report.worst_mlu:.6f} (scenario {report.worst_scenario_id}, "
          f"verified {report.scenarios_verified}/{report.scenarios_total}) -> {path}")
    return EXIT_OK


def _cmd_upgrade(args, out: Path) -> int:
    instance, decision, scenarios = _load_pipeline_inputs(args)
    predictor = robustdesign.PredictorHandle.from_spec(args.predictor, instance, decision)
    plan = robustdesign.upgrade_optimize(
        instance, scenarios, predictor,
        full_enumeration=args.full, round_up=args.round_up, threads=_threads(args),
    )
    plan_path = out / "upgrade_plan.csv"
    with open(plan_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["link", "a_e"])
        for link, a in enumerate(plan.added):
            writer.writerow([link, repr(a)])
    _json_dump(out / "upgrade_report.json", plan.to_dict())
    print(f"upgrade cost={plan.cost:.6f} over {len(plan.critical_ids)} critical "
          f"scenarios -> {plan_path}")
    return EXIT_OK


def _cmd_te(args, out: Path) -> int:
    instance, decision, scenarios = _load_pipeline_inputs(args)
    predictor = robustdesign.PredictorHandle.from_spec(args.predictor, instance, decision)
    plan = robustdesign.te_solve(instance, scenarios, predictor, threads=_threads(args))
    plan = robustdesign.te_certify_and_iterate(
        instance, plan, scenarios, max_iterations=args.max_iterations
    )
    _json_dump(out / "te_plan.json", plan.to_dict())
    print(f"te plan: {plan.certification} (objective={plan.objective:.6f}, "
          f"{plan.iterations} iterations) -> {out / 'te_plan.json'}")
    return EXIT_OK


def _cmd_report(args, out: Path) -> int:
    if args.kind == "impact-distribution":
        if not args.impact:
            raise _UsageError("--impact is required for impact-distribution")
        records, _, _ = fail.read_impact_csv(args.impact)
        labels = fail.classify(records)
        path = out / "report_impact_distribution.csv"
        max_impact = max(r.impact for r in records)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bucket_low", "bucket_high", "count", "fraction"])
            edges = [i / 10 for i in range(11)]
            for low, high in zip(edges, edges[1:]):
                count = sum(
                    1 for l in labels
                    if low <= l.ratio < high or (high == 1.0 and l.ratio >= 1.0 - 1e-12)
                )
                writer.writerow([low, high, count, repr(count / len(records))])
            critical = sum(
                1 for l in labels
                if l.category in (fail.Criticality.WORST, fail.Criticality.SIGNIFICANT)
            )
            writer.writerow(["critical", "", critical, repr(critical / len(records))])
        print(f"impact distribution (max={max_impact:.4f}) -> {path}")
    elif args.kind == "simplified-error":
        if not (args.oracle_impact and args.simplified_impact):
            raise _UsageError("simplified-error needs --oracle-impact and --simplified-impact")
        oracle_records, _, _ = fail.read_impact_csv(args.oracle_impact)
        simplified_records, _, _ = fail.read_impact_csv(args.simplified_impact)
        by_id = {r.scenario_id: r for r in oracle_records}
        errors = []
        for s in simplified_records:
            o = by_id.get(s.scenario_id)
            if o is not None and o.impact > 0:
                errors.append(abs(s.impact - o.impact) / o.impact)
        path = out / "report_simplified_error.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fraction_within"])
            for threshold in (0.01, 0.02, 0.05, 0.10, 0.20, 0.50):
                frac = sum(1 for e in errors if e < threshold) / len(errors)
                writer.writerow([threshold, repr(frac)])
        print(f"simplified-vs-oracle over {len(errors)} scenarios -> {path}")
    else:
        if not args.reports:
            raise _UsageError("speedup needs --reports")
        path = out / "report_speedup.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["report", "constraint_rows_pruned", "constraint_rows_full",
                             "reduction_ratio"])
            for rp in args.reports:
                data = json.loads(Path(rp).read_text())
                pruned = data.get("constraint_rows_pruned")
                full = data.get("constraint_rows_full")
                ratio = full / pruned if pruned else float("inf")
                writer.writerow([Path(rp).name, pruned, full, repr(ratio)])
        print(f"speedup bookkeeping for {len(args.reports)} reports -> {path}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "route": _cmd_route,
    "failures": _cmd_failures,
    "impact": _cmd_impact,
    "critical": _cmd_critical,
    "encode": _cmd_encode,
    "validate": _cmd_validate,
    "upgrade": _cmd_upgrade,
    "te": _cmd_te,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        out = _out_dir(args)
        code = _COMMANDS[args.command](args, out)
        _write_meta(out, args, args.command)
        return code
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RobustnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
