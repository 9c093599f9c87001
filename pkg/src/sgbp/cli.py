"""Command-line front end.

Every subcommand exits 0 on success.  Failures print a JSON object with
``error`` and ``message`` keys to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .edges import format_report, graph_complexity, report_rows
from .experiments import (
    REFERENCE_DAMPING,
    ConvergenceConfig,
    reference_fixed_point,
    reproduce_convergence,
    write_trace_csv,
)
from .gbp import (
    Plan,
    compute_belief,
    messages_from_dict,
    messages_to_dict,
    run_to_fixed_point,
)
from .model import PottsParams, load_model, make_potts, save_model
from .oracle import exact_marginals
from .regions import grid_cluster_regions, load_regions, save_regions
from .sgbp import SGBP, StepSchedule, sgbp_run


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _potts_params(a) -> PottsParams:
    return PottsParams(a.rows, a.cols, a.gamma, a.mu, a.sigma, a.seed)


def _add_potts_flags(p, seed_flag="--seed"):
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument(seed_flag, dest="seed", type=int, default=0, help="seed of the unary-field noise")


def _load_plan(a) -> Plan:
    model = load_model(a.model)
    return Plan.build(model, load_regions(a.regions, model))


def cmd_potts(a) -> dict:
    spec = make_potts(_potts_params(a), a.d)
    save_model(spec, a.out)
    return {"out": a.out, "num_variables": spec.num_variables, "alphabet_size": a.d}


def cmd_regions_grid(a) -> dict:
    model = load_model(a.model)
    graph = grid_cluster_regions(model, a.rows, a.cols, a.size)
    save_regions(graph, a.out)
    return {"out": a.out, "regions": len(graph.regions), "edges": len(graph.edges)}


def cmd_analyze(a) -> dict:
    plan = _load_plan(a)
    metas = list(plan.metas)
    if not a.json:
        print(format_report(plan.graph, metas))
    gc = graph_complexity(plan.graph, metas)
    return {
        "edges": report_rows(plan.graph, metas),
        "a_max": gc.a_max,
        "sgbp_exponent": gc.sgbp_exponent,
        "dominant_gain": gc.dominant_gain,
    }


def cmd_gbp(a) -> dict:
    plan = _load_plan(a)
    result = run_to_fixed_point(plan, tol=a.tol, max_iters=a.max_iters, damping=a.damping)
    data = messages_to_dict(result.messages)
    data["converged"] = result.converged
    data["iters"] = result.iters
    data["beliefs"] = {
        r.id: {
            "scope": list(r.variables),
            "values": compute_belief(result.messages, r.id, plan.graph, plan.model).flat.tolist(),
        }
        for r in plan.graph.regions
    }
    Path(a.out).write_text(json.dumps(data))
    residuals = Path(a.residuals) if a.residuals else Path(a.out).with_suffix(".residuals.csv")
    with residuals.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "residual_l2"])
        w.writerows((i + 1, format(r, ".17g")) for i, r in enumerate(result.residuals))
    return {"out": a.out, "residuals": str(residuals), "converged": result.converged, "iters": result.iters}


def cmd_sgbp(a) -> dict:
    plan = _load_plan(a)
    if a.reference:
        ref = messages_from_dict(json.loads(Path(a.reference).read_text()), plan.graph, plan.d)
    else:
        ref = reference_fixed_point(plan, damping=a.ref_damping)
    schedule = StepSchedule.parse(a.schedule, a.alpha, a.nu)
    trace = sgbp_run(SGBP.build(plan), schedule, a.iters, range(a.seed0, a.seed0 + a.seeds), ref)
    write_trace_csv(trace, a.out)
    final = float(trace.delta[:, -1].mean()) if len(trace) else float(trace.delta0.mean())
    return {"out": a.out, "delta0": float(trace.delta0.mean()), "delta_final": final}


def cmd_exact(a) -> dict:
    model = load_model(a.model)
    subsets = [tuple(int(v) for v in s.split(",")) for s in a.subsets] if a.subsets else None
    res = exact_marginals(model, subsets)
    data = {
        "partition_function": res.partition_function,
        "marginals": [{"variables": list(k), "values": v.reshape(-1).tolist()} for k, v in res.marginals.items()],
    }
    Path(a.out).write_text(json.dumps(data))
    return {"out": a.out, "partition_function": res.partition_function}


def cmd_reproduce(a) -> dict:
    cfg = ConvergenceConfig(
        out_dir=Path(a.out_dir),
        ds=tuple(a.ds),
        seeds=a.seeds,
        iters=a.iters,
        schedule=a.schedule,
        alpha=a.alpha,
        nu=a.nu,
        potts=_potts_params(a),
    )
    return {str(k): v for k, v in reproduce_convergence(cfg).items()}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sgbp", description="Generalized belief propagation and its stochastic variant.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("potts", help="write a Potts grid model")
    _add_potts_flags(p)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_potts)

    p = sub.add_parser("regions-grid", help="overlapping square clusters of a grid model")
    p.add_argument("--model", required=True)
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--size", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regions_grid)

    p = sub.add_parser("analyze", help="per-edge class and complexity report")
    p.add_argument("--model", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--json", action="store_true", help="print only the JSON summary")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gbp", help="run GBP to a fixed point")
    p.add_argument("--model", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--residuals", help="residual CSV (default: next to --out)")
    p.set_defaults(func=cmd_gbp)

    p = sub.add_parser("sgbp", help="run stochastic GBP and write a trace")
    p.add_argument("--model", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument(
        "--schedule", default="harmonic", help="harmonic (alias paper) | msbound | hp | custom:<expr in t, nu, alpha>"
    )
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--seeds", type=int, default=1, help="number of runs to average")
    p.add_argument("--seed0", type=int, default=0, help="first seed")
    p.add_argument("--reference", help="fixed point JSON written by the gbp command")
    p.add_argument("--ref-damping", type=float, default=REFERENCE_DAMPING)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sgbp)

    p = sub.add_parser("exact", help="exact marginals by enumeration")
    p.add_argument("--model", required=True)
    p.add_argument("--subsets", nargs="*", help="comma-separated variable lists, e.g. 0 1,2")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("reproduce", help="convergence experiment on the Potts grid")
    _add_potts_flags(p, "--potts-seed")
    p.add_argument("--ds", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--schedule", default="harmonic")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--out-dir", default="results")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        summary = args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except Exception as exc:  # every failure is reported as JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    if args.command != "analyze" or args.json:
        print(json.dumps(summary, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
