"""Fixtures and experiment drivers: convergence traces, op-count scaling, plots."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gauge import build_gauge, monotonicity_probe
from .gbp import (
    GBPError,
    MessageSet,
    OpCounter,
    Plan,
    contraction_probe,
    gbp_iterate,
    gbp_update_edge,
    init_messages,
    run_to_fixed_point,
)
from .model import Factor, Model, ModelSpec, PottsParams, build_model, make_potts
from .regions import Region, RegionGraph, build_region_graph, factors_within, grid_cluster_regions
from .sgbp import SGBP, ErrorMeter, RunTrace, StepSchedule, sgbp_run
from .tables import FactorTable

# Undamped synchronous GBP oscillates on the 3x3 grid (the update's Jacobian
# has eigenvalue -2 there); this damping converges for every alphabet tried.
REFERENCE_DAMPING = 0.7


def potts_grid_plan(d: int, params: PottsParams | None = None) -> Plan:
    params = params or PottsParams()
    model = build_model(make_potts(params, d))
    graph = grid_cluster_regions(model, params.grid_rows, params.grid_cols)
    return Plan.build(model, graph)


def example_i2_model(d: int, seed: int = 0) -> Model:
    """Eight variables; the region ``123456`` feeds ``36`` through a message into ``24``."""
    rng = np.random.default_rng(seed)
    pairs = [(1, 2), (2, 3), (1, 4), (2, 5), (3, 6), (4, 5), (5, 6), (2, 7), (4, 8), (7, 8), (2, 4)]
    scopes = [((v,), f"phi{v}") for v in range(1, 9)] + [((a, b), f"psi{a}_{b}") for a, b in pairs]
    factors = []
    for labels, fid in scopes:
        vs = tuple(v - 1 for v in labels)
        factors.append(Factor(fid, vs, FactorTable(vs, rng.uniform(0.5, 1.5, size=(d,) * len(vs)))))
    return build_model(ModelSpec(8, d, tuple(factors)))


def example_i2_graph(model: Model) -> RegionGraph:
    sets = {"2478": (1, 3, 6, 7), "123456": (0, 1, 2, 3, 4, 5), "24": (1, 3), "36": (2, 5)}
    regions = [Region(rid, vs, factors_within(model, vs)) for rid, vs in sets.items()]
    edges = [("2478", "24"), ("123456", "24"), ("123456", "36")]
    return build_region_graph(regions, edges, model)


def reference_fixed_point(
    plan: Plan, tol: float = 1e-12, damping: float = REFERENCE_DAMPING, max_iters: int = 20000
) -> MessageSet:
    result = run_to_fixed_point(plan, tol=tol, max_iters=max_iters, damping=damping)
    if not result.converged:
        raise GBPError(f"reference GBP did not reach tol {tol} in {max_iters} iterations")
    return result.messages


# ---------------------------------------------------------------- traces


TRACE_COLUMNS = (
    "iter",
    "alpha",
    "delta_not1",
    "delta_full",
    "ops_gbp_equiv",
    "ops_actual",
    "wallclock_ns",
    "delta_not1_raw",
    "delta_full_raw",
)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_rows(trace: RunTrace) -> list[dict]:
    """Seed-averaged rows; row 0 is the starting point."""
    n_runs = len(trace.seeds)
    rows = []

    def row(i, alpha, cols, ops, wall):
        r = dict(zip(("delta_not1", "delta_full", "delta_not1_raw", "delta_full_raw"), (c.mean() for c in cols)))
        r.update(iter=i, alpha=alpha, ops_gbp_equiv=ops[0], ops_actual=ops[1], wallclock_ns=wall)
        if n_runs > 1:
            r["delta_not1_var"] = cols[0].var(ddof=1)
        return r

    rows.append(row(0, 0.0, (trace.delta0, trace.delta0_full, trace.delta0_raw, trace.delta0_full_raw), (0, 0), 0))
    for i in range(len(trace)):
        cols = (trace.delta[:, i], trace.delta_full[:, i], trace.delta_raw[:, i], trace.delta_full_raw[:, i])
        rows.append(row(i + 1, trace.alpha[i], cols, (trace.ops_gbp_equiv, trace.ops_actual), trace.wallclock_ns[i]))
    return rows


def write_trace_csv(trace: RunTrace, path: str | Path) -> Path:
    columns = list(TRACE_COLUMNS) + (["delta_not1_var"] if len(trace.seeds) > 1 else [])
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in trace_rows(trace):
            w.writerow(_fmt(r[c]) for c in columns)
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- analysis


def loglog_slope(t: np.ndarray, y: np.ndarray, lo: float, hi: float) -> float:
    mask = (t >= lo) & (t <= hi) & np.isfinite(y) & (y > 0)
    return float(np.polyfit(np.log(t[mask]), np.log(y[mask]), 1)[0])


def worst_uptick(y: np.ndarray, start: int) -> float:
    """Largest one-step relative increase ``y[t+1]/y[t] - 1`` for ``t >= start`` (0-based)."""
    tail = y[start:]
    return float(np.max(tail[1:] / tail[:-1] - 1.0))


def worst_rebound(y: np.ndarray, start: int) -> float:
    """Largest relative excursion of ``y`` above its running minimum after index ``start``."""
    tail = y[start:]
    return float(np.max(tail / np.minimum.accumulate(tail) - 1.0))


def fit_exponent(ds, values) -> float:
    return float(np.polyfit(np.log(ds), np.log(values), 1)[0])


def high_probability_constant(trace: RunTrace, horizon: int, coverage: float = 0.9, t_min: int = 100) -> float:
    """Smallest ``C`` with ``delta(t) <= C (1 + log t) / t`` on ``[t_min, horizon]`` for ``coverage`` of runs."""
    t = trace.iters
    mask = (t >= t_min) & (t <= horizon)
    bound = (1.0 + np.log(t[mask])) / t[mask]
    per_run = (trace.delta[:, mask] / bound).max(axis=1)
    return float(np.quantile(per_run, coverage, method="higher"))


def probe_nu(plan: Plan, reference: MessageSet, seed: int = 0) -> dict:
    """Both empirical contraction diagnostics at the reference fixed point.

    ``lipschitz`` is the largest observed ratio ``|U(m)-U(m')| / |m-m'|``;
    ``monotone`` the smallest observed one-sided rate (see
    :func:`sgbp.gauge.monotonicity_probe`).  ``nu`` is twice the latter.
    """
    ratio = contraction_probe(plan, reference, seed=seed)
    rate = monotonicity_probe(plan, reference, seed=seed)
    return {"lipschitz": ratio, "monotone": rate, "nu": 2.0 * rate, "contractive": ratio < 1.0}


def gbp_dominant_ops(d: int, params: PottsParams | None = None) -> int:
    """Kernel op count of one GBP update on the grid's costliest edge."""
    plan = potts_grid_plan(d, params)
    m = init_messages(plan)
    best = 0
    for meta in plan.metas:
        c = OpCounter()
        gbp_update_edge(m, meta, counter=c)
        best = max(best, c["sum"])
    return best


def i2_op_ratio(d: int, edge=("123456", "36")) -> tuple[int, int]:
    """(GBP ops, SGBP ops) for one update of the gain-2 edge of the eight-variable fixture."""
    model = example_i2_model(d)
    plan = Plan.build(model, example_i2_graph(model))
    meta = plan.meta(edge)
    c = OpCounter()
    gbp_update_edge(init_messages(plan), meta, counter=c)
    return c["sum"], SGBP.build(plan).kernel(edge).ops


# ---------------------------------------------------------------- reproduction


@dataclass
class ConvergenceConfig:
    out_dir: Path = Path("results")
    ds: tuple[int, ...] = (4, 8, 16, 32)
    seeds: int = 20
    iters: int = 10_000
    schedule: str = "harmonic"
    alpha: float = 1.5
    nu: float = 1.0
    potts: PottsParams = field(default_factory=PottsParams)
    ref_tol: float = 1e-12
    runtime_d: int = 4
    runtime_targets: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def convergence_trace(cfg: ConvergenceConfig, d: int) -> tuple[Plan, MessageSet, RunTrace]:
    plan = potts_grid_plan(d, cfg.potts)
    ref = reference_fixed_point(plan, tol=cfg.ref_tol)
    schedule = StepSchedule.parse(cfg.schedule, cfg.alpha, cfg.nu)
    trace = sgbp_run(SGBP.build(plan), schedule, cfg.iters, range(cfg.seeds), ref)
    return plan, ref, trace


def gbp_timeline(plan: Plan, reference: MessageSet, iters: int, damping: float = REFERENCE_DAMPING):
    """Per-iteration gauge-aligned error and cumulative wall-clock of damped GBP."""
    meter = ErrorMeter(plan, reference, build_gauge(plan))
    m = init_messages(plan)
    deltas, wall = [], []
    elapsed = 0
    for _ in range(iters):
        t0 = time.perf_counter_ns()
        m = gbp_iterate(plan, m, damping)
        elapsed += time.perf_counter_ns() - t0
        wall.append(elapsed)
        deltas.append(float(meter([t.reshape(1, -1) for t in m.tables])[0][0]))
    return np.array(deltas), np.array(wall)


def runtime_rows(plan, reference, trace, targets, gbp_iters=2000) -> list[dict]:
    g_delta, g_wall = gbp_timeline(plan, reference, gbp_iters)
    s_delta = trace.delta.mean(axis=0)
    rows = []
    for name, delta, wall in (("gbp", g_delta, g_wall), ("sgbp", s_delta, trace.wallclock_ns)):
        for target in targets:
            hit = np.nonzero(delta <= target)[0]
            i = int(hit[0]) if hit.size else None
            rows.append(
                {
                    "algorithm": name,
                    "target_delta": target,
                    "iter": "" if i is None else i + 1,
                    "wallclock_ns": "" if i is None else int(wall[i]),
                }
            )
    return rows


def reproduce_convergence(cfg: ConvergenceConfig) -> dict:
    """Write one trace CSV per alphabet size, the combined plot and the runtime table."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    series = {}
    for d in cfg.ds:
        plan, ref, trace = convergence_trace(cfg, d)
        path = write_trace_csv(trace, out / f"convergence_d{d}.csv")
        mean = trace.delta.mean(axis=0)
        series[f"d={d}"] = (trace.iters, mean)
        summary[d] = {
            "csv": str(path),
            "delta0": float(trace.delta0.mean()),
            "delta_final": float(mean[-1]),
            "ops_gbp_equiv": trace.ops_gbp_equiv,
            "ops_actual": trace.ops_actual,
        }
        if d == cfg.runtime_d:
            rows = runtime_rows(plan, ref, trace, cfg.runtime_targets)
            rpath = out / f"runtime_d{d}.csv"
            with rpath.open("w", newline="") as fh:
                w = csv.DictWriter(fh, ["algorithm", "target_delta", "iter", "wallclock_ns"], lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
            summary["runtime_csv"] = str(rpath)
    svg = out / "convergence.svg"
    svg.write_text(loglog_svg(series, "SGBP on the 3x3 Potts grid", "iteration t", "mean delta(t)"))
    summary["svg"] = str(svg)
    return summary


# ---------------------------------------------------------------- plotting

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def loglog_svg(series: dict, title: str, xlabel: str, ylabel: str, width: int = 640, height: int = 440) -> str:
    """A self-contained log-log line plot."""
    left, right, top, bottom = 70, 130, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    x0, x1 = math.floor(math.log10(xs[ok].min())), math.ceil(math.log10(xs[ok].max()))
    y0, y1 = math.floor(math.log10(ys[ok].min())), math.ceil(math.log10(ys[ok].max()))
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)

    def px(x):
        return left + (math.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - math.log10(y)) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2}" y="22" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        x = px(10.0**e)
        parts.append(f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{top + ph}" stroke="#ddd"/>')
        parts.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = py(10.0**e)
        parts.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 18 {top + ph / 2})">{ylabel}</text>'
    )
    for k, (label, (x, y)) in enumerate(series.items()):
        x, y = np.asarray(x, float), np.asarray(y, float)
        keep = (x > 0) & (y > 0) & np.isfinite(y)
        x, y = x[keep], y[keep]
        # thin to about 300 log-spaced points
        idx = np.unique(np.geomspace(1, len(x), num=min(300, len(x))).astype(int) - 1)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x[idx], y[idx]))
        color = _COLORS[k % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * k
        parts.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 42}" y="{ly + 4}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
