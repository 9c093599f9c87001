"""Stochastic GBP: sampled message updates mixed in with Robbins-Monro steps.

The engine advances a batch of independent runs (one per seed) in lockstep.
State is a list with one ``(batch, d**|R|)`` array per edge, in graph edge
order, each row a normalized message flattened in C order over the child's
variables.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .edges import EdgeClass, EdgeMetadata
from .gbp import FLOOR, GBPError, MessageSet, OpCounter, Plan, init_messages
from .rng import stream

SCHEDULE_ALIASES = {
    "harmonic": "harmonic_2_over_1_plus_t",
    "paper": "harmonic_2_over_1_plus_t",
    "msbound": "alpha_over_nu_t_plus_2",
    "hp": "one_over_nu_t_plus_1",
}


class SamplingError(GBPError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``alpha(t)`` for ``t = 1, 2, ...``, clipped into (0, 1].

    ``custom`` evaluates ``expr`` with ``t``, ``nu``, ``alpha`` and ``math`` in scope.
    """

    kind: str = "harmonic_2_over_1_plus_t"
    alpha: float = 1.5
    nu: float = 1.0
    expr: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SCHEDULE_ALIASES.get(self.kind, self.kind))
        if self.kind not in (*SCHEDULE_ALIASES.values(), "custom"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "alpha_over_nu_t_plus_2" and not 1 < self.alpha < 2:
            raise ValueError("this schedule needs 1 < alpha < 2")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.kind == "custom" and not self.expr:
            raise ValueError("custom schedule needs an expression")

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError("steps are indexed from t = 1")
        if self.kind == "harmonic_2_over_1_plus_t":
            a = 2.0 / (1.0 + t)
        elif self.kind == "alpha_over_nu_t_plus_2":
            a = self.alpha / (self.nu * (t + 2))
        elif self.kind == "one_over_nu_t_plus_1":
            a = 1.0 / (self.nu * (t + 1))
        else:
            a = float(eval(self.expr, {"math": math}, {"t": t, "nu": self.nu, "alpha": self.alpha}))
        if not a > 0:
            raise ValueError(f"step size at t={t} is not positive: {a}")
        return min(a, 1.0)

    @classmethod
    def parse(cls, text: str, alpha: float = 1.5, nu: float = 1.0) -> "StepSchedule":
        if text.startswith("custom:"):
            return cls("custom", alpha, nu, text.split(":", 1)[1])
        return cls(text, alpha, nu)


def gather_index(scope_out: tuple[int, ...], scope_in: tuple[int, ...], d: int) -> np.ndarray:
    """Flat position in a table over ``scope_in`` for every assignment of ``scope_out``."""
    states = np.indices((d,) * len(scope_out)).reshape(len(scope_out), -1)
    idx = np.zeros(states.shape[1], dtype=np.intp)
    for v in scope_in:
        idx = idx * d + states[scope_out.index(v)]
    return idx


@dataclass(eq=False)
class EdgeKernel:
    """Precomputed index maps and potential slices for one edge.

    ``table`` is the quotient potential over the parent scope with axes
    (sampled, child, free), so one gather picks the free-variable slice for
    every child assignment at once.
    """

    meta: EdgeMetadata
    d: int
    numerator: list[tuple[int, np.ndarray]] = field(repr=False)
    denominator: list[tuple[int, np.ndarray]] = field(repr=False)
    cond_of_child: np.ndarray = field(repr=False)
    table: np.ndarray | None = field(default=None, repr=False)
    mass: np.ndarray | None = field(default=None, repr=False)
    phi_tilde: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_sampled(self) -> int:
        return self.d ** len(self.meta.sampled)

    @property
    def n_cond(self) -> int:
        return self.d ** len(self.meta.conditioning)

    @property
    def n_child(self) -> int:
        return self.d ** len(self.meta.child_vars)

    @property
    def ops(self) -> int:
        """Multiply-adds in the per-iteration kernels of this edge."""
        cls = self.meta.edge_class
        if cls is EdgeClass.E3:
            # k marginal over the sampled block, then the free-variable sum per child value
            return self.n_sampled * self.n_cond + self.n_child * self.table.shape[2]
        if cls is EdgeClass.E2:
            return self.n_child
        return 0

    @classmethod
    def build(cls, meta: EdgeMetadata, plan: Plan) -> "EdgeKernel":
        d, graph = plan.d, plan.graph
        P, R = meta.parent_vars, meta.child_vars
        S, F, C = meta.sampled, meta.free, meta.conditioning
        position = {e: i for i, e in enumerate(graph.edges)}

        def gathers(edges):
            # M-hat is laid out as (sampled, conditioning)
            return [(position[e], gather_index(S + C, graph[e[1]].variables, d)) for e in edges]

        cond = gather_index(R, C, d)
        kernel = cls(meta, d, gathers(meta.numerator_edges), gathers(meta.denominator_edges), cond)
        if meta.edge_class is EdgeClass.E1:
            return kernel
        full = np.broadcast_to(meta.quotient.expand(P), (d,) * len(P))
        perm = [P.index(v) for v in S + R + F]
        table = np.ascontiguousarray(np.transpose(full, perm)).reshape(d ** len(S), d ** len(R), d ** len(F))
        if meta.edge_class is EdgeClass.E2:
            kernel.phi_tilde = table.sum(axis=(0, 2))
            return kernel
        kernel.table = table
        per_child = table.sum(axis=2)  # (nS, nR)
        mass = np.zeros((table.shape[0], kernel.n_cond))
        for c in range(kernel.n_cond):
            mass[:, c] = per_child[:, cond == c].sum(axis=1)
        kernel.mass = mass
        return kernel

    def mhat(self, state: list[np.ndarray]) -> np.ndarray:
        """Message ratio per run, shape (batch, sampled, conditioning)."""
        batch = state[0].shape[0]
        M = np.ones((batch, self.n_sampled * self.n_cond))
        for pos, idx in self.numerator:
            M *= state[pos][:, idx]
        if self.denominator:
            den = np.ones_like(M)
            for pos, idx in self.denominator:
                den *= state[pos][:, idx]
            if den.min() < FLOOR * FLOOR:
                raise GBPError(f"denominator underflow on edge {self.meta.edge}")
            M /= den
        return M.reshape(batch, self.n_sampled, self.n_cond)


def build_q_and_k(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional sampling distribution and its normalizer.

    ``M`` has the sampled block on axis -2 and the conditioning block on axis
    -1.  Slices with zero mass get NaN in ``Q``; sampling from them is an error.
    """
    k = M.sum(axis=-2)
    if not np.all(np.any(k > 0, axis=-1)):
        raise SamplingError("message ratio is identically zero")
    with np.errstate(invalid="ignore", divide="ignore"):
        Q = M / k[..., None, :]
    return Q, k


def sample_columns(M: np.ndarray, k: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one sampled index per conditioning value."""
    if np.any(k <= 0):
        raise SamplingError("sampling from a conditional slice with zero mass")
    cdf = np.cumsum(M, axis=-2)
    J = (cdf < (u * k)[..., None, :]).sum(axis=-2)
    return np.minimum(J, M.shape[-2] - 1)


def innovation(kernel: EdgeKernel, k: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Unnormalized stochastic estimate of the GBP update for sample indices ``J``.

    ``k`` and ``J`` have shape (batch, nC); returns (batch, nR).
    """
    cond = kernel.cond_of_child
    picked = kernel.table[J[:, cond], np.arange(cond.size)]  # (batch, nR, nF)
    return k[:, cond] * picked.sum(axis=-1)


def expected_mass(kernel: EdgeKernel, M: np.ndarray) -> np.ndarray:
    """Total mass of the exact GBP update, per run; cheap because ``mass`` is precomputed."""
    return np.einsum("bsc,sc->b", M, kernel.mass)


def normalize_rows(x: np.ndarray, floor: float = FLOOR) -> np.ndarray:
    total = x.sum(axis=1, keepdims=True)
    if not np.all(np.isfinite(total)) or np.any(total <= 0):
        raise GBPError("message has zero or non-finite mass")
    x = x / total
    low = x.min(axis=1) < floor
    if low.any():
        y = np.maximum(x[low], floor)
        x[low] = y / y.sum(axis=1, keepdims=True)
    return x


@dataclass(eq=False)
class SGBP:
    plan: Plan
    kernels: tuple[EdgeKernel, ...]

    @classmethod
    def build(cls, plan: Plan) -> "SGBP":
        return cls(plan, tuple(EdgeKernel.build(m, plan) for m in plan.metas))

    def kernel(self, edge) -> EdgeKernel:
        return self.kernels[self.plan.graph.edges.index(edge)]

    def gbp_equivalent_ops(self) -> int:
        return sum(self.plan.d ** m.parent_size for m in self.plan.metas if m.edge_class is not EdgeClass.E1)

    def ops_by_class(self) -> dict[str, int]:
        out = {c.short: 0 for c in EdgeClass}
        for k in self.kernels:
            out[k.meta.edge_class.short] += k.ops
        return out

    def state_from(self, messages: MessageSet, batch: int = 1) -> list[np.ndarray]:
        return [np.repeat(t.reshape(1, -1), batch, axis=0) for t in messages.tables]

    def messages_from(self, state: list[np.ndarray], row: int = 0) -> MessageSet:
        m = init_messages(self.plan)
        return MessageSet(m.edges, m.scopes, [s[row].reshape(t.shape).copy() for s, t in zip(state, m.tables)])


def update_kernel(
    kernel: EdgeKernel,
    state: list[np.ndarray],
    alpha: float,
    uniforms: np.ndarray | None,
    check_bounds: bool = False,
) -> np.ndarray:
    """New messages for one edge across the batch; E1 edges are returned unchanged."""
    meta = kernel.meta
    old = state[meta.index]
    if meta.edge_class is EdgeClass.E1:
        return old
    M = kernel.mhat(state)
    if meta.edge_class is EdgeClass.E2:
        target = M[:, 0, :][:, kernel.cond_of_child] * kernel.phi_tilde
        total = target.sum(axis=1)
    else:
        k = M.sum(axis=1)
        J = sample_columns(M, k, uniforms)
        target = innovation(kernel, k, J)
        # exact mass of the expected update: target / total is unbiased for the normalized update
        total = expected_mass(kernel, M)
    if np.any(~(total > 0)):
        raise GBPError(f"update on edge {meta.edge[0]}->{meta.edge[1]} has zero mass")
    target = target / total[:, None]
    if check_bounds and meta.edge_class is EdgeClass.E3:
        lo, hi = convex_bounds(kernel, M)
        if np.any(target < lo * (1 - 1e-12)) or np.any(target > hi * (1 + 1e-12)):
            raise AssertionError(f"innovation outside its sample range on edge {meta.edge}")
    return normalize_rows((1.0 - alpha) * old + alpha * target)


def convex_bounds(kernel: EdgeKernel, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise range of the normalized innovation over every admissible sample."""
    k = M.sum(axis=1)
    total = expected_mass(kernel, M)
    cond = kernel.cond_of_child
    per = kernel.table.sum(axis=2)  # (nS, nR)
    support = (M > 0)[:, :, cond]  # (batch, nS, nR)
    vals = (k[:, cond] / total[:, None])[:, None, :] * per[None]
    lo = np.where(support, vals, np.inf).min(axis=1)
    hi = np.where(support, vals, -np.inf).max(axis=1)
    return lo, hi


class UniformSource:
    """Uniform draws for every (run, edge), addressed by iteration.

    Run ``s`` reads edge ``i``'s draws from the stream keyed by ``(s, i)``;
    iteration ``t`` consumes positions ``[(t-1) n_cond, t n_cond)``, one per
    conditioning value.  Draws are buffered in chunks of iterations.
    """

    def __init__(self, seeds, engine: SGBP, chunk: int = 512):
        self.chunk = chunk
        self.width = {k.meta.index: k.n_cond for k in engine.kernels if k.meta.edge_class is EdgeClass.E3}
        self.streams = {i: [stream(s, 0x5EED, i) for s in seeds] for i in self.width}
        self.buffer: dict[int, np.ndarray] = {}
        self.start = 1 - chunk
        self.next_t = 1

    def at(self, t: int) -> dict[int, np.ndarray]:
        if t != self.next_t:
            raise ValueError("uniform draws must be consumed in iteration order")
        self.next_t += 1
        if t >= self.start + self.chunk:
            self.start += self.chunk
            self.buffer = {
                i: np.stack([g.random((self.chunk, w)) for g in self.streams[i]], axis=1)
                for i, w in self.width.items()
            }
        return {i: b[t - self.start] for i, b in self.buffer.items()}


def sgbp_iterate(engine: SGBP, state: list[np.ndarray], alpha: float, uniforms: dict, check_bounds=False):
    """One synchronous sweep: every edge reads the previous iterate."""
    return [update_kernel(k, state, alpha, uniforms.get(k.meta.index), check_bounds) for k in engine.kernels]


class ErrorMeter:
    """Relative squared errors of a batch of states against a reference.

    Each call reports the errors after aligning every run to the reference's
    gauge (see :mod:`sgbp.gauge`) and the raw errors, both on the non-E1 block
    and on the full message vector.
    """

    def __init__(self, plan: Plan, reference: MessageSet, gauge=None):
        from .gauge import build_gauge

        self.plan = plan
        self.gauge = build_gauge(plan) if gauge is None else gauge
        self.ref = [t.reshape(1, -1) for t in reference.tables]
        self.log_ref = [np.log(r) for r in self.ref]
        self.stoch = np.array([m.edge_class is not EdgeClass.E1 for m in plan.metas])
        self.norm_stoch = sum(float((r**2).sum()) for r, s in zip(self.ref, self.stoch) if s)
        self.norm_full = sum(float((r**2).sum()) for r in self.ref)

    def _errors(self, state) -> tuple[np.ndarray, np.ndarray]:
        sq = np.stack([((s - r) ** 2).sum(axis=1) for s, r in zip(state, self.ref)], axis=1)
        stoch = sq[:, self.stoch].sum(axis=1) / self.norm_stoch if self.norm_stoch else np.zeros(len(sq))
        return stoch, sq.sum(axis=1) / self.norm_full

    def align(self, state) -> list[np.ndarray]:
        shapes = [(self.plan.d,) * len(self.plan.graph[c].variables) for _, c in self.plan.graph.edges]
        logs = [(np.log(s) - lr).reshape((s.shape[0],) + sh) for s, lr, sh in zip(state, self.log_ref, shapes)]
        shift = self.gauge.project(logs)
        return [normalize_rows(s * np.exp(-g.reshape(s.shape[0], -1))) for s, g in zip(state, shift)]

    def __call__(self, state) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(aligned non-E1, aligned full, raw non-E1, raw full), each of shape (batch,)."""
        raw = self._errors(state)
        aligned = self._errors(self.align(state))
        return aligned[0], aligned[1], raw[0], raw[1]


@dataclass
class RunTrace:
    """Per-iteration record of a batch of runs over iterations 1..T.

    Error arrays have shape (runs, T); ``delta0*`` hold the errors of the
    starting point.  ``delta`` is the gauge-aligned non-E1 error.
    """

    seeds: tuple[int, ...]
    alpha: np.ndarray
    delta: np.ndarray
    delta_full: np.ndarray
    delta_raw: np.ndarray
    delta_full_raw: np.ndarray
    delta0: np.ndarray
    delta0_full: np.ndarray
    delta0_raw: np.ndarray
    delta0_full_raw: np.ndarray
    ops_gbp_equiv: int
    ops_by_class: dict[str, int]
    wallclock_ns: np.ndarray
    final: list[MessageSet] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.alpha)

    @property
    def iters(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    @property
    def ops_actual(self) -> int:
        return sum(self.ops_by_class.values())


def sgbp_run(
    engine: SGBP,
    schedule: StepSchedule,
    iters: int,
    seeds,
    reference: MessageSet | None = None,
    messages: MessageSet | None = None,
    check_bounds: bool = False,
    record_every: int = 1,
) -> RunTrace:
    """Run ``iters`` SGBP sweeps for each seed in lockstep from ``messages`` (default uniform).

    Errors against ``reference`` are recorded every ``record_every`` iterations
    and at the last one; other entries stay NaN.
    """
    seeds = (int(seeds),) if isinstance(seeds, (int, np.integer)) else tuple(int(s) for s in seeds)
    start = init_messages(engine.plan) if messages is None else messages
    state = engine.state_from(start, len(seeds))
    source = UniformSource(seeds, engine)
    n, B = int(iters), len(seeds)
    alpha = np.zeros(n)
    errs = [np.full((B, n), np.nan) for _ in range(4)]
    zero = [np.full(B, np.nan) for _ in range(4)]
    meter = ErrorMeter(engine.plan, reference) if reference is not None else None
    if meter is not None:
        zero = list(meter(state))
    wall = np.zeros(n, dtype=np.int64)
    t0 = time.perf_counter_ns()
    for i in range(n):
        t = i + 1
        a = schedule(t)
        state = sgbp_iterate(engine, state, a, source.at(t), check_bounds)
        alpha[i] = a
        if meter is not None and (t % record_every == 0 or t == n):
            for arr, val in zip(errs, meter(state)):
                arr[:, i] = val
        wall[i] = (time.perf_counter_ns() - t0) // B
    return RunTrace(
        seeds=seeds,
        alpha=alpha,
        delta=errs[0],
        delta_full=errs[1],
        delta_raw=errs[2],
        delta_full_raw=errs[3],
        delta0=zero[0],
        delta0_full=zero[1],
        delta0_raw=zero[2],
        delta0_full_raw=zero[3],
        ops_gbp_equiv=engine.gbp_equivalent_ops(),
        ops_by_class=engine.ops_by_class(),
        wallclock_ns=wall,
        final=[engine.messages_from(state, b) for b in range(B)],
    )


def sgbp_update_edge(
    messages: MessageSet,
    kernel: EdgeKernel,
    t: int,
    schedule: StepSchedule,
    rng: np.random.Generator,
    counter: OpCounter | None = None,
) -> np.ndarray:
    """Stochastic update of one message; E1 messages come back unchanged."""
    state = [tab.reshape(1, -1) for tab in messages.tables]
    u = rng.random((1, kernel.n_cond)) if kernel.meta.edge_class is EdgeClass.E3 else None
    out = update_kernel(kernel, state, schedule(t), u)
    if counter is not None:
        counter[kernel.meta.edge_class.short] += kernel.ops
    return out[0].reshape(messages[kernel.meta.edge].shape)


def expected_innovation(kernel: EdgeKernel, M: np.ndarray) -> np.ndarray:
    """Exact expectation of :func:`innovation` by enumerating every sample value.

    ``M`` has shape (nS, nC).  The update at ``x_R`` only sees the sample drawn
    for its own conditioning value, so the slices are enumerated independently.
    """
    M = M[None]
    Q, k = build_q_and_k(M)
    out = np.zeros(kernel.n_child)
    for j in range(kernel.n_sampled):
        J = np.full((1, kernel.n_cond), j)
        weight = np.nan_to_num(Q[0, j])[kernel.cond_of_child]
        out += weight * innovation(kernel, k, J)[0]
    return out
