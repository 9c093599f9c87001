"""Deterministic parent-to-child generalized belief propagation."""
from __future__ import annotations

import string
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .edges import EdgeClass, EdgeMetadata, analyze_graph
from .model import Model
from .regions import Edge, RegionGraph, region_potential
from .tables import FactorTable, align

FLOOR = 1e-12


class GBPError(RuntimeError):
    pass


class OpCounter(defaultdict):
    """Scalar operation tallies keyed by stage name."""

    def __init__(self):
        super().__init__(int)

    @property
    def total(self) -> int:
        return sum(self.values())


@dataclass
class MessageSet:
    edges: tuple[Edge, ...]
    scopes: tuple[tuple[int, ...], ...]
    tables: list[np.ndarray]
    _index: dict[Edge, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._index is None:
            self._index = {e: i for i, e in enumerate(self.edges)}

    def __getitem__(self, edge: Edge) -> np.ndarray:
        return self.tables[self._index[edge]]

    def __setitem__(self, edge: Edge, value: np.ndarray) -> None:
        self.tables[self._index[edge]] = value

    def index(self, edge: Edge) -> int:
        return self._index[edge]

    def copy(self) -> "MessageSet":
        return MessageSet(self.edges, self.scopes, [t.copy() for t in self.tables], self._index)

    def vector(self, edges: Iterable[Edge] | None = None) -> np.ndarray:
        chosen = self.edges if edges is None else edges
        parts = [self.tables[self._index[e]].reshape(-1) for e in chosen]
        return np.concatenate(parts) if parts else np.zeros(0)

    @property
    def dimension(self) -> int:
        return sum(t.size for t in self.tables)

    def table(self, edge: Edge) -> FactorTable:
        i = self._index[edge]
        return FactorTable(self.scopes[i], self.tables[i])


@dataclass(frozen=True, eq=False)
class Plan:
    """A model, a region graph over it, and the per-edge update structure."""

    model: Model
    graph: RegionGraph
    metas: tuple[EdgeMetadata, ...]

    @classmethod
    def build(cls, model: Model, graph: RegionGraph) -> "Plan":
        return cls(model, graph, tuple(analyze_graph(graph, model)))

    @property
    def d(self) -> int:
        return self.model.d

    def meta(self, edge: Edge) -> EdgeMetadata:
        return self.metas[self.graph.edges.index(edge)]

    def edges_of(self, *classes: EdgeClass) -> tuple[Edge, ...]:
        return tuple(m.edge for m in self.metas if m.edge_class in classes)

    @property
    def non_e1_edges(self) -> tuple[Edge, ...]:
        return self.edges_of(EdgeClass.E2, EdgeClass.E3)


def normalize(values: np.ndarray, floor: float = FLOOR, what: str = "message") -> np.ndarray:
    total = values.sum()
    if not np.isfinite(total) or total <= 0:
        raise GBPError(f"{what} has zero or non-finite mass")
    out = values / total
    if out.min() < floor:
        out = np.maximum(out, floor)
        out = out / out.sum()
    return out


def uniform_messages(graph: RegionGraph, d: int) -> MessageSet:
    scopes = tuple(graph[c].variables for _, c in graph.edges)
    tables = [np.full((d,) * len(s), 1.0 / d ** len(s)) for s in scopes]
    return MessageSet(graph.edges, scopes, tables)


def init_messages(plan: Plan) -> MessageSet:
    """Uniform messages, except message-independent edges start at their final value."""
    m = uniform_messages(plan.graph, plan.d)
    for meta in plan.metas:
        if meta.edge_class is EdgeClass.E1:
            m[meta.edge] = gbp_update_edge(m, meta, plan.model)
    return m


def _letters(scope_vars: Sequence[int]) -> dict[int, str]:
    letters = string.ascii_letters
    if len(scope_vars) > len(letters):
        raise GBPError("too many variables in one region for einsum")
    return {v: letters[i] for i, v in enumerate(scope_vars)}


def _product(tables: Sequence[np.ndarray], scopes: Sequence[tuple[int, ...]], out: tuple[int, ...], d: int):
    if len(tables) == 1 and scopes[0] == out:
        return tables[0]
    acc = np.ones((d,) * len(out))
    for t, s in zip(tables, scopes):
        acc = acc * align(t, s, out)
    return acc


def mhat(messages: MessageSet, meta: EdgeMetadata, counter: OpCounter | None = None) -> np.ndarray:
    """Ratio of numerator to denominator message products over the scope T."""
    T = meta.t_scope
    d = _alphabet(messages)
    num = _product(
        [messages[e] for e in meta.numerator_edges],
        [messages.scopes[messages.index(e)] for e in meta.numerator_edges],
        T,
        d,
    )
    if not meta.denominator_edges:
        out = num
    else:
        den = _product(
            [messages[e] for e in meta.denominator_edges],
            [messages.scopes[messages.index(e)] for e in meta.denominator_edges],
            T,
            d,
        )
        if den.min() < FLOOR * FLOOR:
            raise GBPError(f"denominator underflow on edge {meta.edge}")
        out = num / den
    if counter is not None:
        counter["aux_mhat"] += max(len(meta.numerator_edges) + len(meta.denominator_edges) - 1, 0) * d ** len(T)
    return out


def _alphabet(messages: MessageSet) -> int:
    for t in messages.tables:
        if t.ndim:
            return t.shape[0]
    raise GBPError("cannot infer alphabet size from scalar messages")


def unnormalized_update(
    messages: MessageSet, meta: EdgeMetadata, counter: OpCounter | None = None
) -> np.ndarray:
    """Sum over the eliminated variables of quotient potential times the message ratio."""
    d = meta.quotient.values.shape[0] if meta.quotient.scope else _alphabet(messages)
    M = mhat(messages, meta, counter)
    P, R = meta.parent_vars, meta.child_vars
    lt = _letters(P)
    operands = [meta.quotient.values, M]
    subs = ["".join(lt[v] for v in meta.quotient.scope), "".join(lt[v] for v in meta.t_scope)]
    covered = set(meta.quotient.scope) | set(meta.t_scope)
    for v in R:
        if v not in covered:
            operands.append(np.ones(d))
            subs.append(lt[v])
            covered.add(v)
    out = np.einsum(f"{','.join(subs)}->{''.join(lt[v] for v in R)}", *operands)
    if counter is not None:
        counter["sum"] += d ** len(covered)
    return out


def gbp_update_edge(
    messages: MessageSet, meta: EdgeMetadata, model: Model | None = None, counter: OpCounter | None = None
) -> np.ndarray:
    raw = unnormalized_update(messages, meta, counter)
    return normalize(raw, what=f"update on edge {meta.edge[0]}->{meta.edge[1]}")


def _edge_order(plan: Plan) -> list[EdgeMetadata]:
    rank = {r: i for i, r in enumerate(plan.graph.order)}
    return sorted(plan.metas, key=lambda m: (rank[m.edge[0]], rank[m.edge[1]]))


def gbp_iterate(
    plan: Plan,
    messages: MessageSet,
    damping: float = 0.0,
    schedule: str = "sync",
    counter: OpCounter | None = None,
) -> MessageSet:
    """One application of the global update (synchronous unless ``schedule='async'``)."""
    if not 0 <= damping < 1:
        raise ValueError("damping must lie in [0, 1)")
    if schedule == "sync":
        new = messages.copy()
        for meta in plan.metas:
            new[meta.edge] = _mix(gbp_update_edge(messages, meta, counter=counter), messages[meta.edge], damping)
        return new
    if schedule == "async":
        new = messages.copy()
        for meta in _edge_order(plan):
            new[meta.edge] = _mix(gbp_update_edge(new, meta, counter=counter), new[meta.edge], damping)
        return new
    raise ValueError(f"unknown schedule {schedule!r}")


def _mix(new: np.ndarray, old: np.ndarray, damping: float) -> np.ndarray:
    if damping == 0:
        return new
    return normalize((1 - damping) * new + damping * old)


@dataclass
class FixedPointResult:
    messages: MessageSet
    converged: bool
    iters: int
    residuals: list[float]


def run_to_fixed_point(
    plan: Plan,
    messages: MessageSet | None = None,
    tol: float = 1e-10,
    max_iters: int = 1000,
    damping: float = 0.0,
    schedule: str = "sync",
) -> FixedPointResult:
    m = init_messages(plan) if messages is None else messages
    residuals: list[float] = []
    for it in range(1, max_iters + 1):
        new = gbp_iterate(plan, m, damping, schedule)
        residuals.append(float(np.linalg.norm(new.vector() - m.vector())))
        m = new
        if residuals[-1] < tol:
            return FixedPointResult(m, True, it, residuals)
    return FixedPointResult(m, False, max_iters, residuals)


def compute_belief(messages: MessageSet, rid: str, graph: RegionGraph, model: Model) -> FactorTable:
    R = graph[rid]
    scope = R.variables
    values = region_potential(R, model).values
    ER = graph.closure(rid)
    incoming = [(p, rid) for p in graph.parents[rid]]
    for D in graph.descendants[rid]:
        incoming.extend((p, D) for p in graph.parents[D] if p not in ER)
    for e in incoming:
        i = messages.index(e)
        values = values * align(messages.tables[i], messages.scopes[i], scope)
    total = values.sum()
    if not total > 0:
        raise GBPError(f"belief of region {rid} has zero mass")
    return FactorTable(scope, values / total)


def belief_messages(rid: str, graph: RegionGraph) -> list[Edge]:
    """Edges whose messages enter the belief of ``rid``."""
    ER = graph.closure(rid)
    out = [(p, rid) for p in sorted(graph.parents[rid])]
    for D in sorted(graph.descendants[rid]):
        out.extend((p, D) for p in sorted(graph.parents[D]) if p not in ER)
    return out


def variable_marginals(messages: MessageSet, graph: RegionGraph, model: Model) -> np.ndarray:
    """Single-variable marginals read off the smallest region containing each variable."""
    out = np.zeros((model.n, model.d))
    for v in range(model.n):
        holders = [r for r in graph.regions if v in r.variables]
        if not holders:
            out[v] = 1.0 / model.d
            continue
        best = min(holders, key=lambda r: (len(r), r.id))
        b = compute_belief(messages, best.id, graph, model)
        out[v] = b.marginalize([v]).values
    return out


def contraction_probe(
    plan: Plan, m_star: MessageSet, samples: int = 50, scale: float = 1e-3, seed: int = 0
) -> float:
    """Largest observed ``||U(m) - U(m')|| / ||m - m'||`` for pairs near ``m_star``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        a, b = _perturb(m_star, plan, rng, scale), _perturb(m_star, plan, rng, scale)
        diff = np.linalg.norm(a.vector() - b.vector())
        if diff == 0:
            continue
        ua, ub = gbp_iterate(plan, a), gbp_iterate(plan, b)
        worst = max(worst, float(np.linalg.norm(ua.vector() - ub.vector()) / diff))
    return worst


def nu_from_ratio(ratio: float) -> float:
    """Contraction ratio ``1 - nu/2`` to ``nu``, clipped into (0, 2)."""
    return float(np.clip(2.0 * (1.0 - ratio), 1e-6, 2.0 - 1e-6))


def _perturb(m: MessageSet, plan: Plan, rng, scale) -> MessageSet:
    out = m.copy()
    for e in plan.non_e1_edges:
        t = out[e]
        out[e] = normalize(t * np.exp(scale * rng.standard_normal(t.shape)))
    return out


def messages_to_dict(messages: MessageSet) -> dict:
    return {
        "messages": [
            {"parent": p, "child": c, "scope": list(s), "values": t.reshape(-1).tolist()}
            for (p, c), s, t in zip(messages.edges, messages.scopes, messages.tables)
        ]
    }


def messages_from_dict(data: dict, graph: RegionGraph, d: int) -> MessageSet:
    """Messages for every edge of ``graph``; entries may come in any order."""
    given = {(m["parent"], m["child"]): m for m in data["messages"]}
    out = uniform_messages(graph, d)
    for i, e in enumerate(out.edges):
        if e not in given:
            raise GBPError(f"message for edge {e[0]}->{e[1]} missing")
        values = np.asarray(given[e]["values"], dtype=float)
        if values.size != out.tables[i].size or values.min() < 0:
            raise GBPError(f"message for edge {e[0]}->{e[1]} has the wrong size or negative entries")
        out.tables[i] = values.reshape(out.tables[i].shape)
    return out
