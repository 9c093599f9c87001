"""Per-edge update structure for parent-to-child message passing.

For an edge ``P -> R`` this derives the message sets that enter the update
(numerator ``N(P,R)`` and denominator ``D(P,R)``), the potential quotient
``Phi_P / Phi_R`` with its scope ``P'``, the scope ``T`` of the message ratio,
and the complexity verdict for the stochastic update.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import Model
from .regions import Edge, RegionGraph
from .tables import FactorTable


class EdgeClass(str, enum.Enum):
    E1 = "E1_independent"
    E2 = "E2_deterministic"
    E3 = "E3_stochastic"

    @property
    def short(self) -> str:
        return self.name


@dataclass(frozen=True, eq=False)
class EdgeMetadata:
    edge: Edge
    index: int
    parent_vars: tuple[int, ...]
    child_vars: tuple[int, ...]
    numerator_edges: tuple[Edge, ...]
    denominator_edges: tuple[Edge, ...]
    quotient: FactorTable
    t_scope: tuple[int, ...]
    sampled: tuple[int, ...]  # (P\R) & T
    free: tuple[int, ...]  # (P\R) - T
    conditioning: tuple[int, ...]  # T - (P\R), always inside R
    rest: tuple[int, ...]  # P' - (P\R), always inside R
    edge_class: EdgeClass
    eta: int
    gain: int
    reduces_complexity: bool

    @property
    def eliminated(self) -> tuple[int, ...]:
        return tuple(v for v in self.parent_vars if v not in self.child_vars)

    @property
    def parent_size(self) -> int:
        return len(self.parent_vars)

    @property
    def split(self) -> dict[str, tuple[int, ...]]:
        return {
            "sampled": self.sampled,
            "free": self.free,
            "conditioning": self.conditioning,
            "rest": self.rest,
        }


def compute_edge_sets(graph: RegionGraph, edge: Edge) -> tuple[tuple[Edge, ...], tuple[Edge, ...]]:
    P, R = edge
    if edge not in graph.edges:
        raise KeyError(f"edge {P}->{R} is not in the graph")
    EP, ER = graph.closure(P), graph.closure(R)
    DP = graph.descendants[P]
    numerator = tuple((I, J) for I, J in graph.edges if I not in EP and J in EP - ER)
    denominator = tuple((I, J) for I, J in graph.edges if I in DP - ER and J in ER)
    # I not in E(P) versus I in D(P) makes the two sets disjoint by construction
    assert not set(numerator) & set(denominator), (edge, numerator, denominator)
    return numerator, denominator


def compute_quotient(graph: RegionGraph, model: Model, edge: Edge) -> FactorTable:
    """``Phi_P / Phi_R`` by symbolic cancellation of the shared factors."""
    P, R = graph[edge[0]], graph[edge[1]]
    remaining = [model.factor(f) for f in P.factors if f not in set(R.factors)]
    scope = tuple(sorted({v for f in remaining for v in f.variables}))
    values = np.ones((model.d,) * len(scope))
    for f in remaining:
        values = values * f.table.expand(scope)
    return FactorTable(scope, values)


def classify(
    parent_vars, child_vars, t_scope
) -> tuple[EdgeClass, int, int, bool, tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    eliminated = set(parent_vars) - set(child_vars)
    T = set(t_scope)
    sampled = tuple(sorted(eliminated & T))
    free = tuple(sorted(eliminated - T))
    conditioning = tuple(sorted(T - eliminated))
    nR = len(child_vars)
    eta = max(len(T), nR + len(free), nR + len(sampled))
    if not T:
        cls = EdgeClass.E1
    elif not sampled:
        cls = EdgeClass.E2
    else:
        cls = EdgeClass.E3
    reduces = bool(sampled) and bool(free)
    gain = len(parent_vars) - eta if cls is EdgeClass.E3 else 0
    return cls, eta, gain, reduces, sampled, free, conditioning


def edge_metadata(graph: RegionGraph, model: Model, edge: Edge, index: int | None = None) -> EdgeMetadata:
    numerator, denominator = compute_edge_sets(graph, edge)
    t_scope = tuple(sorted({v for _, J in numerator + denominator for v in graph[J].variables}))
    P, R = graph[edge[0]], graph[edge[1]]
    quotient = compute_quotient(graph, model, edge)
    cls, eta, gain, reduces, sampled, free, conditioning = classify(
        P.variables, R.variables, t_scope
    )
    if cls is EdgeClass.E1:
        eta = len(quotient.scope)
    eliminated = set(P.variables) - set(R.variables)
    rest = tuple(v for v in quotient.scope if v not in eliminated)
    return EdgeMetadata(
        edge=edge,
        index=graph.edges.index(edge) if index is None else index,
        parent_vars=P.variables,
        child_vars=R.variables,
        numerator_edges=numerator,
        denominator_edges=denominator,
        quotient=quotient,
        t_scope=t_scope,
        sampled=sampled,
        free=free,
        conditioning=conditioning,
        rest=rest,
        edge_class=cls,
        eta=eta,
        gain=gain,
        reduces_complexity=reduces,
    )


def analyze_graph(graph: RegionGraph, model: Model) -> list[EdgeMetadata]:
    return [edge_metadata(graph, model, e, i) for i, e in enumerate(graph.edges)]


def sgbp_exponent(meta: EdgeMetadata) -> int:
    """Per-iteration cost exponent of the stochastic update on this edge."""
    if meta.edge_class is EdgeClass.E1:
        return 0
    if meta.reduces_complexity:
        return meta.eta
    return meta.parent_size


@dataclass(frozen=True)
class GraphComplexity:
    a_max: int
    dominant_edges: tuple[Edge, ...]
    sgbp_exponent: int

    @property
    def dominant_gain(self) -> int:
        return self.a_max - self.sgbp_exponent


def graph_complexity(graph: RegionGraph, metas: list[EdgeMetadata]) -> GraphComplexity:
    """GBP is dominated by the largest top regions; SGBP by its costliest edge."""
    tops = [graph[r] for r in graph.top_regions if graph.children[r]]
    if not tops:
        return GraphComplexity(0, (), 0)
    a_max = max(len(r) for r in tops)
    dominant = tuple(m.edge for m in metas if m.parent_size == a_max and graph.is_top(m.edge[0]))
    exponent = max(sgbp_exponent(m) for m in metas)
    return GraphComplexity(a_max, dominant, exponent)


def format_report(graph: RegionGraph, metas: list[EdgeMetadata]) -> str:
    header = f"{'edge':<18} {'class':<5} {'|P|':>4} {'|T|':>4} {'eta':>4} {'I':>4}  verdict"
    lines = [header, "-" * len(header)]
    for m in metas:
        verdict = "reduces" if m.reduces_complexity else "no-gain"
        lines.append(
            f"{m.edge[0] + '->' + m.edge[1]:<18} {m.edge_class.short:<5} {m.parent_size:>4} "
            f"{len(m.t_scope):>4} {m.eta:>4} {m.gain:>4}  {verdict}"
        )
    gc = graph_complexity(graph, metas)
    lines.append("")
    lines.append(f"A_max = {gc.a_max}  (GBP dominant cost d^{gc.a_max})")
    lines.append(f"SGBP dominant cost d^{gc.sgbp_exponent}  (gain {gc.dominant_gain})")
    return "\n".join(lines)


def report_rows(graph: RegionGraph, metas: list[EdgeMetadata]) -> list[dict]:
    return [
        {
            "edge": f"{m.edge[0]}->{m.edge[1]}",
            "class": m.edge_class.short,
            "P": m.parent_size,
            "T": len(m.t_scope),
            "eta": m.eta,
            "I": m.gain,
            "reduces": m.reduces_complexity,
        }
        for m in metas
    ]
