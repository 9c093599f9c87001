"""Ground truth by exhaustive enumeration.

Nothing here is optimized and nothing here reuses the engines' tensor code:
these functions exist so the engines can be checked against them.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .model import Model

MAX_ASSIGNMENTS = 10**8


class OracleError(ValueError):
    pass


@dataclass
class ExactResult:
    partition_function: float
    marginals: dict[tuple[int, ...], np.ndarray]

    def marginal(self, *variables: int) -> np.ndarray:
        return self.marginals[tuple(variables)]


def exact_marginals(model: Model, subsets=None) -> ExactResult:
    """Enumerate all ``d**n`` joint assignments; return Z and subset marginals."""
    n, d = model.n, model.d
    if d**n > MAX_ASSIGNMENTS:
        raise OracleError(f"{d}^{n} assignments exceeds the enumeration guard")
    if subsets is None:
        subsets = [(v,) for v in range(n)]
    subsets = [tuple(sorted(s)) for s in subsets]

    # row k of `states` is the k-th assignment in lexicographic order
    states = np.array(list(itertools.product(range(d), repeat=n)), dtype=np.intp).reshape(-1, n)
    weight = np.ones(len(states))
    for f in model.factors:
        cols = tuple(states[:, v] for v in f.variables)
        weight = weight * f.table.values[cols]
    Z = float(weight.sum())
    if not Z > 0:
        raise OracleError("partition function is zero")

    marginals = {}
    for s in subsets:
        acc = np.zeros((d,) * len(s))
        np.add.at(acc, tuple(states[:, v] for v in s), weight)
        marginals[s] = acc / Z
    return ExactResult(Z, marginals)


def _closure(edges, rid):
    """The region and everything reachable from it."""
    seen = {rid}
    stack = [rid]
    while stack:
        r = stack.pop()
        for p, c in edges:
            if p == r and c not in seen:
                seen.add(c)
                stack.append(c)
    return seen


def reference_sets(graph, edge):
    edges = list(graph.edges)
    P, R = edge
    EP = _closure(edges, P)
    ER = _closure(edges, R)
    DP = EP - {P}
    numerator = [(I, J) for I, J in edges if I not in EP and J in EP and J not in ER]
    denominator = [(I, J) for I, J in edges if I in DP and I not in ER and J in ER]
    return numerator, denominator


def _product_of_factors(model, factor_ids, x):
    value = 1.0
    for fid in factor_ids:
        f = model.factor(fid)
        value *= f.table.values[tuple(x[v] for v in f.variables)]
    return value


def _message_value(messages, e, x):
    i = messages.index(e)
    scope = messages.scopes[i]
    return messages.tables[i][tuple(x[v] for v in scope)]


def reference_update(messages, edge, graph, model) -> np.ndarray:
    """Literal loop implementation of the parent-to-child message update, normalized."""
    d = model.d
    P, R = graph[edge[0]], graph[edge[1]]
    numerator, denominator = reference_sets(graph, edge)
    out = np.zeros((d,) * len(R.variables))
    for values in itertools.product(range(d), repeat=len(P.variables)):
        x = dict(zip(P.variables, values))
        phi_p = _product_of_factors(model, P.factors, x)
        phi_r = _product_of_factors(model, R.factors, x)
        if phi_r == 0:
            if phi_p != 0:
                raise OracleError("region potential ratio has a zero denominator")
            ratio = 0.0
        else:
            ratio = phi_p / phi_r
        top = 1.0
        for e in numerator:
            top *= _message_value(messages, e, x)
        bottom = 1.0
        for e in denominator:
            bottom *= _message_value(messages, e, x)
        out[tuple(x[v] for v in R.variables)] += ratio * top / bottom
    return out / out.sum()


def reference_belief(messages, rid, graph, model) -> np.ndarray:
    """Region belief evaluated point by point from its defining product."""
    d = model.d
    R = graph[rid]
    edges = list(graph.edges)
    ER = _closure(edges, rid)
    used = [(p, c) for p, c in edges if c == rid]
    for D in ER - {rid}:
        used.extend((p, c) for p, c in edges if c == D and p not in ER)
    out = np.zeros((d,) * len(R.variables))
    for values in itertools.product(range(d), repeat=len(R.variables)):
        x = dict(zip(R.variables, values))
        v = _product_of_factors(model, R.factors, x)
        for e in used:
            v *= _message_value(messages, e, x)
        out[values] = v
    return out / out.sum()
