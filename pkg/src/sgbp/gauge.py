"""Gauge freedom of parent-to-child messages.

Multiplying every message by a positive function of its child's variables
leaves all region beliefs unchanged whenever the log-factors cancel inside
each belief.  Such transforms commute with the message update, so fixed
points come in whole orbits and message distances are only meaningful
modulo the orbit.  In log space the transforms form a linear subspace; it
splits over interaction subsets ``S`` (uniform-measure ANOVA components),
and for each ``S`` it is the null space of a small region-by-edge incidence
matrix tensored with the zero-mean functions of ``S``.

Arrays handled here carry a leading batch axis: shape (batch, d, ..., d).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .gbp import MessageSet, Plan, belief_messages, gbp_iterate, normalize


def _align(values: np.ndarray, scope, target) -> np.ndarray:
    shape = [values.shape[0]] + [1] * len(target)
    for v, n in zip(scope, values.shape[1:]):
        shape[1 + target.index(v)] = n
    return values.reshape(shape)


def anova_component(values: np.ndarray, scope: tuple[int, ...], subset: tuple[int, ...]) -> np.ndarray:
    """The ``subset`` interaction component of batched ``values``, shape (batch, d, ..., d)."""
    d = values.shape[1] if values.ndim > 1 else 1
    out = np.zeros((values.shape[0],) + (d,) * len(subset))
    for r in range(len(subset) + 1):
        for keep in itertools.combinations(subset, r):
            drop = tuple(1 + i for i, v in enumerate(scope) if v not in keep)
            mean = values.mean(axis=drop) if drop else values
            out += (-1) ** (len(subset) - r) * _align(mean, keep, subset)
    return out


@dataclass(frozen=True, eq=False)
class _Block:
    subset: tuple[int, ...]
    edges: tuple[int, ...]  # positions in the graph's edge list
    projector: np.ndarray = field(repr=False)  # acts on the edge axis


@dataclass(frozen=True, eq=False)
class Gauge:
    plan: Plan
    blocks: tuple[_Block, ...]

    @property
    def dimension(self) -> int:
        """Dimension of the gauge subspace, per-message constants included."""
        d = self.plan.d
        free = sum(round(np.trace(b.projector)) * (d - 1) ** len(b.subset) for b in self.blocks)
        return int(free) + len(self.plan.graph.edges)

    def project(self, logs: list[np.ndarray]) -> list[np.ndarray]:
        """Projection of per-edge log tables onto the gauge subspace, per batch row.

        The projection is orthogonal for the plain inner product on the
        concatenated message vector.
        """
        scopes = [self.plan.graph[c].variables for _, c in self.plan.graph.edges]
        out = [np.broadcast_to(w.mean(axis=tuple(range(1, w.ndim)), keepdims=True), w.shape).copy() for w in logs]
        for b in self.blocks:
            comps = np.stack([anova_component(logs[i], scopes[i], b.subset) for i in b.edges])
            proj = np.tensordot(b.projector, comps, axes=(1, 0))
            for row, i in enumerate(b.edges):
                out[i] += _align(proj[row], b.subset, scopes[i])
        return out


def build_gauge(plan: Plan, tol: float = 1e-10) -> Gauge:
    graph = plan.graph
    d = plan.d
    scopes = [graph[c].variables for _, c in graph.edges]
    index = {e: i for i, e in enumerate(graph.edges)}
    incoming = {r.id: {index[e] for e in belief_messages(r.id, graph)} for r in graph.regions}
    subsets = sorted({s for sc in scopes for k in range(1, len(sc) + 1) for s in itertools.combinations(sc, k)})
    blocks = []
    for S in subsets:
        cols = tuple(i for i, sc in enumerate(scopes) if set(S) <= set(sc))
        A = np.array([[1.0 if i in incoming[r.id] else 0.0 for i in cols] for r in graph.regions])
        _, sv, vt = np.linalg.svd(A)
        rank = int((sv > tol).sum())
        N = vt[rank:].T
        if N.shape[1] == 0:
            continue
        # an S-component repeats over the other variables of its message, hence the weights
        w = np.array([float(d) ** (len(scopes[i]) - len(S)) for i in cols])
        P = N @ np.linalg.solve(N.T @ (w[:, None] * N), N.T * w)
        blocks.append(_Block(S, cols, P))
    return Gauge(plan, tuple(blocks))


def align_to(gauge: Gauge, messages: MessageSet, reference: MessageSet) -> MessageSet:
    """The gauge-equivalent copy of ``messages`` closest to ``reference`` in log space."""
    logs = [(np.log(a) - np.log(b))[None] for a, b in zip(messages.tables, reference.tables)]
    shift = gauge.project(logs)
    out = messages.copy()
    out.tables = [normalize(t * np.exp(-g[0])) for t, g in zip(messages.tables, shift)]
    return out


def monotonicity_probe(
    plan: Plan, m_star: MessageSet, gauge: Gauge | None = None, samples: int = 200, scale: float = 1e-5, seed: int = 0
) -> float:
    """Smallest observed ``-<dm, F(m) - F(m*)> / |dm|^2`` with ``F(m) = U(m) - m``.

    Perturbations of the non-E1 messages are drawn in log space with their
    gauge component removed, since gauge directions leave ``F`` at zero.  A
    contraction with ratio ``1 - nu/2`` forces this quantity to be at least
    ``nu/2``.
    """
    gauge = build_gauge(plan) if gauge is None else gauge
    rng = np.random.default_rng(seed)
    stoch = [m.edge_class.short != "E1" for m in plan.metas]
    base = m_star.vector()
    f_star = gbp_iterate(plan, m_star).vector() - base
    worst = np.inf
    for _ in range(samples):
        logs = [
            rng.standard_normal((1,) + t.shape) if s else np.zeros((1,) + t.shape)
            for t, s in zip(m_star.tables, stoch)
        ]
        logs = [w - g for w, g in zip(logs, gauge.project(logs))]
        m = m_star.copy()
        m.tables = [normalize(t * np.exp(scale * w[0])) for t, w in zip(m_star.tables, logs)]
        dm = m.vector() - base
        norm = float(dm @ dm)
        if norm == 0:
            continue
        df = gbp_iterate(plan, m).vector() - m.vector() - f_star
        worst = min(worst, float(-(dm @ df) / norm))
    return worst
