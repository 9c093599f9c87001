"""Random instance generators shared by the test modules."""
from __future__ import annotations

import itertools

import numpy as np

from sgbp.model import Factor, ModelSpec, build_model
from sgbp.regions import bethe_regions, cluster_region_graph
from sgbp.tables import FactorTable


def random_model(rng: np.random.Generator, n: int, d: int, extra: int = 4, max_arity: int = 3, low: float = 0.2):
    """Unary factors on every variable plus ``extra`` random factors of arity 2..max_arity."""
    factors = [Factor(f"u{v}", (v,), FactorTable((v,), rng.uniform(low, 1.0, d))) for v in range(n)]
    for k in range(extra):
        arity = int(rng.integers(2, min(max_arity, n) + 1))
        vs = tuple(sorted(rng.choice(n, size=arity, replace=False).tolist()))
        factors.append(Factor(f"f{k}", vs, FactorTable(vs, rng.uniform(low, 1.0, (d,) * arity))))
    return build_model(ModelSpec(n, d, tuple(factors)))


def random_cluster_graph(rng: np.random.Generator, model, max_regions: int = 8, tries: int = 100):
    """Cluster graph over 2-4 random top clusters, with at least one edge and at most ``max_regions`` regions."""
    n = model.n
    for _ in range(tries):
        k = int(rng.integers(2, 5))
        tops = []
        for _ in range(k):
            size = int(rng.integers(2, min(4, n) + 1))
            tops.append(tuple(sorted(rng.choice(n, size=size, replace=False).tolist())))
        # drop clusters contained in others so every given cluster is a top
        tops = [t for t in set(tops) if not any(set(t) < set(u) for u in tops)]
        graph = cluster_region_graph(model, tops)
        if graph.edges and len(graph.regions) <= max_regions:
            return graph
    raise RuntimeError("no admissible region graph found")


def random_tree_model(rng: np.random.Generator, n: int, d: int):
    """Pairwise model on a random spanning tree, with unary fields."""
    factors = [Factor(f"u{v}", (v,), FactorTable((v,), rng.uniform(0.2, 1.0, d))) for v in range(n)]
    for v in range(1, n):
        u = int(rng.integers(0, v))
        vs = (u, v)
        factors.append(Factor(f"p{u}_{v}", vs, FactorTable(vs, rng.uniform(0.1, 1.0, (d, d)))))
    model = build_model(ModelSpec(n, d, tuple(factors)))
    return model, bethe_regions(model)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def all_assignments(d: int, k: int):
    return itertools.product(range(d), repeat=k)
