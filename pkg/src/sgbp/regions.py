"""Region graphs over a factor graph: validation, closures and region potentials."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Model, grid_node
from .tables import FactorTable


class RegionGraphError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    id: str
    variables: tuple[int, ...]
    factors: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "variables", tuple(sorted(set(int(v) for v in self.variables))))
        object.__setattr__(self, "factors", tuple(sorted(set(str(f) for f in self.factors))))

    def __len__(self) -> int:
        return len(self.variables)


Edge = tuple[str, str]


@dataclass(frozen=True, eq=False)
class RegionGraph:
    regions: tuple[Region, ...]
    edges: tuple[Edge, ...]
    parents: dict[str, frozenset[str]] = field(repr=False)
    children: dict[str, frozenset[str]] = field(repr=False)
    ancestors: dict[str, frozenset[str]] = field(repr=False)
    descendants: dict[str, frozenset[str]] = field(repr=False)
    order: tuple[str, ...] = field(repr=False)

    def __getitem__(self, rid: str) -> Region:
        return self._lookup[rid]

    @property
    def _lookup(self) -> dict[str, Region]:
        cache = self.__dict__.get("_by_id")
        if cache is None:
            cache = {r.id: r for r in self.regions}
            object.__setattr__(self, "_by_id", cache)
        return cache

    def closure(self, rid: str) -> frozenset[str]:
        """E(R): the region together with all of its descendants."""
        return self.descendants[rid] | {rid}

    @property
    def top_regions(self) -> tuple[str, ...]:
        return tuple(r for r in self.order if not self.parents[r])

    def is_top(self, rid: str) -> bool:
        return not self.parents[rid]

    def edge_index(self) -> dict[Edge, int]:
        return {e: i for i, e in enumerate(self.edges)}


def factors_within(model: Model, variables: Iterable[int]) -> tuple[str, ...]:
    vs = set(variables)
    return tuple(f.id for f in model.factors if set(f.variables) <= vs)


def build_region_graph(
    regions: Sequence[Region], edges: Iterable[Sequence[str]], model: Model | None = None
) -> RegionGraph:
    by_id: dict[str, Region] = {}
    for r in regions:
        if r.id in by_id:
            raise RegionGraphError(f"duplicate region id {r.id!r}")
        by_id[r.id] = r
        if model is not None:
            _check_region(r, model)

    edge_list: list[Edge] = []
    for e in edges:
        p, c = str(e[0]), str(e[1])
        for rid in (p, c):
            if rid not in by_id:
                raise RegionGraphError(f"edge {p}->{c} references unknown region {rid!r}")
        P, R = by_id[p], by_id[c]
        if not (set(R.variables) < set(P.variables)):
            raise RegionGraphError(
                f"edge {p}->{c}: child variables must be a strict subset of the parent's"
            )
        if not set(R.factors) <= set(P.factors):
            raise RegionGraphError(f"edge {p}->{c}: child factors must be a subset of the parent's")
        if (p, c) not in edge_list:
            edge_list.append((p, c))

    parents = {rid: set() for rid in by_id}
    children = {rid: set() for rid in by_id}
    for p, c in edge_list:
        parents[c].add(p)
        children[p].add(c)

    order = _toposort(list(by_id), children, parents)
    descendants: dict[str, frozenset[str]] = {}
    for rid in reversed(order):
        acc = set()
        for c in children[rid]:
            acc.add(c)
            acc |= descendants[c]
        descendants[rid] = frozenset(acc)
    ancestors = {rid: set() for rid in by_id}
    for rid, ds in descendants.items():
        for x in ds:
            ancestors[x].add(rid)

    return RegionGraph(
        regions=tuple(by_id[r] for r in by_id),
        edges=tuple(edge_list),
        parents={k: frozenset(v) for k, v in parents.items()},
        children={k: frozenset(v) for k, v in children.items()},
        ancestors={k: frozenset(v) for k, v in ancestors.items()},
        descendants=descendants,
        order=tuple(order),
    )


def _check_region(r: Region, model: Model) -> None:
    bad = [v for v in r.variables if not 0 <= v < model.n]
    if bad:
        raise RegionGraphError(f"region {r.id}: variables {bad} outside the model")
    known = {f.id for f in model.factors}
    for fid in r.factors:
        if fid not in known:
            raise RegionGraphError(f"region {r.id}: unknown factor {fid!r}")
        missing = set(model.factor(fid).variables) - set(r.variables)
        if missing:
            raise RegionGraphError(
                f"region {r.id}: factor {fid} needs variables {sorted(missing)} in the region"
            )


def _toposort(ids, children, parents) -> list[str]:
    # Kahn's algorithm; stable with respect to the input order.
    indeg = {r: len(parents[r]) for r in ids}
    ready = [r for r in ids if indeg[r] == 0]
    out = []
    while ready:
        r = ready.pop(0)
        out.append(r)
        for c in sorted(children[r], key=ids.index):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(out) != len(ids):
        stuck = sorted(r for r in ids if indeg[r] > 0)
        raise RegionGraphError(f"cycle detected among regions {stuck}")
    return out


def region_potential(region: Region, model: Model) -> FactorTable:
    scope = region.variables
    values = np.ones((model.d,) * len(scope))
    for fid in region.factors:
        values = values * model.factor(fid).table.expand(scope)
    return FactorTable(scope, values)


def _label(vs: Iterable[int], n: int) -> str:
    labels = [str(v + 1) for v in sorted(vs)]
    return "".join(labels) if n <= 9 else "_".join(labels)


def cluster_region_graph(model: Model, clusters: Iterable[Iterable[int]]) -> RegionGraph:
    """Tops are the given clusters; lower regions are their repeated intersections.

    Every region receives all factors whose variables it contains, and edges
    link each region to the smallest regions strictly containing it.
    """
    tops = {tuple(sorted(set(c))) for c in clusters}
    sets = set(tops)
    frontier = set(tops)
    while frontier:
        new = set()
        for a, b in itertools.combinations(sorted(sets), 2):
            inter = tuple(sorted(set(a) & set(b)))
            if inter and inter not in sets:
                new.add(inter)
        sets |= new
        frontier = new
    ordered = sorted(sets, key=lambda s: (-len(s), s))
    regions = [Region(_label(s, model.n), s, factors_within(model, s)) for s in ordered]
    label = {s: _label(s, model.n) for s in ordered}
    edges = []
    for child in ordered:
        supers = [s for s in ordered if set(child) < set(s)]
        minimal = [s for s in supers if not any(set(t) < set(s) for t in supers)]
        edges.extend((label[p], label[child]) for p in minimal)
    return build_region_graph(regions, edges, model)


def grid_cluster_regions(model: Model, rows: int, cols: int, size: int = 2) -> RegionGraph:
    """Overlapping ``size`` x ``size`` clusters of a row-major grid as top regions."""
    clusters = []
    for r in range(rows - size + 1):
        for c in range(cols - size + 1):
            clusters.append(
                [grid_node(r + i, c + j, cols) for i in range(size) for j in range(size)]
            )
    return cluster_region_graph(model, clusters)


def bethe_regions(model: Model) -> RegionGraph:
    """One top region per multi-variable factor, one child per shared variable."""
    tops = []
    for f in model.factors:
        if len(f.variables) >= 2 and f.variables not in tops:
            tops.append(f.variables)
    counts = {}
    for t in tops:
        for v in t:
            counts[v] = counts.get(v, 0) + 1
    regions = [Region(_label(t, model.n), t, factors_within(model, t)) for t in tops]
    edges = []
    for v in range(model.n):
        if counts.get(v, 0) == 1:
            continue
        rid = _label((v,), model.n)
        regions.append(Region(rid, (v,), factors_within(model, (v,))))
        edges.extend((_label(t, model.n), rid) for t in tops if v in t)
    return build_region_graph(regions, edges, model)


def graph_to_dict(graph: RegionGraph) -> dict:
    return {
        "regions": [
            {"id": r.id, "variables": list(r.variables), "factors": list(r.factors)}
            for r in graph.regions
        ],
        "edges": [list(e) for e in graph.edges],
    }


def graph_from_dict(data: dict, model: Model | None = None) -> RegionGraph:
    regions = [Region(r["id"], r["variables"], r.get("factors", ())) for r in data["regions"]]
    return build_region_graph(regions, data["edges"], model)


def save_regions(graph: RegionGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph)))


def load_regions(path: str | Path, model: Model | None = None) -> RegionGraph:
    return graph_from_dict(json.loads(Path(path).read_text()), model)
