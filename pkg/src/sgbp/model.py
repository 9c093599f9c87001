"""Discrete MRFs as factor graphs with dense tables, plus Potts grid instances."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import uniform_at
from .tables import FactorTable


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Factor:
    id: str
    variables: tuple[int, ...]
    table: FactorTable

    @classmethod
    def from_flat(cls, id, variables: Sequence[int], values: Sequence[float], d: int) -> "Factor":
        variables = tuple(int(v) for v in variables)
        flat = np.asarray(values, dtype=float)
        if flat.size != d ** len(variables):
            raise ModelError(
                f"factor {id}: expected {d ** len(variables)} values, got {flat.size}"
            )
        if list(variables) != sorted(set(variables)):
            raise ModelError(f"factor {id}: variables must be sorted and distinct")
        return cls(str(id), variables, FactorTable.from_flat(variables, flat, d))

    def __eq__(self, other):
        if not isinstance(other, Factor):
            return NotImplemented
        return (self.id, self.variables) == (other.id, other.variables) and self.table == other.table


@dataclass(frozen=True)
class ModelSpec:
    num_variables: int
    alphabet_size: int
    factors: tuple[Factor, ...]


@dataclass(frozen=True, eq=False)
class Model:
    num_variables: int
    alphabet_size: int
    factors: tuple[Factor, ...]
    adjacency: tuple[tuple[str, ...], ...] = field(repr=False)

    @property
    def d(self) -> int:
        return self.alphabet_size

    @property
    def n(self) -> int:
        return self.num_variables

    def factor(self, fid: str) -> Factor:
        return self._by_id[fid]

    @property
    def _by_id(self) -> dict[str, Factor]:
        cache = self.__dict__.get("_cache")
        if cache is None:
            cache = {f.id: f for f in self.factors}
            object.__setattr__(self, "_cache", cache)
        return cache

    def spec(self) -> ModelSpec:
        return ModelSpec(self.num_variables, self.alphabet_size, self.factors)

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return (
            self.num_variables == other.num_variables
            and self.alphabet_size == other.alphabet_size
            and self.factors == other.factors
        )


def build_model(spec: ModelSpec) -> Model:
    n, d = int(spec.num_variables), int(spec.alphabet_size)
    if n < 1:
        raise ModelError("num_variables must be positive")
    if d < 2:
        raise ModelError(f"alphabet_size must be >= 2, got {d}")
    seen = set()
    adjacency: list[list[str]] = [[] for _ in range(n)]
    for f in spec.factors:
        if f.id in seen:
            raise ModelError(f"duplicate factor id {f.id!r}")
        seen.add(f.id)
        bad = [v for v in f.variables if not 0 <= v < n]
        if bad:
            raise ModelError(f"factor {f.id}: variable indices {bad} outside [0, {n})")
        if list(f.variables) != sorted(set(f.variables)):
            raise ModelError(f"factor {f.id}: variables must be sorted and distinct")
        if f.table.scope != f.variables or f.table.values.shape != (d,) * len(f.variables):
            raise ModelError(f"factor {f.id}: table does not match {len(f.variables)} axes of extent {d}")
        if np.any(f.table.values < 0) or not np.all(np.isfinite(f.table.values)):
            raise ModelError(f"factor {f.id}: table entries must be finite and nonnegative")
        for v in f.variables:
            adjacency[v].append(f.id)
    return Model(n, d, tuple(spec.factors), tuple(tuple(a) for a in adjacency))


@dataclass(frozen=True)
class PottsParams:
    grid_rows: int = 3
    grid_cols: int = 3
    gamma: float = 0.1
    mu: float = 0.1
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ModelError("grid dimensions must be positive")
        if not 0 < self.gamma < 1:
            raise ModelError(f"gamma must lie in (0, 1), got {self.gamma}")
        # sigma = 0 is allowed as the noiseless limit
        if not (0 <= self.sigma <= self.mu and self.sigma + self.mu < 1):
            raise ModelError("need 0 <= sigma <= mu and sigma + mu < 1")


def grid_node(r: int, c: int, cols: int) -> int:
    return r * cols + c


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = grid_node(r, c, cols)
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return sorted(edges)


def make_potts(params: PottsParams, d: int) -> ModelSpec:
    """Potts grid: unit diagonal / ``gamma`` off-diagonal couplings, noisy unary fields.

    State 0 carries unary weight 1; every other state of every node gets its own
    draw ``mu + sigma * Y`` with ``Y ~ U(-1, 1)`` keyed by ``(seed, node, state)``.
    """
    if d < 2:
        raise ModelError(f"alphabet size must be >= 2, got {d}")
    rows, cols = params.grid_rows, params.grid_cols
    n = rows * cols
    factors = []
    for u in range(n):
        values = np.ones(d)
        for i in range(1, d):
            y = uniform_at(params.seed, (u, i), (0,), -1.0, 1.0)
            values[i] = params.mu + params.sigma * y
        factors.append(Factor(f"phi{u}", (u,), FactorTable((u,), values)))
    coupling = np.full((d, d), params.gamma)
    np.fill_diagonal(coupling, 1.0)
    for u, v in grid_edges(rows, cols):
        factors.append(Factor(f"psi{u}_{v}", (u, v), FactorTable((u, v), coupling.copy())))
    return ModelSpec(n, d, tuple(factors))


def model_to_dict(model: Model | ModelSpec) -> dict:
    return {
        "num_variables": model.num_variables,
        "alphabet_size": model.alphabet_size,
        "factors": [
            {"id": f.id, "variables": list(f.variables), "values": f.table.flat.tolist()}
            for f in model.factors
        ],
    }


def model_from_dict(data: dict) -> Model:
    d = int(data["alphabet_size"])
    factors = tuple(
        Factor.from_flat(f["id"], f["variables"], f["values"], d) for f in data["factors"]
    )
    return build_model(ModelSpec(int(data["num_variables"]), d, factors))


def save_model(model: Model | ModelSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
