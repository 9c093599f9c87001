"""Dense factor tables over ordered variable scopes.

A table over scope ``(v0, v1, ..., vk)`` with alphabet size ``d`` is stored as
a numpy array of shape ``(d,) * k``.  Flattening in C order gives the
lexicographic layout with the first scope variable varying slowest, which is
also the on-disk layout of model files.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def linearize(assignment: Sequence[int], d: int) -> int:
    index = 0
    for x in assignment:
        if not 0 <= x < d:
            raise ValueError(f"state {x} outside alphabet of size {d}")
        index = index * d + int(x)
    return index


def delinearize(index: int, d: int, k: int) -> tuple[int, ...]:
    if not 0 <= index < d**k:
        raise ValueError(f"index {index} outside table of length {d**k}")
    out = []
    for _ in range(k):
        index, x = divmod(index, d)
        out.append(x)
    return tuple(reversed(out))


@dataclass(frozen=True, eq=False)
class FactorTable:
    scope: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if list(scope) != sorted(set(scope)):
            raise ValueError(f"scope must be sorted and duplicate-free, got {scope}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != len(scope) or len(set(values.shape)) > 1:
            raise ValueError(
                f"values of shape {values.shape} do not match scope {scope}"
            )
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_flat(cls, scope: Sequence[int], flat: Sequence[float], d: int) -> "FactorTable":
        flat = np.asarray(flat, dtype=float)
        if flat.size != d ** len(scope):
            raise ValueError(
                f"expected {d ** len(scope)} values for scope {tuple(scope)}, got {flat.size}"
            )
        return cls(tuple(scope), flat.reshape((d,) * len(scope)))

    @classmethod
    def ones(cls, scope: Sequence[int], d: int) -> "FactorTable":
        return cls(tuple(scope), np.ones((d,) * len(scope)))

    @property
    def d(self) -> int | None:
        return self.values.shape[0] if self.values.ndim else None

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __call__(self, assignment: dict[int, int]) -> float:
        return float(self.values[tuple(assignment[v] for v in self.scope)])

    def __eq__(self, other):
        if not isinstance(other, FactorTable):
            return NotImplemented
        return self.scope == other.scope and np.array_equal(self.values, other.values)

    def expand(self, scope: Sequence[int]) -> np.ndarray:
        """Broadcast-ready view of the values over a sorted superset scope."""
        return align(self.values, self.scope, scope)

    def marginalize(self, keep: Iterable[int]) -> "FactorTable":
        keep = tuple(sorted(set(keep)))
        missing = set(keep) - set(self.scope)
        if missing:
            raise ValueError(f"cannot keep variables {sorted(missing)} not in scope")
        axes = tuple(i for i, v in enumerate(self.scope) if v not in keep)
        return FactorTable(keep, self.values.sum(axis=axes))

    def normalized(self) -> "FactorTable":
        total = self.values.sum()
        if total <= 0:
            raise ZeroDivisionError(f"table over {self.scope} has zero mass")
        return FactorTable(self.scope, self.values / total)


def align(values: np.ndarray, scope: Sequence[int], target: Sequence[int]) -> np.ndarray:
    """Reshape ``values`` (over sorted ``scope``) to broadcast against sorted ``target``."""
    position = {v: i for i, v in enumerate(target)}
    if any(v not in position for v in scope):
        raise ValueError(f"scope {tuple(scope)} is not contained in {tuple(target)}")
    shape = [1] * len(target)
    for v, n in zip(scope, values.shape):
        shape[position[v]] = n
    return values.reshape(shape)


def union_scope(*scopes: Iterable[int]) -> tuple[int, ...]:
    out: set[int] = set()
    for s in scopes:
        out.update(s)
    return tuple(sorted(out))


def table_pointwise(op: str, a: FactorTable, b: FactorTable) -> FactorTable:
    """Pointwise product or quotient of two tables over the union of their scopes.

    Division follows the 0/0 = 0 convention; a nonzero numerator over a zero
    denominator raises ``ZeroDivisionError``.
    """
    scope = union_scope(a.scope, b.scope)
    x = a.expand(scope)
    y = b.expand(scope)
    if op == "multiply":
        return FactorTable(scope, np.broadcast_to(x * y, _full_shape(x, y, scope)).copy())
    if op != "divide":
        raise ValueError(f"unknown op {op!r}")
    x, y = np.broadcast_arrays(x, y)
    if np.any((y == 0) & (x != 0)):
        raise ZeroDivisionError("division by zero at a point with nonzero numerator")
    out = np.zeros(x.shape)
    np.divide(x, y, out=out, where=y != 0)
    return FactorTable(scope, out)


def _full_shape(x: np.ndarray, y: np.ndarray, scope) -> tuple[int, ...]:
    return tuple(max(p, q) for p, q in zip(x.shape, y.shape)) if scope else ()
