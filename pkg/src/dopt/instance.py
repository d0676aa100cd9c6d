"""Response-surface instances and the implicit design matrix.

A row of the design matrix is identified by a factor point
``alpha = (a_1, ..., a_F)`` with each level in ``{0, ..., L-1}``.  Rows are
never stored for the whole instance; they are expanded on demand.

Row layout::

    linear     (1; a_1..a_F)
    quadratic  (1; a_1..a_F; a_1^2..a_F^2; a_i*a_j for i<j, lexicographic)

Canonical row index is the little-endian base-L value of the point.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

INDEX_LIMIT = 2**63 - 1
DEFAULT_DENSE_CAP = 10**6

FactorPoint = Tuple[int, ...]


class InstanceError(ValueError):
    """Invalid instance parameters or points."""


class AstronomicalIndexError(InstanceError):
    """The row index does not fit in a signed 64-bit integer."""


class CapacityError(RuntimeError):
    """A dense or enumerative operation exceeds its configured cap."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    factors: int
    levels: int

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic"):
            raise InstanceError(f"unknown model kind {self.kind!r}")
        if not isinstance(self.factors, (int, np.integer)) or self.factors < 1:
            raise InstanceError(f"factors must be an integer >= 1, got {self.factors!r}")
        if not isinstance(self.levels, (int, np.integer)) or self.levels < 2:
            raise InstanceError(f"levels must be an integer >= 2, got {self.levels!r}")
        object.__setattr__(self, "factors", int(self.factors))
        object.__setattr__(self, "levels", int(self.levels))

    @property
    def row_dim(self) -> int:
        F = self.factors
        if self.kind == "linear":
            return 1 + F
        return 1 + 2 * F + F * (F - 1) // 2

    m = row_dim

    @property
    def row_count_exact(self) -> int:
        return self.levels**self.factors

    @property
    def astronomical(self) -> bool:
        return self.row_count_exact > INDEX_LIMIT

    @property
    def row_count(self):
        """``L**F`` or ``None`` when it does not fit the index type."""
        if self.astronomical:
            return None
        return self.row_count_exact

    n = row_count

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "factors": self.factors,
            "levels": self.levels,
            "m": self.m,
            "n": self.row_count_exact,
        }

    def __str__(self):
        return f"kind={self.kind} factors={self.factors} levels={self.levels}"


def make_model_spec(kind: str, factors: int, levels: int) -> ModelSpec:
    spec = ModelSpec(kind, factors, levels)
    if kind == "linear" and levels != 2:
        warnings.warn(
            f"linear model with L={levels}: only the extreme levels 0 and {levels - 1} "
            "can appear in an optimal design; L=2 is the usual choice",
            stacklevel=2,
        )
    return spec


def parse_spec(text: str) -> ModelSpec:
    """Parse ``kind=linear factors=3 levels=2``."""
    fields = {}
    for token in text.split():
        if "=" not in token:
            raise InstanceError(f"malformed token {token!r}")
        key, value = token.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        return make_model_spec(fields["kind"], int(fields["factors"]), int(fields["levels"]))
    except KeyError as exc:
        raise InstanceError(f"missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceError(str(exc)) from None


def check_point(spec: ModelSpec, point: Sequence[int]) -> FactorPoint:
    pt = tuple(int(a) for a in point)
    if len(pt) != spec.factors:
        raise InstanceError(f"point has {len(pt)} levels, expected {spec.factors}")
    for a in pt:
        if a < 0 or a >= spec.levels:
            raise InstanceError(f"level {a} outside 0..{spec.levels - 1}")
    return pt


def encode_point(spec: ModelSpec, point: Sequence[int]) -> int:
    pt = check_point(spec, point)
    if spec.astronomical:
        raise AstronomicalIndexError(f"row indices of {spec} exceed the 64-bit range")
    idx = 0
    for a in reversed(pt):
        idx = idx * spec.levels + a
    return idx


def decode_point(spec: ModelSpec, index: int) -> FactorPoint:
    index = int(index)
    if spec.astronomical:
        raise AstronomicalIndexError(f"row indices of {spec} exceed the 64-bit range")
    if index < 0 or index >= spec.row_count_exact:
        raise InstanceError(f"row index {index} outside 0..{spec.row_count_exact - 1}")
    L = spec.levels
    out = []
    for _ in range(spec.factors):
        index, a = divmod(index, L)
        out.append(a)
    return tuple(out)


def point_key(spec: ModelSpec, point: Sequence[int]) -> Tuple[int, ...]:
    """Sort key equivalent to the encoded index, valid even for astronomical specs."""
    return tuple(reversed(point))


def cross_pairs(F: int):
    return [(i, j) for i in range(F) for j in range(i + 1, F)]


def cross_index_table(F: int) -> np.ndarray:
    """``table[i, j]`` = position of ``a_i * a_j`` in a quadratic row, -1 on the diagonal."""
    table = -np.ones((F, F), dtype=np.int64)
    pos = 1 + 2 * F
    for i, j in cross_pairs(F):
        table[i, j] = table[j, i] = pos
        pos += 1
    return table


def expand_row(spec: ModelSpec, point: Sequence[int]) -> np.ndarray:
    pt = check_point(spec, point)
    return expand_rows(spec, np.asarray([pt], dtype=np.int64))[0]


def expand_rows(spec: ModelSpec, points) -> np.ndarray:
    """Expand a ``(k, F)`` integer array of factor points into ``(k, m)`` rows."""
    P = np.asarray(points, dtype=np.float64)
    if P.ndim != 2 or P.shape[1] != spec.factors:
        raise InstanceError(f"expected points of shape (k, {spec.factors})")
    k, F = P.shape
    out = np.empty((k, spec.m), dtype=np.float64)
    out[:, 0] = 1.0
    out[:, 1 : 1 + F] = P
    if spec.kind == "quadratic":
        out[:, 1 + F : 1 + 2 * F] = P * P
        if F > 1:
            ii, jj = np.triu_indices(F, k=1)
            out[:, 1 + 2 * F :] = P[:, ii] * P[:, jj]
    return out


def decode_indices(spec: ModelSpec, indices) -> np.ndarray:
    """Vectorised :func:`decode_point`; returns a ``(k, F)`` int64 array."""
    idx = np.asarray(indices, dtype=np.int64).copy()
    out = np.empty((idx.size, spec.factors), dtype=np.int64)
    for f in range(spec.factors):
        idx, out[:, f] = np.divmod(idx, spec.levels)
    return out


def materialize_dense(spec: ModelSpec, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
    n = spec.row_count_exact
    if n > cap:
        raise CapacityError(f"instance too large to materialize: n={n} rows > cap {cap}")
    return expand_rows(spec, decode_indices(spec, np.arange(n, dtype=np.int64)))


@dataclass
class Design:
    """Sparse integer design: factor point -> multiplicity, summing to ``budget``."""

    spec: ModelSpec
    budget: int
    support: Dict[FactorPoint, int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for pt, k in self.support.items():
            pt = check_point(self.spec, pt)
            k = int(k)
            if k < 0:
                raise InstanceError(f"negative multiplicity {k} at {pt}")
            if k:
                clean[pt] = clean.get(pt, 0) + k
        self.support = clean
        total = sum(clean.values())
        if total != self.budget:
            raise InstanceError(f"multiplicities sum to {total}, budget is {self.budget}")

    def points(self):
        """Support points in canonical (encoded index) order."""
        return sorted(self.support, key=lambda p: point_key(self.spec, p))

    def rows_and_mults(self):
        pts = self.points()
        rows = expand_rows(self.spec, np.asarray(pts, dtype=np.int64).reshape(len(pts), self.spec.factors))
        mults = np.asarray([self.support[p] for p in pts], dtype=np.float64)
        return pts, rows, mults

    def moved(self, leave: FactorPoint, enter: FactorPoint) -> "Design":
        sup = dict(self.support)
        if sup.get(leave, 0) < 1:
            raise InstanceError(f"{leave} not in the support")
        sup[leave] -= 1
        if sup[leave] == 0:
            del sup[leave]
        sup[enter] = sup.get(enter, 0) + 1
        return Design(self.spec, self.budget, sup)

    def __eq__(self, other):
        if not isinstance(other, Design):
            return NotImplemented
        return self.spec == other.spec and self.budget == other.budget and self.support == other.support


def design_from_counts(spec: ModelSpec, counts: Iterable[Tuple[Sequence[int], int]], budget: int) -> Design:
    sup: Dict[FactorPoint, int] = {}
    for pt, k in counts:
        pt = tuple(int(a) for a in pt)
        sup[pt] = sup.get(pt, 0) + int(k)
    return Design(spec, budget, sup)
