"""Detections, frames, assignments and the feasible assignment set.

An assignment between a source frame (mothers) and a target frame (daughters)
is a set of :class:`Edge` objects.  The fallback class (a daughter appearing
or a mother disappearing) is the sentinel :data:`BOTTOM`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

BOTTOM = -1
ORACLE_LIMIT = 6


class StructuralError(ValueError):
    """Indices, shapes or dimensions that do not fit together."""


class ConfigurationError(ValueError):
    """A required feature or parameter is missing or out of range."""


class ContractViolation(ValueError):
    """A precondition on an operation's input does not hold."""


class OracleLimitError(RuntimeError):
    """Exhaustive enumeration refused because the instance is too large."""


class DegenerateColumnError(ValueError):
    """A probability column has no mass left to normalize."""


@dataclass(frozen=True, eq=False)
class Detection:
    """One segmented cell in one frame.

    ``mask`` holds integer pixel coordinates in the same axis order as
    ``centroid``.
    """

    id: int
    centroid: np.ndarray
    area: int = 0
    mask: Optional[frozenset] = None
    activity: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=float).reshape(-1)
        c.setflags(write=False)
        object.__setattr__(self, "centroid", c)
        if c.shape[0] not in (2, 3):
            raise StructuralError(f"centroid must have 2 or 3 coordinates, got {c.shape[0]}")
        if self.area < 0:
            raise StructuralError("area must be non-negative")
        if self.activity is not None and not self.activity > 0:
            raise ConfigurationError(f"activity must be strictly positive, got {self.activity}")
        if self.mask is not None:
            mask = frozenset(tuple(int(v) for v in p) for p in self.mask)
            object.__setattr__(self, "mask", mask)
            if len(mask) != self.area:
                raise StructuralError(
                    f"detection {self.id}: area {self.area} != mask size {len(mask)}"
                )
            if mask:
                mc = np.mean(np.array(sorted(mask), dtype=float), axis=0)
                if mc.shape != c.shape or np.max(np.abs(mc - c)) > 0.5:
                    raise StructuralError(f"detection {self.id}: centroid does not match mask")

    @classmethod
    def from_mask(cls, id, pixels, activity=None):
        pixels = frozenset(tuple(int(v) for v in p) for p in pixels)
        if not pixels:
            raise StructuralError(f"detection {id}: empty mask")
        centroid = np.mean(np.array(sorted(pixels), dtype=float), axis=0)
        return cls(id=id, centroid=centroid, area=len(pixels), mask=pixels, activity=activity)

    def __repr__(self):
        return f"Detection(id={self.id}, centroid={self.centroid.tolist()}, area={self.area})"


@dataclass(frozen=True)
class Frame:
    time_index: int
    detections: tuple = ()

    def __post_init__(self):
        dets = tuple(self.detections)
        object.__setattr__(self, "detections", dets)
        if self.time_index < 0:
            raise StructuralError("time_index must be >= 0")
        ids = [d.id for d in dets]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"frame {self.time_index}: duplicate detection ids")

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i):
        return self.detections[i]

    def index_of(self, detection_id):
        for i, d in enumerate(self.detections):
            if d.id == detection_id:
                return i
        raise KeyError(detection_id)

    def centroids(self) -> np.ndarray:
        if not self.detections:
            return np.zeros((0, 2))
        return np.stack([d.centroid for d in self.detections])


class Edge(NamedTuple):
    mother: int
    daughter: int

    def token(self) -> str:
        m = "_" if self.mother == BOTTOM else str(self.mother)
        d = "_" if self.daughter == BOTTOM else str(self.daughter)
        return f"{m}->{d}"


@dataclass(frozen=True)
class Assignment:
    edges: frozenset
    source_size: int
    target_size: int

    def __post_init__(self):
        edges = frozenset(Edge(int(m), int(d)) for m, d in self.edges)
        object.__setattr__(self, "edges", edges)
        for e in edges:
            if e.mother == BOTTOM and e.daughter == BOTTOM:
                raise StructuralError("bottom->bottom edges are not allowed")
            if not (e.mother == BOTTOM or 0 <= e.mother < self.source_size):
                raise StructuralError(f"mother index {e.mother} out of range")
            if not (e.daughter == BOTTOM or 0 <= e.daughter < self.target_size):
                raise StructuralError(f"daughter index {e.daughter} out of range")

    @classmethod
    def from_links(cls, links, source_size, target_size):
        """Complete a set of (mother, daughter) links with appear/disappear edges."""
        links = {Edge(int(m), int(d)) for m, d in links}
        mothers = {e.mother for e in links}
        daughters = {e.daughter for e in links}
        edges = set(links)
        edges.update(Edge(BOTTOM, j) for j in range(target_size) if j not in daughters)
        edges.update(Edge(i, BOTTOM) for i in range(source_size) if i not in mothers)
        return cls(frozenset(edges), source_size, target_size)

    @classmethod
    def from_mother_vector(cls, mothers, source_size):
        """Build from ``mothers[j]`` = mother index of daughter j or BOTTOM."""
        links = [(m, j) for j, m in enumerate(mothers) if m != BOTTOM]
        return cls.from_links(links, source_size, len(mothers))

    @property
    def links(self):
        return frozenset(e for e in self.edges if e.mother != BOTTOM and e.daughter != BOTTOM)

    @property
    def n_appear(self):
        return sum(1 for e in self.edges if e.mother == BOTTOM)

    @property
    def n_disappear(self):
        return sum(1 for e in self.edges if e.daughter == BOTTOM)

    def mother_of(self, j):
        for e in self.edges:
            if e.daughter == j:
                return e.mother
        raise KeyError(j)

    def mother_vector(self) -> np.ndarray:
        out = np.full(self.target_size, BOTTOM, dtype=int)
        for e in self.edges:
            if e.daughter != BOTTOM:
                out[e.daughter] = e.mother
        return out

    def sort_key(self):
        return tuple(sorted(self.edges))

    def canonical(self) -> str:
        return " ".join(e.token() for e in sorted(self.edges))

    def __str__(self):
        return self.canonical()


def is_feasible(a: Assignment) -> bool:
    """Check every mother has at most two real daughters, or else a single
    disappearance edge, and every daughter has exactly one incoming edge."""
    real = [0] * a.source_size
    gone = [0] * a.source_size
    incoming = [0] * a.target_size
    for e in a.edges:
        if e.mother != BOTTOM and not 0 <= e.mother < a.source_size:
            raise StructuralError(f"mother index {e.mother} out of range")
        if e.daughter != BOTTOM and not 0 <= e.daughter < a.target_size:
            raise StructuralError(f"daughter index {e.daughter} out of range")
        if e.daughter != BOTTOM:
            incoming[e.daughter] += 1
        if e.mother != BOTTOM:
            if e.daughter == BOTTOM:
                gone[e.mother] += 1
            else:
                real[e.mother] += 1
    if any(c != 1 for c in incoming):
        return False
    for r, g in zip(real, gone):
        if r > 2 or g > 1:
            return False
        if (r > 0) == (g > 0):
            return False
    return True


def enumerate_feasible(m: int, n: int, limit: int = ORACLE_LIMIT) -> Iterator[Assignment]:
    """Yield every feasible assignment between ``m`` mothers and ``n`` daughters.

    Order is lexicographic on the sorted edge tuples.  Only meant for small
    instances; sizes above ``limit`` raise :class:`OracleLimitError`.
    """
    if m < 0 or n < 0:
        raise StructuralError("sizes must be non-negative")
    if m > limit or n > limit:
        raise OracleLimitError(f"{m}x{n} exceeds the enumeration limit {limit}")
    found = []
    load = [0] * m
    choice = [BOTTOM] * n

    def rec(j):
        if j == n:
            found.append(Assignment.from_mother_vector(choice, m))
            return
        for i in range(BOTTOM, m):
            if i != BOTTOM:
                if load[i] == 2:
                    continue
                load[i] += 1
            choice[j] = i
            rec(j + 1)
            if i != BOTTOM:
                load[i] -= 1

    rec(0)
    found.sort(key=Assignment.sort_key)
    yield from found


@dataclass(frozen=True)
class EdgeProbabilityMatrix:
    """Edge probabilities between m mothers and n daughters.

    ``values`` has shape (m + 1, n); the last row is the appearance class.
    ``disappear`` (length m) holds each mother's disappearance probability when
    the estimator provides it.
    """

    values: np.ndarray
    kind: str = "joint"
    disappear: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise StructuralError("values must be a (m + 1, n) matrix")
        if self.kind not in ("joint", "column"):
            raise StructuralError(f"unknown kind {self.kind!r}")
        if np.any(v < -1e-12) or np.any(v > 1 + 1e-9) or not np.all(np.isfinite(v)):
            raise StructuralError("probabilities must lie in [0, 1]")
        v = np.clip(v, 0.0, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.kind == "column" and v.shape[1]:
            sums = v.sum(axis=0)
            if np.max(np.abs(sums - 1)) > 1e-9:
                raise StructuralError("column-normalized matrix columns must sum to 1")
        if self.disappear is not None:
            d = np.clip(np.array(self.disappear, dtype=float).reshape(-1), 0.0, 1.0)
            if d.shape[0] != v.shape[0] - 1:
                raise StructuralError("disappear vector must have one entry per mother")
            d.setflags(write=False)
            object.__setattr__(self, "disappear", d)

    @property
    def n_mothers(self):
        return self.values.shape[0] - 1

    @property
    def n_daughters(self):
        return self.values.shape[1]

    @property
    def links(self) -> np.ndarray:
        return self.values[:-1]

    @property
    def appear(self) -> np.ndarray:
        return self.values[-1]

    def row_mass(self) -> np.ndarray:
        """Expected number of real daughters per mother plus its disappearance mass."""
        mass = self.links.sum(axis=1)
        if self.disappear is not None:
            mass = mass + self.disappear
        return mass

    def probability(self, mother, daughter) -> float:
        row = self.n_mothers if mother == BOTTOM else mother
        return float(self.values[row, daughter])


def count_feasible(m: int, n: int) -> int:
    """Closed recursion over mothers: each takes zero, one or two daughters."""
    from math import comb

    table = {}

    def f(a, b):
        if a == 0:
            return 1
        if (a, b) not in table:
            total = f(a - 1, b)
            if b >= 1:
                total += b * f(a - 1, b - 1)
            if b >= 2:
                total += comb(b, 2) * f(a - 1, b - 2)
            table[a, b] = total
        return table[a, b]

    return f(m, n)

