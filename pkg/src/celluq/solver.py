"""MAP assignment and k-best enumeration for division-aware frame linking.

Each mother occupies two rows of a square linear assignment problem so it can
take up to two daughters.  Every row/column has a fallback slot::

                 daughters (n)          idle slots (2m)
    copy 1 (m)   link costs             diag(w_d)
    copy 2 (m)   link costs             diag(0)
    appear (n)   diag(w_a)              0

Charging ``w_d`` only on the first copy's idle slot makes a mother with both
copies idle pay exactly one disappearance.  A matching that idles copy 1 while
copy 2 links is never cheaper than its mirror image, so the LAP optimum equals
the optimum over feasible assignments as long as ``w_d >= 0``.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .costs import CostModel, assignment_score
from .model import BOTTOM, Assignment, Edge, Frame, StructuralError

MOTHER, APPEAR, DAUGHTER, IDLE = "mother", "appear", "daughter", "idle"


@dataclass(frozen=True)
class LapEncoding:
    """Square LAP realizing the feasible assignment set.

    ``row_meaning[r]`` is ``("mother", i, copy)`` or ``("appear", j)``;
    ``col_meaning[c]`` is ``("daughter", j)`` or ``("idle", i, copy)``.
    Forbidden cells hold ``inf``.
    """

    cost_matrix: np.ndarray
    row_meaning: tuple
    col_meaning: tuple
    link_costs: np.ndarray
    appear_cost: float
    disappear_cost: float

    @property
    def n_mothers(self):
        return self.link_costs.shape[0]

    @property
    def n_daughters(self):
        return self.link_costs.shape[1]

    def decode(self, rows, cols) -> Assignment:
        """Turn a perfect matching into an assignment."""
        m, n = self.n_mothers, self.n_daughters
        if len(rows) != 2 * m + n:
            raise StructuralError("matching is not perfect")
        mothers = [BOTTOM] * n
        for r, c in zip(rows, cols):
            if not np.isfinite(self.cost_matrix[r, c]):
                raise StructuralError(f"matching uses forbidden cell ({r}, {c})")
            if r < 2 * m and c < n:
                mothers[c] = r % m
        return Assignment.from_mother_vector(mothers, m)

    def score(self, a: Assignment) -> float:
        return assignment_score(self.link_costs, a, self.appear_cost, self.disappear_cost)


@dataclass(frozen=True)
class RankedSolution:
    assignment: Assignment
    log_score: float
    rank: int = 1


def encode_costs(link_costs, appear_cost, disappear_cost) -> LapEncoding:
    """Build the augmented LAP from a precomputed (m, n) link-cost matrix."""
    w = np.asarray(link_costs, dtype=float)
    if w.ndim != 2:
        raise StructuralError("link costs must be a matrix")
    m, n = w.shape
    size = 2 * m + n
    c = np.full((size, size), np.inf)
    c[:m, :n] = w
    c[m:2 * m, :n] = w
    idx = np.arange(m)
    c[idx, n + idx] = disappear_cost
    c[m + idx, n + m + idx] = 0.0
    jdx = np.arange(n)
    c[2 * m + jdx, jdx] = appear_cost
    c[2 * m:, n:] = 0.0
    rows = tuple((MOTHER, i, 0) for i in range(m)) + tuple((MOTHER, i, 1) for i in range(m)) \
        + tuple((APPEAR, j) for j in range(n))
    cols = tuple((DAUGHTER, j) for j in range(n)) + tuple((IDLE, i, 0) for i in range(m)) \
        + tuple((IDLE, i, 1) for i in range(m))
    w = w.copy()
    w.setflags(write=False)
    c.setflags(write=False)
    return LapEncoding(c, rows, cols, w, float(appear_cost), float(disappear_cost))


def encode_lap(src: Frame, tgt: Frame, cm: CostModel) -> LapEncoding:
    return encode_costs(cm.matrix(src, tgt), cm.appear_cost, cm.disappear_cost)


def _constrained(enc: LapEncoding, required, forbidden) -> np.ndarray:
    m, n = enc.n_mothers, enc.n_daughters
    c = enc.cost_matrix.copy()
    for i, j in forbidden:
        if i == BOTTOM:
            c[2 * m + j, j] = np.inf
        elif j == BOTTOM:
            c[i, n + i] = np.inf
        else:
            c[i, j] = c[m + i, j] = np.inf
    for i, j in required:
        if i == BOTTOM:
            c[:2 * m, j] = np.inf
        elif j == BOTTOM:
            c[i, :n] = c[m + i, :n] = np.inf
        else:
            keep = (c[i, j], c[m + i, j])
            c[:, j] = np.inf
            c[i, j], c[m + i, j] = keep
    return c


def _solve(enc: LapEncoding, required=(), forbidden=()):
    c = _constrained(enc, required, forbidden) if (required or forbidden) else enc.cost_matrix
    if c.size == 0:
        a = Assignment(frozenset(), enc.n_mothers, enc.n_daughters)
        return a, 0.0
    try:
        rows, cols = linear_sum_assignment(c)
    except ValueError:
        return None
    if not np.all(np.isfinite(c[rows, cols])):
        return None
    a = enc.decode(rows, cols)
    return a, enc.score(a)


def solve_encoded(enc: LapEncoding) -> RankedSolution:
    a, score = _solve(enc)
    return RankedSolution(a, score, 1)


def solve_map(src: Frame, tgt: Frame, cm: CostModel) -> RankedSolution:
    """Most likely feasible assignment; ``log_score`` is its joint log-likelihood."""
    return solve_encoded(encode_lap(src, tgt, cm))


def top_k_encoded(enc: LapEncoding, k: int) -> list:
    """The ``k`` best assignments by Murty partitioning over assignment edges.

    Partitioning works on decoded edges so copy-symmetric matchings are never
    reported twice.  Equal scores are ordered by the sorted edge tuples; to
    make that order exact all solutions tied with the k-th score are drawn
    before truncating.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    counter = itertools.count()
    first = _solve(enc)
    heap = [(-first[1], first[0].sort_key(), next(counter), first[0], frozenset(), frozenset())]
    found = []
    while heap:
        if len(found) >= k and -heap[0][0] < found[-1][1]:
            break
        neg, _, _, a, required, forbidden = heapq.heappop(heap)
        found.append((a, -neg))
        fixed = set(required)
        for e in sorted(a.edges):
            if e in required:
                continue
            child = _solve(enc, fixed, forbidden | {e})
            if child is not None:
                ca, cs = child
                heapq.heappush(heap, (-cs, ca.sort_key(), next(counter), ca,
                                      frozenset(fixed), forbidden | {e}))
            fixed.add(e)
    found.sort(key=lambda t: (-t[1], t[0].sort_key()))
    return [RankedSolution(a, s, r) for r, (a, s) in enumerate(found[:k], start=1)]


def top_k(src: Frame, tgt: Frame, cm: CostModel, k: int) -> list:
    """The ``min(k, |feasible set|)`` most likely assignments, best first."""
    return top_k_encoded(encode_lap(src, tgt, cm), k)


def count_matchings(enc: LapEncoding):
    """Brute-force perfect matchings with finite cost, grouped by decoded assignment.

    Exponential; only for checking the encoding on tiny instances.
    """
    size = enc.cost_matrix.shape[0]
    if size > 9:
        raise StructuralError("count_matchings is limited to 9x9 encodings")
    groups = {}
    for perm in itertools.permutations(range(size)):
        vals = enc.cost_matrix[np.arange(size), perm]
        if not np.all(np.isfinite(vals)):
            continue
        a = enc.decode(range(size), perm)
        groups.setdefault(a, []).append(float(vals.sum()))
    return groups


__all__ = [
    "LapEncoding",
    "RankedSolution",
    "encode_costs",
    "encode_lap",
    "solve_map",
    "solve_encoded",
    "top_k",
    "top_k_encoded",
    "count_matchings",
    "Edge",
]
