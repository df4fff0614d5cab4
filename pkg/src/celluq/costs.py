"""Link costs and the joint log-likelihood of an assignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import (
    BOTTOM,
    Assignment,
    ConfigurationError,
    ContractViolation,
    Detection,
    Frame,
    StructuralError,
    is_feasible,
)

DEFAULT_APPEAR_COST = 10.0
DEFAULT_DISAPPEAR_COST = 10.0


@dataclass(frozen=True)
class BrownianParams:
    """Precision of the Brownian displacement model, in 1/px^2."""

    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be > 0, got {self.lam}")


def _sq_dist(a: Detection, b: Detection) -> float:
    if a.centroid.shape != b.centroid.shape:
        raise StructuralError(
            f"centroid dimension mismatch: {a.centroid.shape[0]} vs {b.centroid.shape[0]}"
        )
    d = a.centroid - b.centroid
    return float(d @ d)


def l2_cost(a: Detection, b: Detection, p: BrownianParams) -> float:
    return 0.5 * p.lam * _sq_dist(a, b)


def activity_cost(a: Detection, b: Detection, p: BrownianParams) -> float:
    """Brownian cost with the mother's variance scaled by its activity."""
    if a.activity is None or not a.activity > 0:
        raise ConfigurationError(f"detection {a.id} has no positive activity value")
    return p.lam / (2.0 * a.activity) * _sq_dist(a, b)


def overlap_cost(a: Detection, b: Detection) -> float:
    if a.mask is None or b.mask is None:
        raise ConfigurationError("overlap cost needs masks on both detections")
    return -float(len(a.mask & b.mask))


@dataclass(frozen=True)
class CostModel:
    """A link cost plus appear/disappear costs (negative log-probabilities).

    ``link_cost`` may return ``math.inf`` for a forbidden link.  ``batch``, if
    given, computes the whole (m, n) matrix at once and must agree with
    ``link_cost``.
    """

    link_cost: Callable[[Detection, Detection], float]
    appear_cost: float = DEFAULT_APPEAR_COST
    disappear_cost: float = DEFAULT_DISAPPEAR_COST
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)
    batch: Optional[Callable[[Frame, Frame], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.appear_cost >= 0 or not self.disappear_cost >= 0:
            raise ConfigurationError("appear and disappear costs must be >= 0")

    def matrix(self, src: Frame, tgt: Frame) -> np.ndarray:
        """Link costs between every mother (rows) and daughter (columns)."""
        if self.batch is not None and len(src) and len(tgt):
            out = np.asarray(self.batch(src, tgt), dtype=float)
        else:
            out = np.empty((len(src), len(tgt)))
            for i, a in enumerate(src):
                for j, b in enumerate(tgt):
                    out[i, j] = self.link_cost(a, b)
        if np.any(np.isnan(out)) or np.any(out == -np.inf):
            raise ContractViolation(f"cost model {self.name!r} produced NaN or -inf")
        return out

    def with_costs(self, appear_cost=None, disappear_cost=None) -> "CostModel":
        return CostModel(
            self.link_cost,
            self.appear_cost if appear_cost is None else appear_cost,
            self.disappear_cost if disappear_cost is None else disappear_cost,
            self.name,
            self.params,
            self.batch,
        )


def make_cost_model(name, lam=1.0, appear_cost=DEFAULT_APPEAR_COST,
                    disappear_cost=DEFAULT_DISAPPEAR_COST) -> CostModel:
    """Build a cost model by its config name: ``l2``, ``activity`` or ``overlap``."""
    params = {"lambda": lam, "appear_cost": appear_cost, "disappear_cost": disappear_cost}
    batch = None
    if name == "l2":
        p = BrownianParams(lam)
        fn = lambda a, b: l2_cost(a, b, p)  # noqa: E731
        batch = lambda s, t: 0.5 * p.lam * _pairwise_sq(s, t)  # noqa: E731
    elif name == "activity":
        p = BrownianParams(lam)
        fn = lambda a, b: activity_cost(a, b, p)  # noqa: E731
        batch = lambda s, t: p.lam / (2.0 * _activities(s))[:, None] * _pairwise_sq(s, t)  # noqa: E731
    elif name == "overlap":
        fn = overlap_cost
        params = {"appear_cost": appear_cost, "disappear_cost": disappear_cost}
    else:
        raise ConfigurationError(f"unknown cost model {name!r}; expected l2, activity or overlap")
    return CostModel(fn, appear_cost, disappear_cost, name, params, batch)


def _pairwise_sq(src: Frame, tgt: Frame) -> np.ndarray:
    a, b = src.centroids(), tgt.centroids()
    if a.shape[1] != b.shape[1]:
        raise StructuralError(f"centroid dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _activities(src: Frame) -> np.ndarray:
    act = np.array([np.nan if d.activity is None else d.activity for d in src])
    if not np.all(act > 0):
        raise ConfigurationError("activity cost needs a positive activity on every mother")
    return act


def assignment_score(costs: np.ndarray, a: Assignment, appear_cost: float,
                     disappear_cost: float) -> float:
    """Joint log-likelihood of ``a`` given a precomputed link-cost matrix."""
    terms = []
    for e in sorted(a.edges):
        if e.mother == BOTTOM:
            terms.append(-appear_cost)
        elif e.daughter == BOTTOM:
            terms.append(-disappear_cost)
        else:
            terms.append(-costs[e.mother, e.daughter])
    return math.fsum(terms)


def joint_log_likelihood(src: Frame, tgt: Frame, a: Assignment, cm: CostModel) -> float:
    """Log-likelihood of the target detections given the source and ``a``,
    up to the dropped normalization constants."""
    if a.source_size != len(src) or a.target_size != len(tgt):
        raise StructuralError("assignment size does not match the frames")
    if not is_feasible(a):
        raise ContractViolation(f"infeasible assignment: {a.canonical()}")
    costs = np.zeros((len(src), len(tgt)))
    for e in a.links:
        costs[e.mother, e.daughter] = cm.link_cost(src[e.mother], tgt[e.daughter])
    return assignment_score(costs, a, cm.appear_cost, cm.disappear_cost)
