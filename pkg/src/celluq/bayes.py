"""Edge probabilities from the posterior over assignments.

Three estimators share one output type: exhaustive summation over the
feasible set, self-normalized weighting of a set of (typically top-K)
solutions, and plain frequency counting of sampled or perturbed solutions.
Under a uniform prior the posterior weight of an assignment is proportional
to ``exp(joint_log_likelihood)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .costs import CostModel, assignment_score, joint_log_likelihood
from .model import (
    BOTTOM,
    ORACLE_LIMIT,
    Assignment,
    ContractViolation,
    EdgeProbabilityMatrix,
    Frame,
    OracleLimitError,
    StructuralError,
    enumerate_feasible,
)


@dataclass(frozen=True)
class PosteriorSample:
    assignment: Assignment
    weight: float


def _accumulate(assignments, weights, m, n, scale=1.0) -> EdgeProbabilityMatrix:
    values = np.zeros((m + 1, n))
    disappear = np.zeros(m)
    for a, p in zip(assignments, weights):
        for e in a.edges:
            if e.daughter == BOTTOM:
                disappear[e.mother] += p
            elif e.mother == BOTTOM:
                values[m, e.daughter] += p
            else:
                values[e.mother, e.daughter] += p
    return EdgeProbabilityMatrix(values / scale, "joint", disappear / scale)


def normalized_weights(log_scores) -> np.ndarray:
    s = np.asarray(log_scores, dtype=float)
    return np.exp(s - logsumexp(s))


def posterior_samples(src: Frame, tgt: Frame, cm: CostModel,
                      limit: int = ORACLE_LIMIT) -> list:
    """Every feasible assignment with its exact posterior probability."""
    if len(src) > limit or len(tgt) > limit:
        raise OracleLimitError(f"{len(src)}x{len(tgt)} exceeds the oracle limit {limit}")
    costs = cm.matrix(src, tgt)
    space = list(enumerate_feasible(len(src), len(tgt), limit))
    scores = [assignment_score(costs, a, cm.appear_cost, cm.disappear_cost) for a in space]
    return [PosteriorSample(a, float(p)) for a, p in zip(space, normalized_weights(scores))]


def exact_edge_probabilities(src: Frame, tgt: Frame, cm: CostModel,
                             limit: int = ORACLE_LIMIT) -> EdgeProbabilityMatrix:
    samples = posterior_samples(src, tgt, cm, limit)
    return _accumulate([s.assignment for s in samples], [s.weight for s in samples],
                       len(src), len(tgt))


def sni_edge_probabilities(solutions, src: Frame, tgt: Frame, cm: CostModel
                           ) -> EdgeProbabilityMatrix:
    """Self-normalized importance estimate over the given solutions.

    Weights are recomputed from ``cm`` rather than trusted from the inputs.
    """
    if not solutions:
        raise ContractViolation("need at least one solution")
    assignments = [getattr(s, "assignment", s) for s in solutions]
    if len(set(assignments)) != len(assignments):
        raise ContractViolation("solutions must be distinct")
    scores = [joint_log_likelihood(src, tgt, a, cm) for a in assignments]
    return _accumulate(assignments, normalized_weights(scores), len(src), len(tgt))


def mc_edge_probabilities(samples) -> EdgeProbabilityMatrix:
    """Unweighted edge frequencies over a list of assignments."""
    samples = [getattr(s, "assignment", s) for s in samples]
    if not samples:
        raise ContractViolation("need at least one sample")
    m, n = samples[0].source_size, samples[0].target_size
    if any(a.source_size != m or a.target_size != n for a in samples):
        raise StructuralError("samples cover different frame sizes")
    k = len(samples)
    return _accumulate(samples, [1] * k, m, n, scale=k)
