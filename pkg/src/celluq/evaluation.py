"""Calibration and sparsification analysis of per-daughter predictions."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dbmc import LabeledEdges
from .model import (
    BOTTOM,
    Assignment,
    ContractViolation,
    EdgeProbabilityMatrix,
    StructuralError,
)

EDGE_PROBABILITY = "edge_probability"
DAUGHTER_ENTROPY = "daughter_entropy"
DEFAULT_QUANTILES = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    empirical_accuracy: float


@dataclass(frozen=True)
class SparsificationCurve:
    """Accuracy of the retained predictions per removal quantile.

    ``quantiles[q]`` is the fraction of predictions targeted for removal;
    ``retained_accuracy`` is NaN where nothing is retained.
    """

    criterion: str
    quantiles: np.ndarray
    thresholds: np.ndarray
    retained_fraction: np.ndarray
    retained_accuracy: np.ndarray
    baseline_accuracy: float


def evaluate_predictions(map_assignment: Assignment, probs: EdgeProbabilityMatrix,
                         truth: Assignment, key=None) -> LabeledEdges:
    """Score the MAP mother of every daughter against the ground truth.

    The confidence of a prediction is the conditional probability of the
    predicted mother (or of the fallback class for a predicted appearance).
    """
    m, n = probs.n_mothers, probs.n_daughters
    for a in (map_assignment, truth):
        if a.source_size != m or a.target_size != n:
            raise StructuralError("assignment does not match the probability matrix")
    if probs.kind != "column":
        raise ContractViolation("evaluate_predictions expects column-normalized probabilities")

    def row(mothers):
        return np.where(mothers == BOTTOM, m, mothers)

    keys = [(key, j) for j in range(n)] if key is not None else []
    return LabeledEdges(probs.values.T.copy(), row(truth.mother_vector()),
                        row(map_assignment.mother_vector()), np.full(n, m + 1), keys)


def expected_calibration_error(data: LabeledEdges, bins: int = 10):
    """Equal-width binned ECE; returns ``(ece, bins)``."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if len(data) == 0:
        raise ContractViolation("no predictions to evaluate")
    conf = data.confidences()
    hit = data.correct().astype(float)
    idx = np.minimum((conf * bins).astype(int), bins - 1)
    n = len(conf)
    ece = 0.0
    out = []
    for b in range(bins):
        sel = idx == b
        count = int(sel.sum())
        if count:
            mc, acc = float(conf[sel].mean()), float(hit[sel].mean())
            ece += count / n * abs(acc - mc)
        else:
            mc = acc = float("nan")
        out.append(ReliabilityBin(b / bins, (b + 1) / bins, count, mc, acc))
    return float(ece), out


def sparsification(data: LabeledEdges, entropies=None, criterion=DAUGHTER_ENTROPY,
                   quantiles=DEFAULT_QUANTILES) -> SparsificationCurve:
    """Drop the most uncertain predictions at each quantile and re-measure accuracy.

    With the entropy criterion predictions whose entropy exceeds the
    ``1 - q`` quantile are dropped; with the edge-probability criterion those
    whose confidence falls below the ``q`` quantile.
    """
    if len(data) == 0:
        raise ContractViolation("no predictions to sparsify")
    q = np.asarray(quantiles, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("quantiles must lie in [0, 1]")
    hit = data.correct()
    if criterion == DAUGHTER_ENTROPY:
        u = data.entropies() if entropies is None else np.asarray(entropies, dtype=float)
        if u.shape != hit.shape:
            raise StructuralError("entropies not aligned with predictions")
        thresholds = np.quantile(u, 1.0 - q)
        keep = u[None, :] <= thresholds[:, None]
    elif criterion == EDGE_PROBABILITY:
        c = data.confidences()
        thresholds = np.quantile(c, q)
        keep = c[None, :] >= thresholds[:, None]
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    counts = keep.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(counts > 0, (keep & hit[None, :]).sum(axis=1) / np.maximum(counts, 1),
                       np.nan)
    return SparsificationCurve(criterion, q, thresholds, counts / len(hit), acc,
                               float(hit.mean()))


def accuracy_improvement(curve: SparsificationCurve) -> float:
    """Mean gain of retained accuracy over the baseline across thresholds."""
    diff = curve.retained_accuracy - curve.baseline_accuracy
    if np.all(np.isnan(diff)):
        raise ContractViolation("sparsification curve retains nothing at any threshold")
    return float(np.nanmean(diff))


def permutation_null(data: LabeledEdges, criterion_values, quantiles=DEFAULT_QUANTILES,
                     n_perm: int = 200, seed: int = 0):
    """Mean and standard deviation of the improvement when the uncertainty
    values are shuffled across predictions."""
    rng = np.random.default_rng(seed)
    u = np.asarray(criterion_values, dtype=float)
    gains = [
        accuracy_improvement(sparsification(data, rng.permutation(u), DAUGHTER_ENTROPY,
                                            quantiles))
        for _ in range(n_perm)
    ]
    return float(np.mean(gains)), float(np.std(gains, ddof=1))


def _fmt(x):
    if isinstance(x, float):
        return "" if np.isnan(x) else repr(round(x, 12))
    return str(x)


def write_reliability_csv(path, bins):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lower", "upper", "count", "mean_confidence", "empirical_accuracy"])
        for b in bins:
            w.writerow([_fmt(float(b.lower)), _fmt(float(b.upper)), b.count,
                        _fmt(b.mean_confidence), _fmt(b.empirical_accuracy)])


def write_sparsification_csv(path, curves):
    """Write one or more curves; rows carry their criterion."""
    if isinstance(curves, SparsificationCurve):
        curves = [curves]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["criterion", "quantile", "threshold", "retained_fraction",
                    "retained_accuracy", "baseline_accuracy", "improvement"])
        for curve in curves:
            for q, t, f, a in zip(curve.quantiles, curve.thresholds, curve.retained_fraction,
                                  curve.retained_accuracy):
                w.writerow([curve.criterion, _fmt(float(q)), _fmt(float(t)), _fmt(float(f)),
                            _fmt(float(a)), _fmt(curve.baseline_accuracy),
                            _fmt(float(a - curve.baseline_accuracy))])
