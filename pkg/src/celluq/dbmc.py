"""Daughter-based mother classification.

Every daughter is treated as a sample to classify: its classes are the
mothers of the previous frame plus the fallback class (no mother).  Columns
of an :class:`EdgeProbabilityMatrix` are the per-daughter class
distributions, with the fallback class in the last row.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .model import (
    ConfigurationError,
    ContractViolation,
    DegenerateColumnError,
    EdgeProbabilityMatrix,
    StructuralError,
)

logger = logging.getLogger(__name__)

LOG_TAU_BOUNDS = (-10.0, 10.0)


class UnfittableError(ValueError):
    """No labeled column gives its true class a nonzero probability."""


@dataclass(frozen=True)
class Temperature:
    tau: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(math.log(self.tau))):
            raise ConfigurationError(f"temperature must be > 0 and finite, got {self.tau}")

    @property
    def log_tau(self):
        return math.log(self.tau)


@dataclass
class LabeledEdges:
    """Per-daughter class distributions with true and predicted class.

    ``columns`` is zero-padded to a common width; row ``r`` uses
    ``columns[r, :width[r]]`` with the fallback class at ``width[r] - 1``.
    ``truth`` and ``predicted`` index into that row.
    """

    columns: np.ndarray
    truth: np.ndarray
    predicted: np.ndarray
    width: np.ndarray
    keys: list = field(default_factory=list)

    def __post_init__(self):
        self.columns = np.atleast_2d(np.asarray(self.columns, dtype=float))
        self.truth = np.asarray(self.truth, dtype=int).reshape(-1)
        self.predicted = np.asarray(self.predicted, dtype=int).reshape(-1)
        self.width = np.asarray(self.width, dtype=int).reshape(-1)
        n = len(self.truth)
        if self.columns.shape[0] != n and not (n == 0 and self.columns.size == 0):
            raise StructuralError("columns and labels differ in length")
        if len(self.predicted) != n or len(self.width) != n:
            raise StructuralError("columns and labels differ in length")
        if n:
            if np.any(self.truth >= self.width) or np.any(self.predicted >= self.width):
                raise StructuralError("label outside its column")
            sums = self.columns.sum(axis=1)
            if np.max(np.abs(sums - 1)) > 1e-9:
                raise StructuralError("every labeled column must sum to 1")
        if not self.keys:
            self.keys = list(range(n))

    @classmethod
    def from_columns(cls, columns, truth, predicted=None, keys=None):
        """Build from a list of variable-length columns (fallback class last).

        Negative labels denote the fallback class.  Without ``predicted`` the
        most probable class is the prediction.
        """
        columns = [np.asarray(c, dtype=float) for c in columns]
        n = len(columns)
        width = np.array([len(c) for c in columns], dtype=int)
        truth = np.asarray(truth, dtype=int).reshape(-1)
        truth = np.where(truth < 0, width - 1, truth)
        if predicted is not None:
            predicted = np.asarray(predicted, dtype=int).reshape(-1)
            predicted = np.where(predicted < 0, width - 1, predicted)
        out = np.zeros((n, int(width.max()) if n else 0))
        for r, c in enumerate(columns):
            out[r, :len(c)] = c
        if predicted is None:
            predicted = [int(np.argmax(c)) for c in columns]
        return cls(out, truth, predicted, width, list(keys) if keys is not None else [])

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls(np.zeros((0, 0)), [], [], [])
        w = max(p.columns.shape[1] for p in parts)
        cols = np.vstack([np.pad(p.columns, ((0, 0), (0, w - p.columns.shape[1]))) for p in parts])
        return cls(
            cols,
            np.concatenate([p.truth for p in parts]),
            np.concatenate([p.predicted for p in parts]),
            np.concatenate([p.width for p in parts]),
            [k for p in parts for k in p.keys],
        )

    def __len__(self):
        return len(self.truth)

    def confidences(self) -> np.ndarray:
        return self.columns[np.arange(len(self)), self.predicted]

    def correct(self) -> np.ndarray:
        return self.predicted == self.truth

    def accuracy(self) -> float:
        return float(np.mean(self.correct()))

    def entropies(self) -> np.ndarray:
        return _entropy(self.columns, axis=1)

    def subset(self, index) -> "LabeledEdges":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return LabeledEdges(self.columns[index], self.truth[index], self.predicted[index],
                            self.width[index], [self.keys[i] for i in index])

    def tempered(self, t: Temperature) -> "LabeledEdges":
        return LabeledEdges(_temper_rows(self.columns, t.tau), self.truth, self.predicted,
                            self.width, list(self.keys))


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def _entropy(p, axis):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=axis)


def _temper_rows(columns, tau):
    logp = tau * _log(columns)
    norm = logsumexp(logp, axis=1, keepdims=True)
    if np.any(~np.isfinite(norm)):
        raise DegenerateColumnError("a column has no mass to temper")
    return np.exp(logp - norm)


def softmax_columns(costs, parental: bool = False) -> EdgeProbabilityMatrix:
    """Per-daughter softmax over negative link costs.

    With ``parental`` the denominator gains a constant 1, which becomes the
    probability mass of the fallback class.  ``inf`` costs get zero mass.
    """
    w = np.asarray(costs, dtype=float)
    if w.ndim != 2:
        raise StructuralError("costs must be a (mothers, daughters) matrix")
    if np.any(np.isnan(w)) or np.any(w == -np.inf):
        raise ContractViolation("costs must be finite or +inf")
    m, n = w.shape
    neg = -w
    lse = logsumexp(neg, axis=0) if m else np.full(n, -np.inf)
    values = np.zeros((m + 1, n))
    if parental:
        den = np.logaddexp(0.0, lse)
        values[:m] = np.exp(neg - den)
        values[m] = np.exp(-den)
    else:
        if np.any(~np.isfinite(lse)):
            bad = np.flatnonzero(~np.isfinite(lse)).tolist()
            raise DegenerateColumnError(f"columns {bad} have no finite cost")
        values[:m] = np.exp(neg - lse)
    return EdgeProbabilityMatrix(values, "column")


def column_normalize(p: EdgeProbabilityMatrix) -> EdgeProbabilityMatrix:
    v = p.values
    sums = v.sum(axis=0)
    if np.any(sums <= 0):
        raise DegenerateColumnError(f"columns {np.flatnonzero(sums <= 0).tolist()} are all zero")
    return EdgeProbabilityMatrix(v / sums, "column", p.disappear)


def apply_temperature(p: EdgeProbabilityMatrix, t) -> EdgeProbabilityMatrix:
    """Raise every entry to the power tau and renormalize each column."""
    if not isinstance(t, Temperature):
        t = Temperature(float(t))
    if p.n_daughters == 0:
        return EdgeProbabilityMatrix(p.values, "column")
    return EdgeProbabilityMatrix(_temper_rows(p.values.T, t.tau).T, "column")


def daughter_entropy(p: EdgeProbabilityMatrix) -> np.ndarray:
    """Shannon entropy (nats) of every daughter's class distribution."""
    return _entropy(p.values, axis=0)


def _fit_arrays(data: LabeledEdges):
    rows = np.arange(len(data))
    logp = _log(data.columns)
    true_logp = logp[rows, data.truth]
    usable = np.isfinite(true_logp)
    if not np.any(usable):
        raise UnfittableError("the true class has zero probability in every column")
    dropped = int((~usable).sum())
    if dropped:
        logger.warning("ignoring %d columns whose true class has zero probability", dropped)
    return logp[usable], true_logp[usable]


def temperature_nll(data: LabeledEdges, log_tau: float) -> float:
    """Summed cross-entropy of the tempered columns against the true classes."""
    logp, true_logp = _fit_arrays(data)
    return _nll(logp, true_logp, log_tau)


def _nll(logp, true_logp, log_tau):
    tau = math.exp(log_tau)
    return float(np.sum(logsumexp(tau * logp, axis=1) - tau * true_logp))


def fit_temperature(data: LabeledEdges, bounds=LOG_TAU_BOUNDS, xatol=1e-6) -> Temperature:
    """Temperature minimizing the cross-entropy, searched over log tau."""
    if len(data) == 0:
        raise UnfittableError("no labeled columns")
    logp, true_logp = _fit_arrays(data)
    res = minimize_scalar(lambda x: _nll(logp, true_logp, x), bounds=bounds,
                          method="bounded", options={"xatol": xatol})
    return Temperature(math.exp(float(res.x)))


def save_temperature(path, tau, method, cost_model, subsample_factor=1):
    t = tau.tau if isinstance(tau, Temperature) else float(tau)
    doc = {"method": method, "cost_model": cost_model,
           "subsample_factor": int(subsample_factor), "tau": t}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def load_temperature(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    missing = {"method", "cost_model", "subsample_factor", "tau"} - set(doc)
    if missing:
        raise ConfigurationError(f"{path}: temperature file lacks {sorted(missing)}")
    Temperature(doc["tau"])
    return doc
