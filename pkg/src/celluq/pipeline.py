"""Temporal subsampling and the method-by-method uncertainty experiment."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import evaluation as ev
from .bayes import sni_edge_probabilities
from .costs import CostModel
from .dbmc import (
    LabeledEdges,
    Temperature,
    apply_temperature,
    column_normalize,
    fit_temperature,
    save_temperature,
    softmax_columns,
)
from .io import IntegrityError, Sequence
from .model import BOTTOM, Assignment, ConfigurationError, EdgeProbabilityMatrix, is_feasible
from .perturb import NoiseSpec, fp_assignment_ensemble, fp_mean_cost
from .solver import encode_costs, solve_encoded, top_k

logger = logging.getLogger(__name__)

BASE_METHODS = ("SM", "FP", "FP+A", "AS")


@dataclass(frozen=True)
class MethodSpec:
    """One row of the method table: a base estimator, optionally tempered.

    ``tau`` is used for ``+TS`` methods when given; otherwise the temperature
    has to be fitted on a calibration sequence.
    """

    name: str
    cost_model: str = "l2"
    noise: Optional[NoiseSpec] = None
    k: int = 10
    tau: Optional[Temperature] = None
    parental: bool = False

    def __post_init__(self):
        if self.base not in BASE_METHODS:
            raise ConfigurationError(f"unknown method {self.name!r}")
        if self.name not in (self.base, self.base + "+TS"):
            raise ConfigurationError(f"unknown method {self.name!r}")
        if self.base == "AS" and self.k < 1:
            raise ConfigurationError("AS needs k >= 1")
        if self.base in ("FP", "FP+A") and self.noise is None:
            raise ConfigurationError(f"{self.base} needs a noise specification")

    @property
    def tempered(self) -> bool:
        return self.name.endswith("+TS")

    @property
    def base(self) -> str:
        return self.name[:-3] if self.name.endswith("+TS") else self.name

    def untempered(self) -> "MethodSpec":
        return MethodSpec(self.base, self.cost_model, self.noise, self.k, None, self.parental)

    def with_tau(self, tau) -> "MethodSpec":
        return MethodSpec(self.name, self.cost_model, self.noise, self.k, tau, self.parental)


@dataclass
class PairResult:
    """Outcome of one method on one frame pair."""

    map_assignment: Assignment
    conditional: object
    joint: object = None


@dataclass
class MethodReport:
    method: str
    tau: Optional[float]
    ece: float = float("nan")
    reliability: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    improvement: dict = field(default_factory=dict)
    n_predictions: int = 0
    accuracy: float = float("nan")


# -- subsampling --------------------------------------------------------------

def compose_assignments(chain) -> Assignment:
    """Map every daughter of the last frame to its ancestor in the first.

    A daughter whose lineage starts inside the gap gets the fallback class.
    """
    chain = list(chain)
    if not chain:
        raise ValueError("empty chain")
    mothers = chain[-1].mother_vector()
    for a in reversed(chain[:-1]):
        prev = a.mother_vector()
        mothers = np.array([BOTTOM if m == BOTTOM else prev[m] for m in mothers], dtype=int)
    out = Assignment.from_mother_vector(mothers, chain[0].source_size)
    if not is_feasible(out):
        raise IntegrityError(f"composed lineage is infeasible: {out.canonical()}")
    return out


def subsample(seq: Sequence, factor: int) -> Sequence:
    """Keep frames 0, f, 2f, ... and compose the ground truth across each gap."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return seq
    keep = list(range(0, len(seq.frames), factor))
    frames = [seq.frames[i] for i in keep]
    gt = None
    if seq.ground_truth is not None:
        gt = [compose_assignments(seq.ground_truth[a:b]) for a, b in zip(keep[:-1], keep[1:])]
    return Sequence(frames, gt, seq.source, seq.subsample_factor * factor, dict(seq.notes))


# -- per-pair computation -------------------------------------------------------

def compute_pair(method: MethodSpec, src, tgt, cm: CostModel) -> PairResult:
    """Edge probabilities and MAP assignment of one method on one frame pair."""
    base = method.base
    if base == "SM":
        costs = cm.matrix(src, tgt)
        solution = solve_encoded(encode_costs(costs, cm.appear_cost, cm.disappear_cost))
        cond, joint = _softmax(costs, method.parental, len(src), len(tgt)), None
    elif base == "FP":
        mean_cm = fp_mean_cost(src, tgt, cm, method.noise)
        costs = mean_cm.matrix(src, tgt)
        solution = solve_encoded(encode_costs(costs, cm.appear_cost, cm.disappear_cost))
        cond, joint = _softmax(costs, method.parental, len(src), len(tgt)), None
    elif base == "FP+A":
        costs = cm.matrix(src, tgt)
        solution = solve_encoded(encode_costs(costs, cm.appear_cost, cm.disappear_cost))
        joint = fp_assignment_ensemble(src, tgt, cm, method.noise)
        cond = column_normalize(joint)
    else:
        solutions = top_k(src, tgt, cm, method.k)
        solution = solutions[0]
        joint = sni_edge_probabilities(solutions, src, tgt, cm)
        cond = column_normalize(joint)
    if method.tempered:
        if method.tau is None:
            raise ConfigurationError(f"{method.name} needs a temperature")
        cond = apply_temperature(cond, method.tau)
    return PairResult(solution.assignment, cond, joint)


def _softmax(costs, parental, m, n):
    if m == 0 and not parental:
        # no real class at all: every daughter can only appear
        return EdgeProbabilityMatrix(np.ones((1, n)), "column")
    return softmax_columns(costs, parental)


def labeled_edges(seq: Sequence, method: MethodSpec, cm: CostModel, workers: int = 1):
    """Per-pair results and the pooled labeled predictions of one method."""
    if seq.ground_truth is None:
        raise ConfigurationError("evaluation needs ground truth")
    pairs = seq.pairs()
    results = _map_pairs(lambda p: compute_pair(method, p[0], p[1], cm), pairs, workers)
    parts = []
    for (src, tgt), res, truth in zip(pairs, results, seq.ground_truth):
        key = f"{src.time_index}-{tgt.time_index}"
        parts.append(ev.evaluate_predictions(res.map_assignment, res.conditional, truth, key))
    return results, LabeledEdges.concat(parts)


def fit_method_temperature(calibration: Sequence, method: MethodSpec, cm: CostModel,
                           workers: int = 1) -> Temperature:
    """Fit the temperature of a method on a calibration sequence only."""
    _, data = labeled_edges(calibration, method.untempered(), cm, workers)
    return fit_temperature(data)


def _map_pairs(fn, pairs, workers):
    if workers <= 1 or len(pairs) <= 1:
        return [fn(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, pairs))


# -- experiment ---------------------------------------------------------------

def _label(frame, index):
    return "_" if index == BOTTOM else str(frame[index].id)


def _num(x):
    return "" if x is None else repr(round(float(x), 12))


def write_edges_csv(path, pairs, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_pair", "mother", "daughter", "p_joint", "p_cond"])
        for (src, tgt), res in zip(pairs, results):
            key = f"{src.time_index}-{tgt.time_index}"
            m = len(src)
            cond = res.conditional.values
            joint = res.joint.values if res.joint is not None else None
            for j in range(len(tgt)):
                for i in list(range(m)) + [BOTTOM]:
                    r = m if i == BOTTOM else i
                    pj = joint[r, j] if joint is not None else None
                    w.writerow([key, _label(src, i), _label(tgt, j), _num(pj), _num(cond[r, j])])
            if res.joint is not None and res.joint.disappear is not None:
                for i in range(m):
                    w.writerow([key, _label(src, i), "_", _num(res.joint.disappear[i]), ""])


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_experiment(seq: Sequence, methods, cm: CostModel, bins: int = 10,
                   quantiles=ev.DEFAULT_QUANTILES, out_dir=None,
                   calibration: Optional[Sequence] = None, workers: int = 1,
                   config: Optional[dict] = None) -> dict:
    """Evaluate every method on ``seq`` and optionally write the report files.

    Tempered methods without a given temperature are fitted on
    ``calibration``, never on ``seq`` itself.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    reports, failures, outputs, temps = {}, [], [], []
    pairs = seq.pairs()
    for method in methods:
        try:
            if method.tempered and method.tau is None:
                if calibration is None:
                    raise ConfigurationError(
                        f"{method.name} needs --tau or a calibration sequence"
                    )
                tau = fit_method_temperature(calibration, method, cm, workers)
                method = method.with_tau(tau)
                temps.append(method)
            results, data = labeled_edges(seq, method, cm, workers)
            rep = MethodReport(method.name, method.tau.tau if method.tau else None)
            rep.n_predictions = len(data)
            if len(data):
                rep.accuracy = data.accuracy()
                rep.ece, rep.reliability = ev.expected_calibration_error(data, bins)
                for crit in (ev.EDGE_PROBABILITY, ev.DAUGHTER_ENTROPY):
                    curve = ev.sparsification(data, None, crit, quantiles)
                    rep.curves[crit] = curve
                    rep.improvement[crit] = ev.accuracy_improvement(curve)
            reports[method.name] = rep
            if out is not None:
                f = out / f"edges_{method.name}.csv"
                write_edges_csv(f, pairs, results)
                outputs.append(f)
                if len(data):
                    f = out / f"reliability_{method.name}.csv"
                    ev.write_reliability_csv(f, rep.reliability)
                    outputs.append(f)
                    f = out / f"sparsification_{method.name}.csv"
                    ev.write_sparsification_csv(f, [rep.curves[c] for c in sorted(rep.curves)])
                    outputs.append(f)
        except Exception as exc:  # noqa: BLE001 - recorded in the manifest
            logger.exception("method %s failed", method.name)
            failures.append({"method": method.name, "error": f"{type(exc).__name__}: {exc}"})

    if out is not None:
        for method in temps:
            f = out / f"temperature_{method.name}.json"
            save_temperature(f, method.tau, method.name, cm.name, seq.subsample_factor)
            outputs.append(f)
        if len(temps) == 1:
            f = out / "temperature.json"
            save_temperature(f, temps[0].tau, temps[0].name, cm.name, seq.subsample_factor)
            outputs.append(f)
        f = out / "summary.json"
        _write_json(f, summary_document(reports))
        outputs.append(f)
        manifest = {
            "config": config or {},
            "source": Path(seq.source).name if seq.source else "",
            "subsample_factor": seq.subsample_factor,
            "frame_pairs": [f"{s.time_index}-{t.time_index}" for s, t in pairs],
            "methods": [m.name for m in methods],
            "outputs": [{"file": p.name, "sha256": _sha256(p)} for p in outputs],
            "failures": failures,
        }
        _write_json(out / "manifest.json", manifest)
    return {"reports": reports, "failures": failures}


def summary_document(reports) -> dict:
    doc = {}
    for name, rep in reports.items():
        doc[name] = {
            "tau": rep.tau,
            "ece": None if np.isnan(rep.ece) else round(rep.ece, 12),
            "accuracy": None if np.isnan(rep.accuracy) else round(rep.accuracy, 12),
            "n_predictions": rep.n_predictions,
            "accuracy_improvement": {k: round(v, 12) for k, v in sorted(rep.improvement.items())},
        }
    return doc


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
