"""
Temperature scaling recovers the motion variance
================================================

Cells move by Brownian steps of variance ``v`` but the cost assumes unit
variance.  The fitted temperature should land near ``1 / v`` and the
held-out cross-entropy should drop once it is applied.

ECE is scored against the LAP prediction, which uses the one-to-one
constraint the per-daughter softmax ignores.  That prediction is right more
often than its softmax confidence says, so ECE need not fall to zero even
at the true temperature.
"""

from celluq import LabeledEdges, expected_calibration_error, fit_temperature, make_cost_model
from celluq.dbmc import temperature_nll
from celluq.evaluation import evaluate_predictions
from celluq.pipeline import MethodSpec, compute_pair
from celluq.synthetic import brownian_classification

cm = make_cost_model("l2", lam=1.0)


def labeled(pairs):
    parts = []
    for src, tgt, truth in pairs:
        res = compute_pair(MethodSpec("SM"), src, tgt, cm)
        parts.append(evaluate_predictions(res.map_assignment, res.conditional, truth))
    return LabeledEdges.concat(parts)


for v in (0.5, 2.0, 8.0):
    calib = labeled(brownian_classification(30, 100, v, density=0.1, seed=1))
    test = labeled(brownian_classification(30, 100, v, density=0.1, seed=2))
    tau = fit_temperature(calib)
    before, _ = expected_calibration_error(test)
    after, _ = expected_calibration_error(test.tempered(tau))
    nll0 = temperature_nll(test, 0.0) / len(test)
    nll1 = temperature_nll(test, tau.log_tau) / len(test)
    print(f"v={v:4}: tau={tau.tau:.3f} (1/v={1 / v:.3f})  "
          f"NLL {nll0:.3f} -> {nll1:.3f}  ECE {before:.3f} -> {after:.3f}")
