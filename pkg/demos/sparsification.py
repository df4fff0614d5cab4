"""
Dropping the least certain predictions
======================================

Daughters with a flat mother distribution are the ones most likely to be
linked wrongly.  Removing them first should raise the accuracy of what is
left; a shuffled ranking should not.
"""

from celluq import LabeledEdges, accuracy_improvement, make_cost_model, sparsification
from celluq.evaluation import evaluate_predictions, permutation_null
from celluq.pipeline import MethodSpec, compute_pair
from celluq.synthetic import brownian_classification

cm = make_cost_model("l2", lam=1.0)
parts = []
for src, tgt, truth in brownian_classification(40, 60, 2.0, density=0.03, seed=9):
    res = compute_pair(MethodSpec("SM"), src, tgt, cm)
    parts.append(evaluate_predictions(res.map_assignment, res.conditional, truth))
data = LabeledEdges.concat(parts)

curve = sparsification(data)
print(f"baseline accuracy {curve.baseline_accuracy:.3f}")
for q, frac, acc in zip(curve.quantiles, curve.retained_fraction, curve.retained_accuracy):
    print(f"  drop {q:.1f}: keep {frac:.2f}, accuracy {acc:.3f}")
print(f"mean gain {accuracy_improvement(curve):+.4f}")

mean, sd = permutation_null(data, data.entropies(), n_perm=100)
print(f"shuffled ranking gain {mean:+.4f} +/- {sd:.4f}")
