"""
Uncertainty from jittered detections
====================================

Centroids are resampled with Gaussian noise.  Averaging the link costs
gives FP; counting the MAP solutions of every resampled pair gives FP+A.
"""

import numpy as np

from celluq import NoiseSpec, fp_assignment_ensemble, fp_mean_cost, make_cost_model
from celluq.dbmc import softmax_columns
from celluq.synthetic import ambiguous_pair

src, tgt = ambiguous_pair()
cm = make_cost_model("l2", lam=1.0)
np.set_printoptions(precision=3, suppress=True)

for gamma in (0.1, 1.0):
    spec = NoiseSpec("gaussian_centroid", gamma=gamma, samples=200, seed=1)
    mean = fp_mean_cost(src, tgt, cm, spec)
    fp = softmax_columns(mean.matrix(src, tgt))
    fpa = fp_assignment_ensemble(src, tgt, cm, spec)
    print(f"gamma={gamma}")
    print("  FP   middle daughter:", fp.values[:, 1])
    print("  FP+A middle daughter:", fpa.values[:, 1])
