"""
Exact edge probabilities on a tiny frame pair
=============================================

With at most six cells per frame every feasible assignment can be listed.
The exhaustive answer is what the top-K estimate converges to.
"""

import numpy as np

from celluq import count_feasible, exact_edge_probabilities, make_cost_model
from celluq import sni_edge_probabilities, top_k
from celluq.synthetic import random_frame_pair

rng = np.random.default_rng(0)
src, tgt = random_frame_pair(rng, 3, 4, box=5.0)
cm = make_cost_model("l2", lam=1.0, appear_cost=4, disappear_cost=4)

size = count_feasible(len(src), len(tgt))
print(f"{len(src)} mothers, {len(tgt)} daughters: {size} feasible assignments")

exact = exact_edge_probabilities(src, tgt, cm)
np.set_printoptions(precision=3, suppress=True)
print("exact (rows: mothers then appearance):")
print(exact.values)

# Error of the top-K estimate as K grows.
ranked = top_k(src, tgt, cm, size)
for k in (1, 2, 5, 20, size):
    est = sni_edge_probabilities(ranked[:k], src, tgt, cm)
    print(f"K={k:4d}  max error {np.abs(est.values - exact.values).max():.2e}")
