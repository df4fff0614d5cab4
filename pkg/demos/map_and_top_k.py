"""
Most likely assignment and its runners-up
=========================================

Two mothers, three daughters.  The middle daughter sits between both
mothers, so the linker is unsure which one it came from.
"""

from celluq import make_cost_model, sni_edge_probabilities, solve_map, top_k
from celluq.synthetic import ambiguous_pair

src, tgt = ambiguous_pair()
cm = make_cost_model("l2", lam=1.0, appear_cost=10, disappear_cost=10)

# The MAP assignment comes from a single linear assignment problem.
best = solve_map(src, tgt, cm)
print("MAP:", best.assignment, " log score", round(best.log_score, 4))

# Murty partitioning lists the next best assignments in order.
ranked = top_k(src, tgt, cm, 5)
for r in ranked:
    print(f"  #{r.rank}  {str(r.assignment):28s} {r.log_score:9.4f}")

# Weighting the top two by exp(score) gives edge probabilities.
p = sni_edge_probabilities(ranked[:2], src, tgt, cm)
print("P(mother 0 -> daughter 1) =", round(p.probability(0, 1), 4))
print("P(mother 1 -> daughter 1) =", round(p.probability(1, 1), 4))
