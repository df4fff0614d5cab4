"""
Lower frame rate, lower temperature
===================================

Keeping every s-th frame multiplies the displacement variance by s.  The
lineage across each gap is composed from the per-frame ground truth.
"""

from celluq import fit_temperature, make_cost_model
from celluq.pipeline import MethodSpec, labeled_edges, subsample
from celluq.synthetic import brownian_sequence

seq = brownian_sequence(100, 301, 1.0, density=0.1, seed=3)
cm = make_cost_model("l2", lam=1.0)

for factor in (1, 3, 10, 30):
    sub = subsample(seq, factor)
    _, data = labeled_edges(sub, MethodSpec("SM"), cm)
    tau = fit_temperature(data).tau
    print(f"factor {factor:2d}: {len(sub.frames):3d} frames, accuracy {data.accuracy():.3f}, "
          f"tau {tau:.4f}, tau * factor {tau * factor:.3f}")
