"""
Where did an unlikely endpoint come from?
=========================================

Prepare the mean-field chain in equilibrium at beta = 1.25, switch the
dynamics to infinite temperature (beta' = 0), and run for t = 0.45.
Conditioned on the empirical magnetization ending near some m', the
history concentrates on the cheapest path compatible with that ending.
This script computes those paths and shows the moment the answer stops
being unique.
"""

import numpy as np

from cwflow import ModelParams, optimal_histories

params = ModelParams(1.25, 0.0, 0.45)

# a mildly unlikely ending: one clear winner. Costs carry the raw
# double-well static term, so values can sit below zero for beta > 1;
# only cost differences between candidates matter.
for m_end in (0.2, 0.05):
    cands = optimal_histories(m_end, params)
    best = cands[0]
    print(f"m' = {m_end:+.2f}: start m0 = {best.m0:+.6f}, "
          f"launch v0 = {best.v0:+.6f}, total cost = {best.cost:.6f} "
          f"({len(cands)} candidate branch(es))")

# the conditioned path itself, sampled along the horizon
best = optimal_histories(0.2, params)[0]
print("\ncheapest history reaching m' = 0.2:")
for s in np.linspace(0.0, params.t, 7):
    p = best.trajectory.state_at(s)
    print(f"  s = {s:.3f}: m = {p.m:+.6f}, v = {p.v:+.6f}")

# at m' = 0 the two mirror branches tie exactly: the conditioning no
# longer determines where the chain started, only that it started off
# center. This degeneracy is what makes m' = 0 a bad point at this t.
ties = optimal_histories(0.0, params)
print("\nm' = 0.00 candidates:")
for c in ties:
    print(f"  m0 = {c.m0:+.6f}, cost = {c.cost:.6f}")
gap = abs(ties[0].cost - ties[1].cost)
print(f"cost gap between mirror branches: {gap:.2e} (an exact tie)")
