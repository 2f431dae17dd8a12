"""
Watching the allowed curve fold over
====================================

Every equilibrium start m0 carries a free-end optimal trajectory; its
endpoints sweep out a curve in the (m, v) plane. While that curve stays
a graph over m, conditioning is well posed everywhere. The first fold
in its m-projection is where uniqueness first fails, and for moderate
quenches it happens at the origin at a time known in closed form.
"""

import numpy as np

from cwflow import ModelParams, fold_times, t_ngs_closed, transport

beta, bp = 1.25, 0.0
tstar = t_ngs_closed(beta, bp)
print(f"closed-form transition time at (beta={beta}, beta'={bp}): "
      f"{tstar:.12f}")

# detect the same time numerically from the fold condition dm_t/dm0 = 0
folds = fold_times(ModelParams(beta, bp, 1.5 * tstar), 1.5 * tstar,
                   t_grid=100, m0_grid=200)
first = min(folds, key=lambda f: f.t)
print(f"first detected fold: t = {first.t:.12f} at m0 = {first.m0:+.3e}")
print(f"difference: {abs(first.t - tstar):.2e}\n")

# the endpoint map before and after: past tstar, a band of endpoints is
# covered three times and the projection has turning points
for t in (0.8 * tstar, 1.2 * tstar):
    tr = transport(ModelParams(beta, bp, t), 200)
    m_t = np.array([s.end.m for s in tr])
    turns = np.sum(np.diff(np.sign(np.diff(m_t))) != 0)
    tag = "injective" if turns == 0 else f"{turns} turning points"
    print(f"t = {t:.4f}: endpoint map has {tag} "
          f"(range {m_t.min():+.4f} .. {m_t.max():+.4f})")
