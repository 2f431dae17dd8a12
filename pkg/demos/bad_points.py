"""
Bad magnetizations in three temperature regimes
===============================================

A conditioning value m' is bad when two genuinely different histories
explain it at the same cost; the limiting single-spin kernel then jumps
as m' crosses the tie. Where the bad points sit depends on how the
initial temperature compares with 1 and with the dynamical temperature.
"""

from cwflow import ModelParams, classify_bad

# subcritical start: conditioning stays well posed forever
rep = classify_bad(ModelParams(0.8, 0.0, 2.0), transport_grid=150,
                   measure_jumps=False)
print(f"beta = 0.80, t = 2.0: bad points = "
      f"{[round(b.m, 5) for b in rep.bad] or 'none'}")

# supercritical heating: past the transition time only the origin is bad
rep = classify_bad(ModelParams(1.25, 0.0, 0.45), transport_grid=150)
b = rep.bad[0]
print(f"beta = 1.25, t = 0.45: bad points = [{b.m:+.5f}] with kernel "
      f"jump {b.kernel_jump:.4f} between starts {b.m0_a:+.5f} and "
      f"{b.m0_b:+.5f}")

# deep quench: in a window of horizons the tie forms off center first,
# as a mirror pair, before it reaches the origin
for t in (0.069, 0.129):
    rep = classify_bad(ModelParams(2.5, 0.0, t), transport_grid=150,
                       measure_jumps=False)
    print(f"beta = 2.50, t = {t:.3f}: bad points = "
          f"{[round(b.m, 5) for b in rep.bad]}")

# cooling dynamics (beta < beta'): bad pairs appear at large horizons
# even though the start is subcritical
rep = classify_bad(ModelParams(1 / 0.85, 1.5, 2.0), transport_grid=150,
                   measure_jumps=False)
print(f"beta = {1/0.85:.4f}, beta' = 1.5, t = 2.0: bad points = "
      f"{[round(b.m, 5) for b in rep.bad]}")
