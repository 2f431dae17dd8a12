"""
The limiting single-spin kernel and its jump
============================================

Condition the evolved chain on magnetization m' and ask for the law of
one tagged spin at time t given its initial value. In the large-N limit
this two-by-two kernel depends on m' only through the optimal history,
so it inherits the history's discontinuities.
"""

import math

import numpy as np

from cwflow import ModelParams, kernel, kernel_jump, transition_matrix
from cwflow.gamma import kernel_one_sided

params = ModelParams(1.25, 0.0, 0.45)

# gamma_plus = P(sigma_t = + | sigma_0 = +, m_t ~ m') across the window
print("m'      start m0*   gamma_plus")
for mp in np.linspace(-0.3, 0.3, 7):
    if abs(mp) < 1e-12:
        continue  # two-sided value is ambiguous exactly at the bad point
    ke = kernel(float(mp), params)
    print(f"{mp:+.2f}   {ke.m0_star:+.6f}   {ke.gamma_plus:.6f}")

# the two one-sided limits at the bad point m' = 0 disagree; their gap
# is the kernel jump that certifies non-Gibbsianness
left = kernel_one_sided(0.0, params, -1)
right = kernel_one_sided(0.0, params, +1)
print(f"\nat m' = 0: gamma_plus from the left  = {left.gamma_plus:.6f}")
print(f"           gamma_plus from the right = {right.gamma_plus:.6f}")
print(f"           jump = {kernel_jump(0.0, params):.6f}")

# sanity: with beta' = 0 the tagged spin flips at unit rate no matter
# what the crowd does, so P(+ -> +) = (1 + e^{-2t}) / 2 exactly
p = transition_matrix(lambda s: 0.3 * math.cos(s), ModelParams(1.0, 0.0, 0.5))
print(f"\nmemoryless check at t = 0.5: P(+ -> +) = {p[0, 0]:.12f} vs "
      f"closed form {(1 + math.exp(-1.0)) / 2:.12f}")
