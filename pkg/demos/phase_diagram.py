"""
A slice of the Gibbs / non-Gibbs phase diagram
==============================================

For infinite-temperature dynamics, sweep the initial temperature and
the horizon, classify each cell by its bad set, and trace the onset
boundary within each column. Columns with 1/beta < 1 lose the Gibbs
property at a finite time; the closed-form curve is overlaid as a
cross-check on the bisection. Takes about a minute: each cell is a
full transport plus bad-set classification.
"""

from cwflow import diagram

dg = diagram(0.0, beta_inv=(0.7, 0.8, 0.9), ts=(0.25, 0.5, 0.8, 1.2),
             transport_grid=100, tol=5e-3)

# labels[i][j] classifies the cell (beta_inv[j], ts[i])
print("cell labels (rows: t, columns: 1/beta):")
print("t \\ 1/beta " + "".join(f"{b:>22.2f}" for b in dg.beta_inv))
for i, t in enumerate(dg.ts):
    row = "".join(f"{lab.value:>22}" for lab in dg.labels[i])
    print(f"  {t:8.2f} {row}")

print("\nonset of non-Gibbsianness per column (numeric bisection):")
for binv, t in dg.boundary:
    print(f"  1/beta = {binv:.2f}: t = {t:.4f}")
print("closed-form origin fold time, where the formula applies:")
for binv, t in dg.closed_form:
    print(f"  1/beta = {binv:.2f}: t = {t:.4f}")
