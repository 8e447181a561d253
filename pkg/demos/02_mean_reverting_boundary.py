"""Mean-reverting price: critical prices and the reserve-dependent boundary.

Solves the two critical prices, builds the free-boundary table F, prints a
few rows, shows the divergence toward the infinite-reserve price x_inf, and
round-trips the table through its CSV form.
"""

import tempfile
from pathlib import Path

import numpy as np

from optext import BoundaryTable, ModelParams, Solution

p = ModelParams(a=0.4, b=1.0, sigma=0.8, rho=0.375, c=0.3, alpha=0.25)
sol = Solution.build(p)
cp, tab = sol.prices, sol.table

print("mean-reverting instance:", p)
print(f"x0    = {cp.x0:.12f}   (zero-reserve trigger price)")
print(f"x_inf = {cp.x_inf:.12f}   (infinite-reserve trigger price)")
print(f"x_bar = {cp.x_bar:.12f}   (< x0, by construction)")
print(f"boundary table: {tab.nodes.size} nodes, tail slope kappa = "
      f"{tab.tail_kappa:.6f}")
print()

print("the boundary F and its inverse (price that triggers extraction):")
print(f"{'reserve y':>10} {'F^-1(y)':>12}     {'price x':>10} {'F(x)':>10}")
delta = cp.x0 - cp.x_inf
for y, frac in zip((0.0, 0.5, 2.0, 8.0, 25.0), (1.0, 0.6, 0.3, 0.05, 1e-3)):
    x = cp.x_inf + frac * delta
    print(
        f"{y:10.2f} {sol.threshold(y):12.6f}     {x:10.6f} "
        f"{float(tab.F(x)):10.4f}"
    )
print()
print("approaching x_inf the boundary reserve level diverges:")
for frac in (1e-2, 1e-4, 1e-6):
    x = cp.x_inf + frac * delta
    print(f"  F(x_inf + {frac:.0e} width) = {float(tab.F(x)):9.3f}")
print()

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "boundary.csv"
    tab.to_csv(path)
    again = BoundaryTable.from_csv(path, p)
    xs = np.linspace(tab.nodes[0], tab.x0, 500)
    print(
        "CSV round trip: identical bytes =",
        tab.to_csv_bytes() == again.to_csv_bytes(),
        ", max |F difference| =",
        float(np.max(np.abs(tab.F(xs) - again.F(xs)))),
    )
