"""Drifted-Brownian price: the whole solution is closed form.

Computes the exponent n of the increasing fundamental solution, the
constant trigger price x* = c + 1/n, tabulates the value function around
it, and walks one simulated path to show the running-max extraction rule.
"""

import numpy as np

from optext import ModelParams, Solution, running_max_policy_bm

p = ModelParams(a=0.4, b=0.0, sigma=0.8, rho=0.375, c=0.3, alpha=0.25)
sol = Solution.build(p)

print("drifted-Brownian instance:", p)
print(f"exponent n      = {sol.prices.n:.12f}")
print(f"trigger price x*= {sol.prices.x_star:.12f}  (= c + 1/n)")
print()

print("value surface slice at y = 2 (region changes at x*):")
print(f"{'x':>6} {'region':>9} {'w':>10} {'w_x':>10} {'w_xx':>10} {'w_y':>10}")
for x in np.linspace(1.0, 2.6, 9):
    vp = sol.value_point(float(x), 2.0)
    print(
        f"{x:6.2f} {vp.region.value:>9} {vp.w:10.5f} {vp.w_x:10.5f} "
        f"{vp.w_xx:10.5f} {vp.w_y:10.5f}"
    )
print()

# One path of the exact pathwise policy: extract the minimal amount that
# keeps the impacted price at or below x*.
rng = np.random.default_rng(3)
h, n_steps = 1e-3, 4000
incr = rng.standard_normal(n_steps)
x0, y0 = 2.1, 1.5
xi = running_max_policy_bm(x0, p, incr, y0, h)
w_path = np.concatenate([[0.0], np.cumsum(incr)]) * p.sigma * np.sqrt(h)
t = h * np.arange(n_steps + 1)
price = x0 + p.a * t + w_path - p.alpha * xi

print(f"one path from (x, y) = ({x0}, {y0}):")
print(f"  initial lump extraction: {xi[0]:.4f} (price drops to {price[0]:.4f})")
for k in (0, 400, 1000, 2000, 4000):
    print(
        f"  t={t[k]:5.2f}  price={price[k]: 7.4f}  extracted={xi[k]:.4f}  "
        f"remaining={y0 - xi[k]:.4f}"
    )
print(f"  price stayed below x* after the lump: "
      f"{bool(np.all(price[1:][xi[1:] < y0] <= sol.prices.x_star + 1e-12))}")
