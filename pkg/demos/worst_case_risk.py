"""Worst-case risk of fixed centers, and the curve it is minimised over.

For K = 1 the answer has a closed form, which makes a handy sanity check.
Run: python demos/worst_case_risk.py
"""

import math

import numpy as np

from drkmeans import dual_curve, empirical_risk, risk_sandwich_check, wc_risk

rng = np.random.default_rng(0)
data = rng.normal(size=(200, 3))

center = data.mean(axis=0, keepdims=True)
r = 0.5
res = wc_risk(data, center, r)
risk = empirical_risk(data, center)
print(f"K=1: wc_risk={res.value:.10f}  closed form={(r + math.sqrt(risk)) ** 2:.10f}")
print(f"     gamma*={res.gamma_star:.10f}  closed form={1 + math.sqrt(risk) / r:.10f}")

centers = np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.5, 0.0]])
lower, wc, upper = risk_sandwich_check(data, centers, r)
print(f"K=3: risk {lower:.4f} <= worst case {wc:.4f} <= (r + sqrt(risk))^2 = {upper:.4f}")

curve = dual_curve(data, centers, r, np.geomspace(1.05, 20.0, 12))
for g, v in zip(curve.gammas, curve.values):
    print(f"  gamma={g:8.4f}  D={v:.6f}")
print("convex on the grid:", curve.is_midpoint_convex())
