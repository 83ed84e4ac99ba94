"""How the calibrated radius shrinks with the sample size.

The concentration constants are not known for real data, so they are
inputs; the caveats say when a formula branch is outside its proven regime.
Run: python demos/radius.py
"""

from drkmeans import RadiusConfig, calibrate_radius, calibrate_radius_contaminated
from drkmeans.risk import preset_radius, radius_caveats

cfg = RadiusConfig(dim=7, scale=10.0)
for n in (5, 10, 100, 1000, 10000):
    print(f"n={n:>6}: r={calibrate_radius(n, cfg):.4f}  preset={preset_radius(n, 7):.4f}  "
          f"caveats={radius_caveats(n, cfg)}")

far = RadiusConfig(dim=7, separation_D=3.0)
for n2 in (0, 5, 50):
    print(f"n1=500, n2={n2:>2}: contaminated r={calibrate_radius_contaminated(500, n2, far):.4f}")
