"""Small versions of the two synthetic benchmarks.

Full-size runs: ``drkmeans bench --experiment 1 --trials 30`` and
``drkmeans bench --experiment 2 --trials 200``.
Run: python demos/benchmarks.py
"""

from drkmeans import run_experiment1, run_experiment2

for row in run_experiment2(trials=20, seed=0):
    print(f"two blobs {row['n_a']}+{row['n_b']} with {row['n_o']} outliers: "
          f"accuracy robust={row['drkm_accuracy']:.3f} Lloyd={row['km_accuracy']:.3f}")

for row in run_experiment1((5, 30), trials=5, seed=0):
    print(f"n={row['n']:>2}: worst-case risk Lloyd - robust = {row['gap']:.3f} (r={row['radius']:.3f})")
