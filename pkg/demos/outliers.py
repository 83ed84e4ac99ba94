"""Flag the z points farthest from their centers after a robust fit.

Three blobs in 20 dimensions with 5% outliers drawn from a much wider
Gaussian. The radius comes from the contaminated calibration formula.
Run: python demos/outliers.py
"""

from drkmeans.bench import recall_trial, run_recall

drkm, km, radius = recall_trial(seed=0, trial=0)
print(f"one trial: radius={radius:.3f}  recall robust={drkm:.3f}  Lloyd={km:.3f}")

summary = run_recall(trials=10, seed=0)
print(f"10 trials: mean recall robust={summary['drkm_recall']:.3f}  "
      f"Lloyd={summary['km_recall']:.3f}")
