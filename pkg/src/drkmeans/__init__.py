"""Distributionally robust k-means over a Wasserstein ball."""

__version__ = "0.1.0"

from .assignment import (
    BatchSolution,
    InnerSolution,
    e_value_bruteforce,
    scalar_closed_form,
    solve_assignment,
    solve_assignment_entropy,
    solve_assignments,
    solve_assignments_entropy,
    worst_case_points,
)
from .bench import (
    ContaminatedSample,
    DegenerateSampleError,
    GmmSpec,
    OutlierReport,
    inject_outliers,
    outlier_report,
    run_experiment1,
    run_experiment2,
    run_recall,
    sample_gmm,
)
from .core import (
    DimensionMismatchError,
    EmptyClusterError,
    FitResult,
    GammaBoundaryError,
    IllConditionedError,
    QPConvergenceWarning,
    RobustConfig,
    empirical_risk,
    nearest_partition,
    surrogate_objective,
)
from .io import load_csv, load_result, save_result
from .risk import (
    DualCurve,
    RadiusConfig,
    SandwichViolation,
    WcRiskResult,
    calibrate_radius,
    calibrate_radius_contaminated,
    dual_curve,
    preset_radius,
    risk_sandwich_check,
    w2_empirical_1d,
    wc_risk,
)
from .seeding import lloyd_fit, seed_kmeanspp, seed_random
from .solver import fit, fit_entropy, fit_fixed_gamma, fit_joint
from .update import centroid_update, gamma_update
