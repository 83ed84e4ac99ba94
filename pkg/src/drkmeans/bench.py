"""Synthetic mixtures, outlier injection and recall, and the two small
benchmark experiments comparing robust k-means with Lloyd."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import RobustConfig, as_points, sq_distances
from .risk import RadiusConfig, calibrate_radius_contaminated, preset_radius, wc_risk
from .seeding import lloyd_fit, make_rng, seed_kmeanspp
from .solver import fit_joint


class DegenerateSampleError(ValueError):
    """The requested contamination produces no outliers."""


@dataclass
class GmmSpec:
    """Isotropic Gaussian mixture.

    ``components`` holds ``(mean, scale, weight)`` triples; a draw from
    component ``j`` is ``mean_j + scale_j * standard normal``.
    """

    components: list
    dim: int = field(default=0)

    def __post_init__(self):
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        comps = []
        for mean, scale, weight in self.components:
            mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
            if not scale > 0.0:
                raise ValueError(f"component scale must be > 0, got {scale}")
            if not weight >= 0.0:
                raise ValueError(f"component weight must be >= 0, got {weight}")
            comps.append((mean, float(scale), float(weight)))
        dims = {m.size for m, _, _ in comps}
        if len(dims) != 1:
            raise ValueError(f"component means have different lengths {sorted(dims)}")
        dim = dims.pop()
        if self.dim and self.dim != dim:
            raise ValueError(f"dim={self.dim} but means have length {dim}")
        total = math.fsum(w for _, _, w in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        self.components = comps
        self.dim = dim

    @classmethod
    def normalized(cls, components, dim: int = 0) -> "GmmSpec":
        """Build a spec after rescaling the weights to sum to one."""
        total = math.fsum(w for _, _, w in components)
        return cls([(m, s, w / total) for m, s, w in components], dim)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.components])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {"mean": m.tolist(), "scale": s, "weight": w} for m, s, w in self.components
            ],
        }

    @classmethod
    def from_dict(cls, obj) -> "GmmSpec":
        comps = [(c["mean"], c["scale"], c["weight"]) for c in obj["components"]]
        return cls(comps, int(obj.get("dim", 0)))


@dataclass
class ContaminatedSample:
    data: np.ndarray
    inlier_flags: np.ndarray
    n_inliers: int
    n_outliers: int

    @property
    def outlier_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.inlier_flags)


@dataclass
class OutlierReport:
    scores: np.ndarray
    flagged: np.ndarray
    recall: float | None
    z: int


def sample_gmm(spec: GmmSpec, n: int, rng=None) -> np.ndarray:
    """Draw ``n`` points: a categorical component label, then mean + scale * N(0, I)."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = make_rng(rng)
    labels = rng.choice(len(spec.components), size=n, p=spec.weights)
    noise = rng.standard_normal((n, spec.dim))
    means = np.stack([m for m, _, _ in spec.components])
    scales = np.array([s for _, s, _ in spec.components])
    return means[labels] + scales[labels, None] * noise


def inject_outliers(data, spec: GmmSpec, fraction: float, rng=None) -> ContaminatedSample:
    """Append outliers drawn from ``spec`` so they make up ``fraction`` of the result.

    The inliers stay untouched as the leading rows.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    data = as_points(data)
    n_in = data.shape[0]
    if spec.dim != data.shape[1]:
        raise ValueError(f"outlier spec has dim {spec.dim}, data has {data.shape[1]}")
    n_out = int(round(fraction * n_in / (1.0 - fraction)))
    if n_out == 0:
        raise DegenerateSampleError(
            f"fraction {fraction} of {n_in} inliers rounds to zero outliers")
    out = sample_gmm(spec, n_out, rng)
    flags = np.concatenate([np.ones(n_in, dtype=bool), np.zeros(n_out, dtype=bool)])
    return ContaminatedSample(np.vstack([data, out]), flags, n_in, n_out)


def hard_labels(assignment) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return np.argmax(np.asarray(assignment), axis=0)


def outlier_report(data, result, z: int, truth=None) -> OutlierReport:
    """Score each point by its distance to the center holding its largest weight.

    The ``z`` highest scores are flagged, ties going to the lower index.
    ``recall`` is the share of ``truth`` that got flagged; it is ``None``
    when no truth is passed.
    """
    data = as_points(data)
    n = data.shape[0]
    if z < 1:
        raise ValueError(f"z must be >= 1, got {z}")
    centers = np.asarray(result.centroids, dtype=np.float64)
    labels = hard_labels(result.assignment)
    if labels.shape[0] != n:
        raise ValueError(f"fit has {labels.shape[0]} points, data has {n}")
    diff = data - centers[labels]
    scores = np.sqrt(np.einsum("nd,nd->n", diff, diff))
    # stable sort on the negated score keeps lower indices first among ties
    order = np.argsort(-scores, kind="stable")
    flagged = np.sort(order[: min(z, n)])
    recall = None
    if truth is not None:
        truth = np.unique(np.asarray(truth, dtype=np.int64))
        if truth.size == 0:
            raise ValueError("recall is undefined for an empty truth set")
        if truth.min() < 0 or truth.max() >= n:
            raise ValueError("truth indices out of range")
        recall = np.intersect1d(flagged, truth).size / truth.size
    return OutlierReport(scores, flagged, recall, z)


def matched_accuracy(data, centers, truth_labels) -> float:
    """Accuracy of nearest-center labels under the better of the two label matchings."""
    pred = np.argmin(sq_distances(data, centers), axis=1)
    hits = np.mean(pred == truth_labels)
    return float(max(hits, np.mean((1 - pred) == truth_labels)))


# experiment 2 --------------------------------------------------------------

EXPERIMENT2_SETTINGS = ((20, 20, 5, 2.25), (10, 10, 2, 2.5))


def _two_blobs_with_outliers(n_a, n_b, n_o, rng):
    a = rng.standard_normal((n_a, 2)) + np.array([-2.0, -2.0])
    b = rng.standard_normal((n_b, 2)) + np.array([2.0, 2.0])
    o = rng.standard_normal((n_o, 2)) + np.array([8.0, 8.0])
    labels = np.concatenate([np.zeros(n_a, dtype=int), np.ones(n_b, dtype=int)])
    return np.vstack([a, b, o]), labels


def experiment2_trial(setting, seed, trial: int, index: int = 0):
    """One trial: returns ``(drkm_accuracy, km_accuracy)``."""
    n_a, n_b, n_o, radius = setting
    rng = make_rng((seed, index, trial))
    data, labels = _two_blobs_with_outliers(n_a, n_b, n_o, rng)
    init = seed_kmeanspp(data, 2, rng)
    km = lloyd_fit(data, init)
    dr = fit_joint(data, init, RobustConfig(radius=radius))
    inliers = data[: n_a + n_b]
    return (matched_accuracy(inliers, dr.centroids, labels),
            matched_accuracy(inliers, km.centroids, labels))


def run_experiment2(trials: int, seed=0, settings=EXPERIMENT2_SETTINGS) -> list[dict]:
    """Mean inlier accuracy of the robust fit and Lloyd over ``trials`` draws per setting."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for index, setting in enumerate(settings):
        acc = np.array([experiment2_trial(setting, seed, t, index) for t in range(trials)])
        n_a, n_b, n_o, radius = setting
        rows.append({
            "n_a": n_a, "n_b": n_b, "n_o": n_o, "radius": radius, "trials": trials,
            "drkm_accuracy": math.fsum(acc[:, 0]) / trials,
            "km_accuracy": math.fsum(acc[:, 1]) / trials,
        })
    return rows


# experiment 1 --------------------------------------------------------------

EXPERIMENT1_WEIGHTS = (0.2, 0.26, 0.53)


def experiment1_mixture(rng, dim: int = 7, spread: float = 5.0) -> GmmSpec:
    """Three unit-scale components with means uniform on ``[-spread, spread]^dim``."""
    means = rng.uniform(-spread, spread, size=(len(EXPERIMENT1_WEIGHTS), dim))
    return GmmSpec.normalized([(m, 1.0, w) for m, w in zip(means, EXPERIMENT1_WEIGHTS)], dim)


def experiment1_trial(n: int, seed, trial: int, dim: int = 7, k: int = 3):
    """One draw at sample size ``n``: returns ``(drkm_wc_risk, km_wc_risk)``.

    The robust fit starts from the Lloyd solution, so its worst-case risk
    can only be lower at the shared radius.
    """
    rng = make_rng((seed, n, trial))
    spec = experiment1_mixture(rng, dim)
    data = sample_gmm(spec, n, rng)
    radius = preset_radius(n, dim)
    km = lloyd_fit(data, seed_kmeanspp(data, k, rng))
    dr = fit_joint(data, km.centroids, RobustConfig(radius=radius))
    return wc_risk(data, dr.centroids, radius).value, wc_risk(data, km.centroids, radius).value


def run_experiment1(n_values=(5, 10, 20, 30), trials: int = 30, seed=0) -> list[dict]:
    """Mean worst-case risk of both methods per sample size."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for n in n_values:
        vals = np.array([experiment1_trial(n, seed, t) for t in range(trials)])
        dr, km = math.fsum(vals[:, 0]) / trials, math.fsum(vals[:, 1]) / trials
        rows.append({"n": n, "trials": trials, "radius": preset_radius(n, 7),
                     "drkm_wc_risk": dr, "km_wc_risk": km, "gap": km - dr})
    return rows


# outlier recall ------------------------------------------------------------

def independent_coupling_bound(inliers: GmmSpec, outliers: GmmSpec) -> float:
    """Upper bound on W2 between two mixtures from the independent coupling.

    ``sqrt(|m_P - m_Q|^2 + tr Cov_P + tr Cov_Q)``; any coupling bounds W2
    from above, so a radius built on it stays valid.
    """
    def moments(spec):
        w = spec.weights
        means = np.stack([m for m, _, _ in spec.components])
        mean = w @ means
        second = math.fsum(wj * (m @ m + spec.dim * s * s) for (m, s, _), wj in zip(spec.components, w))
        return mean, second - mean @ mean

    mp, vp = moments(inliers)
    mq, vq = moments(outliers)
    return math.sqrt(float((mp - mq) @ (mp - mq)) + vp + vq)


def recall_trial(seed, trial: int, dim: int = 20, per_blob: int = 100,
                 fraction: float = 0.05, separation: float = 10.0, spread: float = 5.0):
    """Three unit blobs plus a broad outlier population of scale ``separation``.

    Returns ``(drkm_recall, lloyd_recall, radius)`` with ``z`` equal to the
    number of planted outliers and both methods started from the same
    k-means++ seeds.
    """
    rng = make_rng((seed, trial))
    means = rng.uniform(-spread, spread, size=(3, dim))
    inlier_spec = GmmSpec([(m, 1.0, 1.0 / 3.0) for m in means[:2]] + [(means[2], 1.0, 1.0 - 2.0 / 3.0)])
    outlier_spec = GmmSpec([(np.zeros(dim), separation, 1.0)])
    inliers = sample_gmm(inlier_spec, 3 * per_blob, rng)
    sample = inject_outliers(inliers, outlier_spec, fraction, rng)
    cfg = RadiusConfig(dim=dim, separation_D=independent_coupling_bound(inlier_spec, outlier_spec))
    radius = calibrate_radius_contaminated(sample.n_inliers, sample.n_outliers, cfg)
    truth = sample.outlier_indices
    init = seed_kmeanspp(sample.data, 3, rng)
    km = lloyd_fit(sample.data, init)
    dr = fit_joint(sample.data, init, RobustConfig(radius=radius))
    z = truth.size
    return (outlier_report(sample.data, dr, z, truth).recall,
            outlier_report(sample.data, km, z, truth).recall, radius)


def run_recall(trials: int = 50, seed=0, **kwargs) -> dict:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    vals = np.array([recall_trial(seed, t, **kwargs) for t in range(trials)])
    return {"trials": trials,
            "drkm_recall": math.fsum(vals[:, 0]) / trials,
            "km_recall": math.fsum(vals[:, 1]) / trials,
            "mean_radius": math.fsum(vals[:, 2]) / trials}
