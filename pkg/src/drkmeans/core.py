"""Shared types, errors and the non-robust risk primitives.

Shapes used throughout the package:

* data: ``(N, d)``, one row per point.
* centers: ``(K, d)``, one row per centroid (the transpose of the usual
  ``d x K`` centroid matrix).
* assignment: ``(K, N)``, column ``n`` is the probability vector of point ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DimensionMismatchError(ValueError):
    pass


class EmptyClusterError(RuntimeError):
    """Raised by the centroid update when some cluster carries (almost) no mass."""

    def __init__(self, clusters, masses):
        self.clusters = list(clusters)
        self.masses = np.asarray(masses)
        super().__init__(f"empty clusters {self.clusters}")


class IllConditionedError(RuntimeError):
    pass


class GammaBoundaryError(RuntimeError):
    """The optimal dual multiplier sits at the excluded boundary gamma = 1."""


class QPConvergenceWarning(RuntimeWarning):
    pass


def as_points(x, name="data") -> np.ndarray:
    """Validate and return a float64 ``(N, d)`` array; 1-D input is one column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_dims(data: np.ndarray, centers: np.ndarray) -> None:
    if data.shape[1] != centers.shape[1]:
        raise DimensionMismatchError(
            f"data has dimension {data.shape[1]} but centers have {centers.shape[1]}"
        )


def as_assignment(pi, k: int, n: int, atol: float = 1e-9) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (k, n):
        raise DimensionMismatchError(f"assignment must have shape {(k, n)}, got {pi.shape}")
    if np.any(pi < -atol) or np.any(np.abs(pi.sum(axis=0) - 1.0) > atol):
        raise ValueError("assignment columns must lie in the probability simplex")
    return pi


def fsum_rows(values: np.ndarray) -> np.ndarray:
    """Correctly rounded sum over the first axis.

    The result does not depend on the order of the rows, which keeps fits
    bit-identical under a permutation of the data.
    """
    values = np.asarray(values, dtype=np.float64)
    flat = values.reshape(values.shape[0], -1)
    out = np.array([math.fsum(col) for col in flat.T])
    return out.reshape(values.shape[1:])


def sq_distances(data: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, shape ``(N, K)``."""
    diff = data[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def nearest_partition(data, centers) -> np.ndarray:
    """Index of the nearest centroid for every point; ties go to the lowest index."""
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    # argmin returns the first minimum, which is the tie-break we want
    return np.argmin(sq_distances(data, centers), axis=1)


def empirical_risk(data, centers) -> float:
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    dist = sq_distances(data, centers)
    labels = np.argmin(dist, axis=1)
    return math.fsum(dist[np.arange(len(data)), labels]) / len(data)


def surrogate_terms(data, centers, pi, gamma) -> np.ndarray:
    """Per-point value of the fixed-gamma surrogate (without the radius term)."""
    dist = sq_distances(data, centers)
    resid = data - np.einsum("kn,kd->nd", pi, centers)
    return np.einsum("nk,kn->n", dist, pi) + np.einsum("nd,nd->n", resid, resid) / (gamma - 1.0)


def surrogate_objective(data, centers, pi, gamma: float, radius: float = 0.0) -> float:
    """Surrogate objective J_gamma(M, Pi) plus the constant gamma * radius**2.

    Parameters
    ----------
    data : array_like, shape (N, d)
    centers : array_like, shape (K, d)
    pi : array_like, shape (K, N)
        Column-stochastic soft assignment.
    gamma : float
        Dual multiplier, must exceed 1.
    radius : float, default 0
        Ambiguity radius. With ``radius=0`` this is the objective minimised by
        the fixed-gamma block coordinate descent.
    """
    if not gamma > 1.0:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    pi = as_assignment(pi, len(centers), len(data))
    terms = surrogate_terms(data, centers, pi, gamma)
    return gamma * radius**2 + math.fsum(terms) / len(data)


@dataclass
class RobustConfig:
    """Settings for a robust fit.

    Exactly one of ``gamma`` (fixed multiplier) and ``radius`` (joint scheme)
    must be set.
    """

    gamma: float | None = None
    radius: float | None = None
    tol: float = 1e-6
    max_iter: int = 300
    entropy_lambda: float = 0.0
    qp_tol: float = 1e-9
    qp_max_iter: int = 10_000
    seed: int = 0
    gamma_cap: float = 1e8
    inner_tol: float = 1e-10
    inner_max_iter: int = 100

    def __post_init__(self):
        if (self.gamma is None) == (self.radius is None):
            raise ValueError("set exactly one of gamma or radius")
        if self.gamma is not None and not self.gamma > 1.0 + 1e-12:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")
        if self.radius is not None and not self.radius > 0.0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if self.entropy_lambda < 0.0:
            raise ValueError("entropy_lambda must be >= 0")
        if self.max_iter < 1 or self.qp_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class FitResult:
    centroids: np.ndarray
    assignment: np.ndarray
    gamma_final: float
    objective_trace: np.ndarray
    gamma_trace: np.ndarray
    worst_case_points: np.ndarray
    iterations: int
    converged: bool
    method: str = ""
    info: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        """Hard labels: largest assignment weight, ties to the lowest index."""
        return np.argmax(self.assignment, axis=0)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def relative_shift(old: np.ndarray, new: np.ndarray) -> float:
    """Stopping statistic max_k ||new_k - old_k|| / max_l ||old_l||."""
    num = np.max(np.sqrt(np.einsum("kd,kd->k", new - old, new - old)))
    den = np.max(np.sqrt(np.einsum("kd,kd->k", old, old)))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)
