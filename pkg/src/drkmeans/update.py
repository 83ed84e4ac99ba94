"""Closed-form outer blocks: the centroid step and the gamma step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import (
    EmptyClusterError,
    GammaBoundaryError,
    IllConditionedError,
    as_assignment,
    as_points,
    fsum_rows,
)


@dataclass
class MStepSystem:
    """Sufficient statistics of the centroid step.

    Attributes
    ----------
    s : ndarray, shape (K,)
        Cluster masses ``sum_n pi_kn``.
    G : ndarray, shape (K, K)
        ``sum_n pi_n pi_n^T``.
    B : ndarray, shape (K, d)
        Row ``k`` is ``sum_n pi_kn x_n``.
    """

    s: np.ndarray
    G: np.ndarray
    B: np.ndarray

    def matrix(self, gamma: float) -> np.ndarray:
        return (gamma - 1.0) * np.diag(self.s) + self.G


def mstep_system(data, pi) -> MStepSystem:
    data = as_points(data)
    pi = np.asarray(pi, dtype=np.float64)
    as_assignment(pi, pi.shape[0], data.shape[0])
    # per-point outer products, then an order-independent reduction
    s = fsum_rows(pi.T)
    G = fsum_rows(pi.T[:, :, None] * pi.T[:, None, :])
    B = fsum_rows(pi.T[:, :, None] * data[:, None, :])
    G = 0.5 * (G + G.T)
    return MStepSystem(s, G, B)


def _solve_spd(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(a, lower=True), rhs)
    except LinAlgError:
        pass
    jitter = 1e-12 * np.trace(a) / a.shape[0]
    try:
        return cho_solve(cho_factor(a + jitter * np.eye(a.shape[0]), lower=True), rhs)
    except LinAlgError as exc:
        raise IllConditionedError("centroid system is not positive definite") from exc


def centroid_update(data, pi, gamma: float, mass_floor: float | None = None) -> np.ndarray:
    """Minimise the surrogate over the centers for a fixed soft assignment.

    Setting the gradient with respect to every center to zero gives the
    K x K linear system ``[(gamma - 1) diag(s) + G] M = gamma B`` (centers
    as rows), which is symmetric positive definite when all masses are
    positive.

    Raises
    ------
    EmptyClusterError
        If a cluster mass is at or below ``mass_floor`` (default ``1e-10 * N``).
    IllConditionedError
        If the Cholesky factorisation fails even after a diagonal jitter.
    """
    if not gamma > 1.0:
        raise ValueError(f"gamma must be > 1, got {gamma}")
    data = as_points(data)
    system = mstep_system(data, pi)
    floor = 1e-10 * data.shape[0] if mass_floor is None else mass_floor
    empty = np.flatnonzero(system.s <= floor)
    if empty.size:
        raise EmptyClusterError(empty, system.s[empty])
    return _solve_spd(system.matrix(gamma), gamma * system.B)


def centroid_update_partial(data, pi, gamma: float, active) -> np.ndarray:
    """Centroid step restricted to ``active`` clusters; the others keep zero weight."""
    data = as_points(data)
    active = np.asarray(active)
    system = mstep_system(data, pi)
    s = system.s[active]
    G = system.G[np.ix_(active, active)]
    B = system.B[active]
    return _solve_spd((gamma - 1.0) * np.diag(s) + G, gamma * B)


def mean_residual(data, centers, pi) -> float:
    """(1/N) sum_n ||x_n - M pi_n||^2."""
    data = as_points(data)
    centers = as_points(centers, "centers")
    resid = data - np.einsum("kn,kd->nd", np.asarray(pi, dtype=np.float64), centers)
    return math.fsum(np.einsum("nd,nd->n", resid, resid)) / data.shape[0]


def gamma_update(data, centers, pi, radius: float) -> float:
    """Closed-form minimiser over gamma of gamma r^2 + mean residual / (gamma - 1).

    Raises :class:`GammaBoundaryError` when every residual is zero, where the
    infimum is only approached as gamma decreases to 1.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be > 0, got {radius}")
    msr = mean_residual(data, centers, pi)
    if msr == 0.0:
        raise GammaBoundaryError("all residuals vanish; optimal gamma is the boundary 1")
    return 1.0 + math.sqrt(msr) / radius
