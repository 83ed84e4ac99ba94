"""k-means++ seeding and the Lloyd baseline."""

from __future__ import annotations

import math

import numpy as np

from .core import (
    FitResult,
    as_points,
    check_dims,
    empirical_risk,
    relative_shift,
    sq_distances,
)


def make_rng(seed=None) -> np.random.Generator:
    """PCG64 generator; a Generator passes through unchanged.

    ``seed`` may also be a tuple such as ``(seed, trial)`` to derive an
    independent stream per trial.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, tuple):
        seed = np.random.SeedSequence(list(seed))
    return np.random.Generator(np.random.PCG64(seed))


def seed_kmeanspp(data, k: int, rng=None) -> np.ndarray:
    """Pick ``k`` data points as initial centers by D^2 sampling.

    The first center is uniform over the points; each further center is
    drawn with probability proportional to the squared distance to the
    closest center chosen so far. If fewer than ``k`` distinct points exist
    the remaining centers are drawn uniformly.
    """
    data = as_points(data)
    n = data.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={n}")
    rng = make_rng(rng)
    idx = [int(rng.integers(n))]
    closest = sq_distances(data, data[idx[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = math.fsum(closest)
        if total > 0.0:
            u = rng.random() * total
            cum = np.cumsum(closest)
            j = int(np.searchsorted(cum, u, side="right"))
            j = min(j, n - 1)
            # guard against landing on a zero-weight point through rounding
            while closest[j] == 0.0:
                j -= 1
        else:
            j = int(rng.integers(n))
        idx.append(j)
        closest = np.minimum(closest, sq_distances(data, data[j][None, :])[:, 0])
    return data[idx].copy()


def seed_random(data, k: int, rng=None) -> np.ndarray:
    """``k`` distinct data points chosen uniformly at random."""
    data = as_points(data)
    if k < 1 or k > data.shape[0]:
        raise ValueError(f"need 1 <= k <= N, got k={k}, N={data.shape[0]}")
    rng = make_rng(rng)
    return data[rng.choice(data.shape[0], size=k, replace=False)].copy()


def reseed_empty(data: np.ndarray, centers: np.ndarray, empty) -> np.ndarray:
    """Move each empty centroid onto the point farthest from its nearest live center."""
    centers = centers.copy()
    empty = list(empty)
    live = [k for k in range(len(centers)) if k not in set(empty)]
    if live:
        cost = sq_distances(data, centers[live]).min(axis=1)
    else:
        cost = np.zeros(len(data))
    for k in empty:
        j = int(np.argmax(cost))
        centers[k] = data[j]
        cost = np.minimum(cost, sq_distances(data, data[j][None, :])[:, 0])
    return centers


def lloyd_fit(data, init, tol: float = 1e-6, max_iter: int = 300) -> FitResult:
    """Classical Lloyd iteration from the given initial centers.

    Stops when the largest centroid move relative to the largest centroid
    norm drops to ``tol`` or after ``max_iter`` updates. Empty clusters are
    re-seeded at the point with the largest current cost.
    """
    data = as_points(data)
    centers = as_points(init, "init").copy()
    check_dims(data, centers)
    n, k = data.shape[0], centers.shape[0]

    trace = [empirical_risk(data, centers)]
    converged = False
    it = 0
    while it < max_iter:
        labels = np.argmin(sq_distances(data, centers), axis=1)
        onehot = np.zeros((k, n))
        onehot[labels, np.arange(n)] = 1.0
        counts = onehot.sum(axis=1)
        new = centers.copy()
        for j in range(k):
            if counts[j] > 0:
                new[j] = data[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            new = reseed_empty(data, new, empty)
        it += 1
        shift = relative_shift(centers, new)
        centers = new
        trace.append(empirical_risk(data, centers))
        if shift <= tol:
            converged = True
            break

    labels = np.argmin(sq_distances(data, centers), axis=1)
    assignment = np.zeros((k, n))
    assignment[labels, np.arange(n)] = 1.0
    return FitResult(
        centroids=centers,
        assignment=assignment,
        gamma_final=math.inf,
        objective_trace=np.array(trace),
        gamma_trace=np.array([]),
        worst_case_points=data.copy(),
        iterations=it,
        converged=converged,
        method="lloyd",
    )
