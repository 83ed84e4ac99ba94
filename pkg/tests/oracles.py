"""Independent reference computations used by the tests."""

import itertools
import math

import numpy as np


def qp_by_enumeration(x, centers, gamma):
    """Minimise the per-point simplex QP by trying every support set.

    For each support the equality-constrained minimiser comes from the KKT
    system; the best feasible candidate wins. Exponential in K, exact.
    """
    x = np.asarray(x, float)
    centers = np.asarray(centers, float)
    k = len(centers)
    a = x[None, :] - centers
    cost = (a * a).sum(1)
    gram = a @ a.T
    w = 1.0 / (gamma - 1.0)

    def f(p):
        r = a.T @ p
        return cost @ p + w * (r @ r)

    best, arg = math.inf, None
    for size in range(1, k + 1):
        for supp in itertools.combinations(range(k), size):
            s = list(supp)
            m = len(s)
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = 2 * w * gram[np.ix_(s, s)]
            kkt[:m, m] = -1
            kkt[m, :m] = 1
            rhs = np.concatenate([-cost[s], [1.0]])
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            if np.any(sol[:m] < -1e-12):
                continue
            p = np.zeros(k)
            p[s] = np.maximum(sol[:m], 0)
            p /= p.sum()
            val = f(p)
            if val < best - 1e-15:
                best, arg = val, p
    return arg, best


def scalar_sup(x, mus, gamma):
    """sup over y of min_k (y - mu_k)^2 - gamma (y - x)^2 on the real line.

    On each Voronoi cell the function is a concave quadratic, so the sup
    is the best of the clipped per-cell maximisers.
    """
    mus = np.sort(np.asarray(mus, float))
    bounds = np.concatenate([[-math.inf], 0.5 * (mus[1:] + mus[:-1]), [math.inf]])
    best = -math.inf
    for k, mu in enumerate(mus):
        # derivative 2(y - mu) - 2 gamma (y - x) = 0
        y = (gamma * x - mu) / (gamma - 1)
        y = min(max(y, bounds[k]), bounds[k + 1])
        best = max(best, (y - mu) ** 2 - gamma * (y - x) ** 2)
    return best
