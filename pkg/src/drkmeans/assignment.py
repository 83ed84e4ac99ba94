"""Inner step: the per-point simplex QP, its entropic variant and oracles.

For a point ``x`` and centers ``mu_1..mu_K`` the soft assignment minimises

    f(pi) = sum_k pi_k ||x - mu_k||^2 + ||x - M pi||^2 / (gamma - 1)

over the probability simplex. Writing ``a_k = x - mu_k`` gives
``x - M pi = sum_k pi_k a_k`` on the simplex, so the quadratic part only
involves the Gram matrix of the ``a_k``. Every routine here works row by row:
the result for one point never depends on the other points of a batch.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import QPConvergenceWarning, as_points, check_dims

_SUPPORT_EPS = 1e-7
_EPS = np.finfo(np.float64).eps


@dataclass
class InnerSolution:
    pi: np.ndarray
    x_star: np.ndarray
    e_value: float
    converged: bool = True
    iterations: int = 0


@dataclass
class BatchSolution:
    pi: np.ndarray  # (K, N)
    x_star: np.ndarray  # (N, d)
    e_values: np.ndarray  # (N,)
    converged: np.ndarray  # (N,) bool
    iterations: np.ndarray  # (N,) int


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row of ``v`` onto the probability simplex."""
    v = np.atleast_2d(v)
    k = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = u - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(v.shape[0]), rho] / (rho + 1.0)
    p = np.maximum(v - theta[:, None], 0.0)
    # v - theta cancels when |v| is large; restore the unit sum
    return p / p.sum(axis=1, keepdims=True)


def _check_gamma(gamma):
    if not gamma > 1.0:
        raise ValueError(f"gamma must be > 1, got {gamma}")


def _geometry(data, centers):
    diff = data[:, None, :] - centers[None, :, :]  # (N, K, d), a_k per point
    cost = np.einsum("nkd,nkd->nk", diff, diff)
    gram = np.einsum("nkd,njd->nkj", diff, diff)
    return diff, cost, gram


def _values(cost, gram, w, pi):
    # pi: (N, K)
    quad = np.einsum("nk,nkj,nj->n", pi, gram, pi)
    return np.einsum("nk,nk->n", cost, pi) + w * quad


def _grads(cost, gram, w, pi):
    return cost + 2.0 * w * np.einsum("nkj,nj->nk", gram, pi)


def kkt_residual(grad: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """max over supported k of g_k minus min_j g_j, row-wise."""
    gmin = grad.min(axis=1)
    supp = np.where(pi > _SUPPORT_EPS, grad, -np.inf)
    return np.maximum(supp.max(axis=1) - gmin, 0.0)


def _kkt_ok(grad, pi, tol, floor=0.0):
    scale = 1.0 + np.abs(grad).max(axis=1)
    return kkt_residual(grad, pi) <= tol * scale + floor


def _rounding_floor(gram, w):
    # the 2w * Gram @ pi part of the gradient carries about eps * 2w * |Gram|
    # of rounding, which no iterate can beat once gamma is close to 1
    k = gram.shape[-1]
    return 100.0 * k * _EPS * 2.0 * w * np.abs(gram).max(axis=(1, 2))


def _polish(cost_n, gram_n, w, pi_n):
    """Solve the equality-constrained QP on the current support exactly."""
    supp = np.flatnonzero(pi_n > 0.0)
    m = len(supp)
    kkt = np.zeros((m + 1, m + 1))
    # rows divided by 2w so large w does not swamp the constraint row
    kkt[:m, :m] = gram_n[np.ix_(supp, supp)]
    kkt[:m, m] = 1.0 / (2.0 * w)
    kkt[m, :m] = 1.0
    rhs = np.concatenate([-cost_n[supp] / (2.0 * w), [1.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    p = sol[:m]
    if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
        return None
    p = np.maximum(p, 0.0)
    p /= p.sum()
    out = np.zeros_like(pi_n)
    out[supp] = p
    return out


def _active_set(cost_n, gram_n, w, pi_n, tol, floor, max_iter=None):
    """Primal active-set solve of one QP, warm-started at a feasible ``pi_n``.

    Works on f / (2w) = pi' G pi / 2 + pi' cost / (2w), whose Hessian is the
    Gram matrix itself, so the step lengths do not degrade as gamma -> 1 the
    way gradient steps do. Zero-curvature directions on the free face (G has
    rank <= d) are followed to the next bound. Stops on the same KKT test as
    the gradient solver.
    """
    k = len(cost_n)
    max_iter = max_iter or 20 * k + 50
    b = cost_n / (2.0 * w)
    g_scale = max(np.abs(gram_n).max(), np.finfo(np.float64).tiny)
    flat = 1e3 * _EPS * k * g_scale
    # times 2w this stays below the rounding floor of the KKT test
    pull = 10.0 * _EPS * k * g_scale
    pi = pi_n.copy()
    free = pi > 0.0
    for _ in range(max_iter):
        grad = 2.0 * w * (gram_n @ pi + b)
        if _kkt_ok(grad[None, :], pi[None, :], tol, floor)[0]:
            return pi, True
        f_idx = np.flatnonzero(free)
        q = gram_n @ pi + b
        direction = np.zeros(len(f_idx))
        ray = False
        if len(f_idx) > 1:
            # orthonormal basis of {p : sum p = 0} on the free coordinates
            basis = np.linalg.qr(np.ones((len(f_idx), 1)), mode="complete")[0][:, 1:]
            hess = basis.T @ gram_n[np.ix_(f_idx, f_idx)] @ basis
            red = basis.T @ q[f_idx]
            evals, vecs = np.linalg.eigh(hess)
            coef = vecs.T @ red
            curved = evals > flat
            null_pull = ~curved & (np.abs(coef) > pull)
            if np.any(null_pull):
                direction = -basis @ (vecs[:, null_pull] @ coef[null_pull])
                ray = True
            else:
                direction = -basis @ (vecs[:, curved] @ (coef[curved] / evals[curved]))
        if np.abs(direction).max(initial=0.0) <= 64.0 * _EPS:
            # stationary on this face: release the bound with the most negative multiplier
            nu = q[f_idx].min()
            mult = np.where(free, np.inf, q - nu)
            j = int(np.argmin(mult))
            if not mult[j] < 0.0:
                return pi, False
            free[j] = True
            continue
        neg = direction < 0.0
        steps = np.full(len(f_idx), np.inf)
        steps[neg] = -pi[f_idx][neg] / direction[neg]
        j = int(np.argmin(steps))
        alpha = steps[j] if ray else min(1.0, steps[j])
        pi[f_idx] = pi[f_idx] + alpha * direction
        if alpha == steps[j]:
            pi[f_idx[j]] = 0.0
            free[f_idx[j]] = False
        pi = np.maximum(pi, 0.0)
        pi /= pi.sum()
    grad = 2.0 * w * (gram_n @ pi + b)
    return pi, bool(_kkt_ok(grad[None, :], pi[None, :], tol, floor)[0])


def _solve_two(cost, gram, w, centers):
    # pi = (t, 1 - t); f is a scalar quadratic in t
    a22, a12 = gram[:, 1, 1], gram[:, 0, 1]
    sep = centers[1] - centers[0]
    curv = np.full(len(cost), sep @ sep)  # ||a_1 - a_2||^2
    lin = (cost[:, 0] - cost[:, 1]) + 2.0 * w * (a12 - a22)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -lin / (2.0 * w * curv)
    # coincident centers: the objective is flat in t, keep the lower index
    t = np.where(curv > 0.0, t, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.stack([t, 1.0 - t], axis=1)


def _solve_apg(cost, gram, w, tol, max_iter, polish_every=10, exact_after=200):
    n, k = cost.shape
    lam_max = np.linalg.eigvalsh(gram)[:, -1]
    lip = 2.0 * w * np.maximum(lam_max, 0.0) * (1.0 + 1e-9) + 1e-300
    step = 1.0 / lip

    # start at the nearest center
    pi = np.zeros((n, k))
    pi[np.arange(n), np.argmin(cost, axis=1)] = 1.0
    prev = pi.copy()
    tk = np.ones(n)
    fval = _values(cost, gram, w, pi)
    floor = _rounding_floor(gram, w)
    done = _kkt_ok(_grads(cost, gram, w, pi), pi, tol, floor)
    iters = np.zeros(n, dtype=int)
    tried = np.zeros(n, dtype=bool)

    for it in range(1, max_iter + 1):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        c, g, s = cost[act], gram[act], step[act]
        p, pp, t = pi[act], prev[act], tk[act]
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        y = p + beta[:, None] * (p - pp)
        cand = project_simplex(y - s[:, None] * _grads(c, g, w, y))
        fc = _values(c, g, w, cand)
        bad = fc > fval[act]
        if np.any(bad):
            # non-monotone step: restart momentum with a plain projected step
            pb = p[bad]
            cand[bad] = project_simplex(pb - s[bad, None] * _grads(c[bad], g[bad], w, pb))
            fc[bad] = _values(c[bad], g[bad], w, cand[bad])
            t_next[bad] = 1.0
        prev[act] = p
        pi[act] = cand
        tk[act] = t_next
        fval[act] = fc
        iters[act] = it
        grad = _grads(c, g, w, cand)
        ok = _kkt_ok(grad, cand, tol, floor[act])
        if it % polish_every == 0:
            for j in np.flatnonzero(~ok):
                row = act[j]
                q = _polish(cost[row], gram[row], w, pi[row])
                if q is None:
                    continue
                gq = _grads(cost[row : row + 1], gram[row : row + 1], w, q[None, :])
                fq = _values(cost[row : row + 1], gram[row : row + 1], w, q[None, :])[0]
                if _kkt_ok(gq, q[None, :], tol, floor[row])[0] and fq <= fval[row] + 1e-15 * (1.0 + abs(fval[row])):
                    pi[row] = q
                    fval[row] = fq
                    ok[j] = True
        if it >= exact_after:
            # first-order progress stalls when gamma is near 1; finish exactly
            for j in np.flatnonzero(~ok & ~tried[act]):
                row = act[j]
                tried[row] = True
                q, good = _active_set(cost[row], gram[row], w, pi[row], tol, floor[row])
                fq = _values(cost[row : row + 1], gram[row : row + 1], w, q[None, :])[0]
                if good and fq <= fval[row] + 1e-12 * (1.0 + abs(fval[row])):
                    pi[row] = q
                    fval[row] = fq
                    ok[j] = True
        done[act] = ok
    return pi, done, iters


def solve_assignments(data, centers, gamma: float, qp_tol: float = 1e-9,
                      qp_max_iter: int = 10_000) -> BatchSolution:
    """Solve the inner simplex QP for every row of ``data``.

    Returns the assignment as a ``(K, N)`` matrix together with the
    worst-case points and per-point values. Points whose solve hits
    ``qp_max_iter`` trigger a :class:`QPConvergenceWarning`.
    """
    _check_gamma(gamma)
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    n, k = data.shape[0], centers.shape[0]
    w = 1.0 / (gamma - 1.0)
    _, cost, gram = _geometry(data, centers)

    if k == 1:
        pi = np.ones((n, 1))
        done, iters = np.ones(n, dtype=bool), np.zeros(n, dtype=int)
    elif k == 2:
        pi = _solve_two(cost, gram, w, centers)
        done, iters = np.ones(n, dtype=bool), np.zeros(n, dtype=int)
    else:
        pi, done, iters = _solve_apg(cost, gram, w, qp_tol, qp_max_iter)
        if not np.all(done):
            warnings.warn(
                f"inner QP did not reach tolerance {qp_tol} for {int((~done).sum())} "
                f"point(s) within {qp_max_iter} iterations",
                QPConvergenceWarning,
                stacklevel=2,
            )
    e_values = _values(cost, gram, w, pi)
    x_star = _worst_case(data, centers, pi.T, gamma)
    return BatchSolution(pi.T.copy(), x_star, e_values, done, iters)


def solve_assignment(x, centers, gamma: float, qp_tol: float = 1e-9,
                     qp_max_iter: int = 10_000) -> InnerSolution:
    """Single-point version of :func:`solve_assignments`."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    res = solve_assignments(x[None, :], centers, gamma, qp_tol, qp_max_iter)
    return InnerSolution(res.pi[:, 0], res.x_star[0], float(res.e_values[0]),
                         bool(res.converged[0]), int(res.iterations[0]))


# entropy-regularised inner step -------------------------------------------

def _entropy_term(pi):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pi > 0.0, pi * np.log(pi), 0.0).sum(axis=-1)


def entropy_residual(grad, pi, lam):
    """Spread of g_k + lam * log(pi_k) over coordinates with pi_k > 0."""
    with np.errstate(divide="ignore"):
        h = np.where(pi > 0.0, grad + lam * np.log(np.where(pi > 0.0, pi, 1.0)), np.nan)
    return np.nanmax(h, axis=1) - np.nanmin(h, axis=1)


def _entropy_start(cost, gram, w, lam, pi_qp):
    """Log-weights built from the QP solution and first-order optimality."""
    g = _grads(cost, gram, w, pi_qp)
    nu = g.min(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        top = np.log(pi_qp.max(axis=1, keepdims=True))
        theta = np.where(pi_qp > 0.0, np.log(np.where(pi_qp > 0.0, pi_qp, 1.0)),
                         top - (g - nu) / lam)
    return theta


def _entropy_scale(grad, lam, theta):
    return 1.0 + np.abs(grad).max() + lam * np.abs(theta).max()


def _entropy_newton(cost_n, gram_n, w, lam, theta, tol, max_iter):
    """Newton's method on the optimality system in log-weights.

    Unknowns are theta_k = log pi_k and a multiplier kappa with
    ``g_k(pi) + lam * theta_k = kappa`` and ``sum_k pi_k = 1``. A coordinate
    with negligible weight has Jacobian row ~ ``lam * e_k``, so its
    log-weight lands on the right value in a single step even when the
    weight itself underflows.
    """
    k = len(cost_n)
    q = 2.0 * w * gram_n

    def residual(th, kap):
        pi = np.exp(th)
        grad = cost_n + q @ pi
        return np.concatenate([grad + lam * th - kap, [pi.sum() - 1.0]]), pi, grad

    pi = np.exp(theta)
    grad = cost_n + q @ pi
    kappa = float(np.sum(pi * (grad + lam * theta)) / pi.sum())
    res, pi, grad = residual(theta, kappa)
    for it in range(max_iter):
        h = grad + lam * theta
        if h.max() - h.min() <= tol * _entropy_scale(grad, lam, theta) and abs(res[-1]) <= 1e-12:
            return pi / pi.sum(), True, it
        jac = np.zeros((k + 1, k + 1))
        jac[:k, :k] = q * pi[None, :] + lam * np.eye(k)
        jac[:k, k] = -1.0
        jac[k, :k] = pi
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        norm0 = np.abs(res).max()
        t = 1.0
        while t > 1e-12:
            th_new = theta + t * step[:k]
            # keep exp() finite; weights above one are never optimal
            th_new = np.minimum(th_new, 1.0)
            kap_new = kappa + t * step[k]
            res_new, pi_new, grad_new = residual(th_new, kap_new)
            if np.abs(res_new).max() <= (1.0 - 1e-4 * t) * norm0 or norm0 < 1e-13:
                break
            t *= 0.5
        else:
            break
        theta, kappa, res, pi, grad = th_new, kap_new, res_new, pi_new, grad_new
    # judge the normalised weights
    theta = theta - np.log(pi.sum())
    pi = np.exp(theta)
    grad = cost_n + q @ pi
    h = grad + lam * theta
    ok = h.max() - h.min() <= tol * _entropy_scale(grad, lam, theta)
    return pi / pi.sum(), bool(ok), it


def solve_assignments_entropy(data, centers, gamma: float, lam: float, tol: float = 1e-10,
                              max_iter: int = 500, qp_tol: float = 1e-9,
                              qp_max_iter: int = 10_000) -> BatchSolution:
    """Minimise f(pi) - lam * H(pi) over the simplex for every point.

    The unregularised QP solution provides the starting point, with the
    zero coordinates filled in from the first-order optimality condition;
    a damped Newton iteration on the simplex then drives the spread of
    ``g_k + lam * log(pi_k)`` below ``tol * (1 + max|g| + lam * max|log pi|)``.

    ``e_values`` holds f(pi) only, without the entropy term.
    """
    _check_gamma(gamma)
    if not lam > 0.0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    n, k = data.shape[0], centers.shape[0]
    w = 1.0 / (gamma - 1.0)
    _, cost, gram = _geometry(data, centers)
    if k == 1:
        pi = np.ones((n, 1))
        done, iters = np.ones(n, dtype=bool), np.zeros(n, dtype=int)
    else:
        base = solve_assignments(data, centers, gamma, qp_tol, qp_max_iter).pi.T
        start = _entropy_start(cost, gram, w, lam, base)
        pi = np.empty_like(start)
        done = np.empty(n, dtype=bool)
        iters = np.empty(n, dtype=int)
        for i in range(n):
            pi[i], done[i], iters[i] = _entropy_newton(cost[i], gram[i], w, lam, start[i], tol, max_iter)
        if not np.all(done):
            warnings.warn(
                f"entropic inner step did not reach tolerance {tol} for "
                f"{int((~done).sum())} point(s)",
                QPConvergenceWarning,
                stacklevel=2,
            )
    e_values = _values(cost, gram, w, pi)
    x_star = _worst_case(data, centers, pi.T, gamma)
    return BatchSolution(pi.T.copy(), x_star, e_values, done, iters)


def solve_assignment_entropy(x, centers, gamma: float, lam: float, tol: float = 1e-10,
                             max_iter: int = 500) -> InnerSolution:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    res = solve_assignments_entropy(x[None, :], centers, gamma, lam, tol, max_iter)
    return InnerSolution(res.pi[:, 0], res.x_star[0], float(res.e_values[0]),
                         bool(res.converged[0]), int(res.iterations[0]))


def inner_objective(x, centers, gamma, pi) -> float:
    """f(pi) for a single point, evaluated directly from its definition."""
    x = np.asarray(x, dtype=np.float64)
    centers = as_points(centers, "centers")
    pi = np.asarray(pi, dtype=np.float64)
    dist = ((x[None, :] - centers) ** 2).sum(axis=1)
    r = x - pi @ centers
    return float(dist @ pi + r @ r / (gamma - 1.0))


def entropy(pi) -> float:
    return float(-_entropy_term(np.asarray(pi, dtype=np.float64)))


# worst-case points ---------------------------------------------------------

def _worst_case(data, centers, pi_kn, gamma):
    mix = np.einsum("kn,kd->nd", pi_kn, centers)
    return data + (data - mix) / (gamma - 1.0)


def worst_case_points(data, centers, pi, gamma: float) -> np.ndarray:
    """Shift each point away from its averaged center: x + (x - M pi) / (gamma - 1)."""
    _check_gamma(gamma)
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    pi = np.asarray(pi, dtype=np.float64).reshape(centers.shape[0], data.shape[0])
    return _worst_case(data, centers, pi, gamma)


# scalar closed form --------------------------------------------------------

def scalar_closed_form(x: float, mu_sorted, gamma: float) -> InnerSolution:
    """Closed-form saddle point for one-dimensional data.

    Each centroid owns an interval around it where the assignment is
    one-hot; between neighbours lies an interval of half-width
    ``(mu_{k+1} - mu_k) / (2 gamma)`` around the midpoint where the worst-case
    point sits exactly on the midpoint and the weight is split linearly.
    Points on a shared boundary are put in the midpoint interval.
    """
    _check_gamma(gamma)
    mu = np.asarray(mu_sorted, dtype=np.float64).ravel()
    if mu.size < 1 or not np.all(np.isfinite(mu)):
        raise ValueError("centroids must be finite and non-empty")
    if np.any(np.diff(mu) <= 0.0):
        raise ValueError("centroids must be strictly increasing")
    x = float(x)
    k = mu.size
    pi = np.zeros(k)
    for j in range(k - 1):
        mid = 0.5 * (mu[j] + mu[j + 1])
        half = 0.5 * (mu[j + 1] - mu[j])
        if abs(x - mid) <= half / gamma:
            q = (x - mid) / half
            pi[j] = 0.5 * (1.0 - gamma * q)
            pi[j + 1] = 0.5 * (1.0 + gamma * q)
            x_star = mid
            break
    else:
        # the one-hot intervals tile what is left
        j = int(np.searchsorted(0.5 * (mu[:-1] + mu[1:]), x))
        pi[j] = 1.0
        x_star = x + (x - mu[j]) / (gamma - 1.0)
    m = np.atleast_2d(mu).T
    e = inner_objective(np.array([x]), m, gamma, pi)
    return InnerSolution(pi, np.array([x_star]), e)


# brute-force oracle --------------------------------------------------------

def e_value_bruteforce(x, centers, gamma: float, box_halfwidth: float | None = None,
                       grid_points_per_dim: int = 2001, center=None) -> float:
    """Grid search for sup_x' min_k ||x' - mu_k||^2 - gamma ||x' - x||^2.

    Test oracle for d <= 2. The grid is a box around ``center`` (by default
    the analytic worst-case point); an odd number of points per axis keeps
    the box center on the grid.
    """
    _check_gamma(gamma)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    centers = as_points(centers, "centers")
    d = x.size
    if d > 2:
        raise ValueError("brute-force oracle supports d <= 2 only")
    if centers.shape[1] != d:
        raise ValueError("dimension mismatch")
    if center is None or box_halfwidth is None:
        sol = solve_assignment(x, centers, gamma)
        if center is None:
            center = sol.x_star
        if box_halfwidth is None:
            box_halfwidth = 2.0 * (1.0 + np.linalg.norm(x - sol.pi @ centers) / (gamma - 1.0))
    m = int(grid_points_per_dim) | 1
    axes = [np.linspace(c - box_halfwidth, c + box_halfwidth, m) for c in np.atleast_1d(center)]
    if d == 1:
        rows = [axes[0][:, None]]
    else:
        rows = [np.stack([np.full(m, a), axes[1]], axis=1) for a in axes[0]]
    best = -math.inf
    for pts in rows:
        dist = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        val = dist - gamma * ((pts - x) ** 2).sum(axis=1)
        best = max(best, float(val.max()))
    return best


def grid_step(box_halfwidth: float, grid_points_per_dim: int) -> float:
    m = int(grid_points_per_dim) | 1
    return 2.0 * box_halfwidth / (m - 1)


__all__ = [
    "InnerSolution",
    "BatchSolution",
    "project_simplex",
    "solve_assignments",
    "solve_assignment",
    "solve_assignments_entropy",
    "solve_assignment_entropy",
    "scalar_closed_form",
    "worst_case_points",
    "e_value_bruteforce",
    "inner_objective",
    "kkt_residual",
    "entropy",
]
