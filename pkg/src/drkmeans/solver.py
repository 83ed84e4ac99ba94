"""Block coordinate descent for distributionally robust k-means.

Three variants share one loop:

* ``fit_fixed_gamma`` alternates the exact inner QP with the closed-form
  centroid step at a fixed multiplier.
* ``fit_joint`` minimises jointly over assignments and gamma in the inner
  step, which makes the logged objective the worst-case risk itself.
* ``fit_entropy`` adds an entropy bonus to the inner step.

Every trace starts with the objective at the initial centers, so a trace
has ``iterations + 1`` entries.
"""

from __future__ import annotations

import math

import numpy as np

from .assignment import solve_assignments, solve_assignments_entropy
from .core import (
    EmptyClusterError,
    FitResult,
    RobustConfig,
    as_points,
    check_dims,
    relative_shift,
)
from .seeding import make_rng, reseed_empty, seed_kmeanspp
from .update import centroid_update, centroid_update_partial, mean_residual

GAMMA_FLOOR = 1.0 + 1e-9


def _mean(values) -> float:
    return math.fsum(values) / len(values)


def _entropy_bonus(pi) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(pi > 0.0, pi * np.log(pi), 0.0).sum(axis=0)


def _mstep(data, pi, gamma, centers):
    """Centroid step with the empty-cluster policy applied."""
    try:
        return centroid_update(data, pi, gamma), []
    except EmptyClusterError as exc:
        empty = exc.clusters
    k = centers.shape[0]
    active = [j for j in range(k) if j not in set(empty)]
    new = centers.copy()
    if active:
        new[active] = centroid_update_partial(data, pi, gamma, active)
    return reseed_empty(data, new, empty), empty


def _init_centers(data, init, k, seed):
    if init is None:
        if k is None:
            raise ValueError("either init or k must be given")
        return seed_kmeanspp(data, k, make_rng(seed))
    centers = as_points(init, "init").copy()
    check_dims(data, centers)
    return centers


def _clamp_gamma(gamma, cap):
    return min(gamma, cap)


def fit_fixed_gamma(data, init=None, cfg: RobustConfig | None = None, k: int | None = None,
                    **kwargs) -> FitResult:
    """Fixed-gamma block coordinate descent.

    Each sweep solves the simplex QP for every point at the current centers,
    then moves the centers to the exact minimiser of the surrogate. The
    logged value is the envelope ``F_gamma(M_t)``.
    """
    cfg = cfg or RobustConfig(**kwargs)
    if cfg.gamma is None:
        raise ValueError("fit_fixed_gamma needs cfg.gamma")
    data = as_points(data)
    centers = _init_centers(data, init, k, cfg.seed)
    gamma = cfg.gamma

    def inner(m):
        return solve_assignments(data, m, gamma, cfg.qp_tol, cfg.qp_max_iter)

    sol = inner(centers)
    trace = [_mean(sol.e_values)]
    converged, it, reseeded = False, 0, []
    while it < cfg.max_iter:
        new, empty = _mstep(data, sol.pi, gamma, centers)
        reseeded += empty
        it += 1
        shift = relative_shift(centers, new)
        centers = new
        sol = inner(centers)
        trace.append(_mean(sol.e_values))
        if shift <= cfg.tol:
            converged = True
            break
    return FitResult(
        centroids=centers,
        assignment=sol.pi,
        gamma_final=gamma,
        objective_trace=np.array(trace),
        gamma_trace=np.full(len(trace), gamma),
        worst_case_points=sol.x_star,
        iterations=it,
        converged=converged,
        method="fixed_gamma",
        info={"reseeded": reseeded, "inner_converged": bool(sol.converged.all())},
    )


def _assignment_cost(data, centers, pi):
    diff = data[:, None, :] - centers[None, :, :]
    dist = np.einsum("nkd,nkd->nk", diff, diff)
    return np.einsum("nk,kn->n", dist, pi)


class _JointState:
    """Assignment solution at some gamma, split into its two parts."""

    def __init__(self, data, centers, sol, gamma):
        self.sol = sol
        self.cost = _mean(_assignment_cost(data, centers, sol.pi))
        self.msr = mean_residual(data, centers, sol.pi)

    def value(self, gamma, r2):
        return gamma * r2 + self.cost + self.msr / (gamma - 1.0)

    def best_gamma(self, radius, cap):
        # exact minimiser over (1, cap]; the boundary case falls back to the floor
        if self.msr == 0.0:
            return GAMMA_FLOOR
        return min(max(1.0 + math.sqrt(self.msr) / radius, GAMMA_FLOOR), cap)


def _joint_inner(data, centers, radius, gamma, cfg):
    """Alternate the assignment QP and the closed-form gamma step.

    The objective is jointly convex in (Pi, gamma), and both block steps are
    exact, so the alternation descends to the joint minimiser. It ends on a
    gamma step, leaving the multiplier optimal for the returned assignment.
    """
    r2 = radius**2

    def solve(g):
        sol = solve_assignments(data, centers, g, cfg.qp_tol, cfg.qp_max_iter)
        return _JointState(data, centers, sol, g)

    state = solve(gamma)
    value = state.value(gamma, r2)
    for _ in range(cfg.inner_max_iter):
        gamma = state.best_gamma(radius, cfg.gamma_cap)
        at_gamma = state.value(gamma, r2)
        cand = solve(gamma)
        cand_value = cand.value(gamma, r2)
        if cand_value <= at_gamma:
            state, new_value = cand, cand_value
        else:
            new_value = at_gamma
        decrease = value - new_value
        value = new_value
        if decrease <= cfg.inner_tol * max(1.0, abs(value)):
            break
    gamma = state.best_gamma(radius, cfg.gamma_cap)
    return state.sol, gamma, state.value(gamma, r2)


def _initial_gamma(data, centers, radius, cap):
    diff = data[:, None, :] - centers[None, :, :]
    risk = _mean(np.einsum("nkd,nkd->nk", diff, diff).min(axis=1))
    if risk == 0.0:
        return GAMMA_FLOOR
    return _clamp_gamma(1.0 + math.sqrt(risk) / radius, cap)


def fit_joint(data, init=None, cfg: RobustConfig | None = None, k: int | None = None,
              **kwargs) -> FitResult:
    """Block coordinate descent on the worst-case risk for a given radius.

    The inner step jointly minimises over the soft assignment and gamma;
    the outer step is the centroid update at the current gamma. The logged
    value ``gamma r^2 + mean_n e_n`` is the worst-case risk of the current
    centers (up to the inner tolerance) and never increases.
    """
    cfg = cfg or RobustConfig(**kwargs)
    if cfg.radius is None:
        raise ValueError("fit_joint needs cfg.radius")
    data = as_points(data)
    centers = _init_centers(data, init, k, cfg.seed)
    radius = cfg.radius

    gamma = _initial_gamma(data, centers, radius, cfg.gamma_cap)
    sol, gamma, value = _joint_inner(data, centers, radius, gamma, cfg)
    trace, gammas = [value], [gamma]
    converged, it, reseeded = False, 0, []
    while it < cfg.max_iter:
        new, empty = _mstep(data, sol.pi, gamma, centers)
        reseeded += empty
        it += 1
        shift = relative_shift(centers, new)
        centers = new
        sol, gamma, value = _joint_inner(data, centers, radius, gamma, cfg)
        trace.append(value)
        gammas.append(gamma)
        if shift <= cfg.tol:
            converged = True
            break
    x_star = data + (data - np.einsum("kn,kd->nd", sol.pi, centers)) / (gamma - 1.0)
    return FitResult(
        centroids=centers,
        assignment=sol.pi,
        gamma_final=gamma,
        objective_trace=np.array(trace),
        gamma_trace=np.array(gammas),
        worst_case_points=x_star,
        iterations=it,
        converged=converged,
        method="joint_gamma",
        info={"reseeded": reseeded, "radius": radius, "boundary": gamma <= GAMMA_FLOOR},
    )


def entropic_objective(e_values, pi, lam) -> float:
    """Mean of f_n(pi_n) - lam * H(pi_n)."""
    return _mean(e_values + lam * _entropy_bonus(pi))


def fit_entropy(data, init=None, cfg: RobustConfig | None = None, k: int | None = None,
                **kwargs) -> FitResult:
    """Fixed-gamma descent with an entropy-regularised assignment step.

    The centroid step is unchanged because the entropy only involves the
    assignment. The logged value is the regularised envelope
    ``F_gamma^lambda(M_t)``.
    """
    cfg = cfg or RobustConfig(**kwargs)
    if cfg.gamma is None or not cfg.entropy_lambda > 0.0:
        raise ValueError("fit_entropy needs cfg.gamma and cfg.entropy_lambda > 0")
    data = as_points(data)
    centers = _init_centers(data, init, k, cfg.seed)
    gamma, lam = cfg.gamma, cfg.entropy_lambda

    def inner(m):
        return solve_assignments_entropy(data, m, gamma, lam, qp_tol=cfg.qp_tol,
                                         qp_max_iter=cfg.qp_max_iter)

    sol = inner(centers)
    trace = [entropic_objective(sol.e_values, sol.pi, lam)]
    converged, it = False, 0
    while it < cfg.max_iter:
        # entropy keeps every mass positive, so no cluster can empty out
        new = centroid_update(data, sol.pi, gamma)
        it += 1
        shift = relative_shift(centers, new)
        centers = new
        sol = inner(centers)
        trace.append(entropic_objective(sol.e_values, sol.pi, lam))
        if shift <= cfg.tol:
            converged = True
            break
    return FitResult(
        centroids=centers,
        assignment=sol.pi,
        gamma_final=gamma,
        objective_trace=np.array(trace),
        gamma_trace=np.full(len(trace), gamma),
        worst_case_points=sol.x_star,
        iterations=it,
        converged=converged,
        method="entropy",
        info={"lambda": lam},
    )


def fit(data, k: int, cfg: RobustConfig, init=None) -> FitResult:
    """Dispatch on the configuration: radius -> joint, lambda -> entropy, else fixed gamma."""
    if cfg.radius is not None:
        return fit_joint(data, init, cfg, k=k)
    if cfg.entropy_lambda > 0.0:
        return fit_entropy(data, init, cfg, k=k)
    return fit_fixed_gamma(data, init, cfg, k=k)
