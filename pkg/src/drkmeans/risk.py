"""Worst-case risk through the one-dimensional dual, radius calibration and
an exact 1-D W2 distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_assignments
from .core import as_points, check_dims, empirical_risk

GAMMA_LOWER = 1.0 + 1e-9
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SandwichViolation(AssertionError):
    pass


@dataclass
class WcRiskResult:
    value: float
    gamma_star: float
    boundary: bool
    evaluations: int

    def __iter__(self):
        # allows ``value, gamma = wc_risk(...)``
        return iter((self.value, self.gamma_star))


@dataclass
class DualCurve:
    gammas: np.ndarray
    values: np.ndarray

    def is_midpoint_convex(self, rel_tol: float = 1e-7) -> bool:
        """Check f(mid) <= average of the endpoints on every consecutive triple.

        For a non-uniform grid the comparison uses the linear interpolant of
        the two outer points, which is what convexity requires.
        """
        g, v = self.gammas, self.values
        if len(g) < 3:
            return True
        scale = 1.0 + np.abs(v).max()
        left, mid, right = g[:-2], g[1:-1], g[2:]
        wts = (mid - left) / (right - left)
        chord = (1.0 - wts) * v[:-2] + wts * v[2:]
        return bool(np.all(v[1:-1] <= chord + rel_tol * scale))


def dual_value(data, centers, radius: float, gamma: float, qp_tol: float = 1e-12) -> float:
    """D(gamma) = gamma r^2 + (1/N) sum_n e_n(gamma, M)."""
    sol = solve_assignments(data, centers, gamma, qp_tol=qp_tol)
    return gamma * radius**2 + math.fsum(sol.e_values) / len(sol.e_values)


def dual_curve(data, centers, radius: float, gammas) -> DualCurve:
    gammas = np.asarray(gammas, dtype=np.float64)
    if np.any(gammas <= 1.0):
        raise ValueError("all gammas must exceed 1")
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)
    values = np.array([dual_value(data, centers, radius, g) for g in gammas])
    if not np.all(np.isfinite(values)):
        raise FloatingPointError("non-finite dual value")
    return DualCurve(gammas, values)


def _golden(fun, lo, hi, tol):
    """Golden-section minimisation of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fun(d)
    return (c, fc) if fc <= fd else (d, fd)


def wc_risk(data, centers, radius: float, gamma_tol: float = 1e-8,
            gamma_max: float = 1e14) -> WcRiskResult:
    """Worst-case clustering risk over the W2 ball of the given radius.

    Minimises the convex dual ``D(gamma)`` over ``(1, gamma_max]``. The
    upper end of the bracket is found by doubling from 2 until D increases;
    golden-section search then runs on ``t = log(gamma - 1)``, which keeps
    the relative accuracy on gamma at ``gamma_tol`` across many decades.
    ``boundary`` is set when the minimiser hugs gamma = 1, where the value
    is an infimum rather than a minimum.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be > 0, got {radius}")
    data = as_points(data)
    centers = as_points(centers, "centers")
    check_dims(data, centers)

    cache = {}

    def dval(t):
        if t not in cache:
            val = dual_value(data, centers, radius, 1.0 + math.exp(t))
            if not math.isfinite(val):
                raise FloatingPointError(f"non-finite dual value at gamma={1.0 + math.exp(t)}")
            cache[t] = val
        return cache[t]

    t_lo = math.log(GAMMA_LOWER - 1.0)
    t_max = math.log(gamma_max - 1.0)
    # doubling gamma from 2: gamma_j = 2^j, t_j = log(2^j - 1)
    j = 1
    prev_t, cur_t = t_lo, 0.0
    while True:
        nxt_t = math.log(2.0 ** (j + 1) - 1.0)
        if nxt_t >= t_max:
            hi_t = t_max
            break
        if dval(nxt_t) > dval(cur_t):
            hi_t = nxt_t
            break
        prev_t, cur_t = cur_t, nxt_t
        j += 1
    # D is convex, so the minimiser lies between the point before the last
    # non-increase and the first increase
    lo_t = prev_t
    t_star, value = _golden(dval, lo_t, hi_t, gamma_tol)
    # the edges are candidates too
    for t_edge in (lo_t, hi_t):
        if dval(t_edge) < value:
            t_star, value = t_edge, dval(t_edge)
    gamma_star = 1.0 + math.exp(t_star)
    return WcRiskResult(value, gamma_star, gamma_star < 1.0 + 1e-6, len(cache))


def risk_sandwich_check(data, centers, radius: float, rel_tol: float = 1e-7):
    """Return ``(Risk, WC-Risk, (r + sqrt(Risk))^2)`` and check their ordering.

    Raises :class:`SandwichViolation` naming the broken side.
    """
    lower = empirical_risk(data, centers)
    wc = wc_risk(data, centers, radius).value
    upper = (radius + math.sqrt(lower)) ** 2
    slack = rel_tol * max(1.0, upper)
    if wc < lower - slack:
        raise SandwichViolation(f"lower side broken: wc_risk={wc!r} < risk={lower!r}")
    if wc > upper + slack:
        raise SandwichViolation(f"upper side broken: wc_risk={wc!r} > bound={upper!r}")
    return lower, wc, upper


# radius calibration --------------------------------------------------------

@dataclass
class RadiusConfig:
    """Inputs of the high-confidence radius formula.

    ``fg_C`` and ``fg_c`` are the concentration constants, which depend on
    the data distribution and are not known in closed form. ``scale``
    multiplies every radius; with ``fg_C = fg_c = 1``, ``eps = exp(-1)`` and
    ``scale = 10`` the formula gives the preset ``10 * N**(-1/d)``.
    """

    confidence_eps: float = math.exp(-1.0)
    fg_C: float = 1.0
    fg_c: float = 1.0
    alpha: float = 4.0
    dim: int = 1
    contamination: float = 0.0
    separation_D: float = 0.0
    scale: float = 1.0
    caveats: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not 0.0 < self.confidence_eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.confidence_eps}")
        if not self.alpha > 2.0:
            raise ValueError(f"alpha must exceed 2, got {self.alpha}")
        if not (self.fg_C > 0.0 and self.fg_c > 0.0):
            raise ValueError("concentration constants must be positive")
        if not 0.0 <= self.contamination < 1.0:
            raise ValueError("contamination must lie in [0, 1)")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.separation_D < 0.0 or not self.scale > 0.0:
            raise ValueError("separation_D must be >= 0 and scale > 0")


def radius_caveats(n: int, cfg: RadiusConfig, eps: float | None = None) -> list[str]:
    """Notes on when the calibrated radius is outside its proven regime."""
    eps = cfg.confidence_eps if eps is None else eps
    notes = []
    if cfg.dim <= 4:
        notes.append("dim<=4: concentration rate proven for dim>4 only")
    threshold = math.log(cfg.fg_C / eps) / cfg.fg_c
    if n < threshold:
        notes.append(f"n<{threshold:.6g}: small-sample branch with exponent 1/alpha")
    return notes


def _radius(n: int, eps: float, cfg: RadiusConfig) -> float:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    log_term = math.log(cfg.fg_C / eps)
    base = log_term / (cfg.fg_c * n)
    if base <= 0.0:
        # C <= eps: the bound holds for every radius
        return 0.0
    # the branch switch at n = log(C/eps)/c is discontinuous by design
    exponent = 1.0 / cfg.dim if n >= log_term / cfg.fg_c else 1.0 / cfg.alpha
    return cfg.scale * base**exponent


def calibrate_radius(n: int, cfg: RadiusConfig) -> float:
    """High-confidence W2 radius for ``n`` i.i.d. samples.

    Returns ``scale * (log(C/eps) / (c n))**(1/d)`` when
    ``n >= log(C/eps)/c`` and the same base to the power ``1/alpha``
    otherwise.
    """
    return _radius(n, cfg.confidence_eps, cfg)


def calibrate_radius_contaminated(n1: int, n2: int, cfg: RadiusConfig) -> float:
    """Radius covering the inlier law when ``n2`` of ``n1 + n2`` points are outliers.

    ``r(n1, eps/2) + sqrt(c) * (D + r(n1, eps/2) + r(n2, eps/2))`` with
    ``c = n2 / (n1 + n2)`` and ``D = cfg.separation_D``.
    """
    if n1 < 1 or n2 < 0:
        raise ValueError("need n1 >= 1 and n2 >= 0")
    half = cfg.confidence_eps / 2.0
    r1 = _radius(n1, half, cfg)
    if n2 == 0:
        return r1
    c = n2 / (n1 + n2)
    r2 = _radius(n2, half, cfg)
    return r1 + math.sqrt(c) * (cfg.separation_D + r1 + r2)


def preset_radius(n: int, dim: int, scale: float = 10.0) -> float:
    """The experiment preset ``scale * (1/n)**(1/dim)``."""
    return scale * (1.0 / n) ** (1.0 / dim)


# exact 1-D W2 --------------------------------------------------------------

def _as_measure(m):
    if isinstance(m, tuple):
        pts, wts = m
    else:
        pts = m
        wts = None
    pts = np.asarray(pts, dtype=np.float64).ravel()
    if wts is None:
        wts = np.full(pts.size, 1.0 / pts.size)
    wts = np.asarray(wts, dtype=np.float64).ravel()
    if pts.size != wts.size or pts.size == 0:
        raise ValueError("points and weights must be non-empty and of equal length")
    if np.any(wts < 0.0):
        raise ValueError("weights must be nonnegative")
    if abs(math.fsum(wts) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {math.fsum(wts)!r}")
    order = np.argsort(pts, kind="stable")
    return pts[order], wts[order]


def w2_empirical_1d(a, b) -> float:
    """Exact W2 distance between two discrete measures on the real line.

    Each argument is either an array of equally weighted points or a
    ``(points, weights)`` pair. The optimal coupling in one dimension is
    the monotone one, so the cost integrates the squared gap between the two
    quantile functions over the merged CDF breakpoints.
    """
    xa, wa = _as_measure(a)
    xb, wb = _as_measure(b)
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    # breakpoints that differ only by cumsum rounding are the same breakpoint;
    # left apart they leave slivers whose cost the square root magnifies
    snap = 8.0 * np.finfo(np.float64).eps * (len(xa) + len(xb))
    merged = []
    for u in np.union1d(ca, cb):
        if merged and u - merged[-1] <= snap:
            merged[-1] = u
        else:
            merged.append(u)
    levels = np.array(merged)
    widths = np.diff(np.concatenate([[0.0], levels]))
    # quantile on each piece (u_{j-1}, u_j]: first atom whose CDF reaches u_j
    ia = np.minimum(np.searchsorted(ca, levels - snap, side="left"), len(xa) - 1)
    ib = np.minimum(np.searchsorted(cb, levels - snap, side="left"), len(xb) - 1)
    cost = math.fsum(widths * (xa[ia] - xb[ib]) ** 2)
    return math.sqrt(max(cost, 0.0))
