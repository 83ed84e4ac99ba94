"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances, instance counts and runtime limits are fixed here; a failing
criterion shows up as a failing test and a FAIL line in the summary.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from drkmeans.assignment import (
    e_value_bruteforce,
    grid_step,
    scalar_closed_form,
    solve_assignment,
    solve_assignments,
)
from drkmeans.bench import run_experiment1, run_experiment2, run_recall
from drkmeans.core import RobustConfig, empirical_risk, surrogate_objective
from drkmeans.risk import dual_curve, risk_sandwich_check, w2_empirical_1d, wc_risk
from drkmeans.seeding import lloyd_fit, make_rng, seed_kmeanspp
from drkmeans.solver import fit_entropy, fit_fixed_gamma, fit_joint
from drkmeans.update import centroid_update

from conftest import blobs, three_blobs

pytestmark = pytest.mark.acceptance


def random_blobs(rng, n_per=None, k=None, d=None):
    k = k or int(rng.integers(2, 5))
    d = d or int(rng.integers(1, 4))
    per = n_per or int(rng.integers(8, 25))
    centers = rng.uniform(-6, 6, (k, d))
    return blobs(rng, centers, per), k


def test_c01_scalar_oracle(criterion):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_pi = worst_x = 0.0
    done = 0
    while done < 1000:
        k = int(rng.integers(2, 7))
        mus = np.sort(rng.uniform(-5, 5, k))
        if np.min(np.diff(mus)) < 0.05:
            continue
        gamma = rng.uniform(1.01, 10.0)
        x = rng.uniform(-6, 6)
        ref = scalar_closed_form(x, mus, gamma)
        sol = solve_assignment([x], mus[:, None], gamma)
        worst_pi = max(worst_pi, np.abs(sol.pi - ref.pi).max())
        worst_x = max(worst_x, abs(sol.x_star[0] - ref.x_star[0]))
        done += 1
    elapsed = time.perf_counter() - t0
    ok = worst_pi <= 1e-7 and worst_x <= 1e-7 and elapsed < 10
    criterion(1, ok, f"scalar oracle: max|dpi|={worst_pi:.2e} max|dx*|={worst_x:.2e} "
                     f"in {elapsed:.1f}s (limits 1e-7, 1e-7, 10s)")
    assert ok


def test_c02_bruteforce_sup(criterion):
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(200):
        d = 1 + i % 2
        k = int(rng.integers(1, 5))
        centers = rng.uniform(-3, 3, (k, d))
        x = rng.uniform(-3, 3, d)
        gamma = 1.0 + 10 ** rng.uniform(-1, 1)
        sol = solve_assignment(x, centers, gamma)
        hw = 2.0 * (1.0 + np.linalg.norm(x - sol.pi @ centers) / (gamma - 1.0))
        m = 2001 if d == 1 else 401
        brute = e_value_bruteforce(x, centers, gamma, box_halfwidth=hw, grid_points_per_dim=m,
                                   center=sol.x_star)
        bound = 10 * grid_step(hw, m) ** 2 * gamma
        worst = max(worst, abs(brute - sol.e_value) / bound)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 60
    criterion(2, ok, f"brute-force sup: max |e - brute| / bound = {worst:.3f} "
                     f"in {elapsed:.1f}s (limits 1, 60s)")
    assert ok


def test_c03_mstep(criterion):
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst_fd = worst_lim = 0.0
    h = 1e-5
    for _ in range(100):
        n, k, d = int(rng.integers(10, 40)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        data = rng.standard_normal((n, d)) * 2
        pi = rng.dirichlet(np.ones(k), size=n).T
        gamma = 1.0 + 10 ** rng.uniform(-1, 1)
        m = centroid_update(data, pi, gamma)
        j = surrogate_objective(data, m, pi, gamma)
        grad = np.zeros_like(m)
        for idx in np.ndindex(*m.shape):
            up, dn = m.copy(), m.copy()
            up[idx] += h
            dn[idx] -= h
            grad[idx] = (surrogate_objective(data, up, pi, gamma)
                         - surrogate_objective(data, dn, pi, gamma)) / (2 * h)
        worst_fd = max(worst_fd, np.abs(grad).max() / (1 + abs(j)))
        means = (pi @ data) / pi.sum(1)[:, None]
        worst_lim = max(worst_lim, np.abs(centroid_update(data, pi, 1e8) - means).max())
    elapsed = time.perf_counter() - t0
    ok = worst_fd <= 1e-5 and worst_lim <= 1e-6 and elapsed < 30
    criterion(3, ok, f"M-step: max FD grad/(1+J)={worst_fd:.2e}, gamma=1e8 vs means "
                     f"{worst_lim:.2e} in {elapsed:.1f}s (limits 1e-5, 1e-6, 30s)")
    assert ok


def test_c04_monotone_descent(criterion):
    rng = np.random.default_rng(404)
    t0 = time.perf_counter()
    worst = {"fixed": -np.inf, "joint": -np.inf, "entropy": -np.inf}
    for _ in range(50):
        data, k = random_blobs(rng)
        init = seed_kmeanspp(data, k, rng)
        gamma = 1.0 + 10 ** rng.uniform(-1.5, 1)
        a = fit_fixed_gamma(data, init, RobustConfig(gamma=gamma))
        b = fit_joint(data, init, RobustConfig(radius=10 ** rng.uniform(-1.5, 0.5)))
        c = fit_entropy(data, init, RobustConfig(gamma=gamma, entropy_lambda=10 ** rng.uniform(-3, 0)))
        worst["fixed"] = max(worst["fixed"], np.diff(a.objective_trace).max(initial=-np.inf))
        worst["joint"] = max(worst["joint"], np.diff(b.objective_trace).max(initial=-np.inf))
        worst["entropy"] = max(worst["entropy"], np.diff(c.objective_trace).max(initial=-np.inf))
    elapsed = time.perf_counter() - t0
    ok = (worst["fixed"] <= 1e-10 and worst["joint"] <= 1e-9 and worst["entropy"] <= 1e-9
          and elapsed < 120)
    criterion(4, ok, "descent: largest trace increase fixed={fixed:.1e} joint={joint:.1e} "
                     "entropy={entropy:.1e}".format(**worst)
              + f" in {elapsed:.1f}s (limits 1e-10, 1e-9, 1e-9, 120s)")
    assert ok


def test_c05_kkt_fixed_point(criterion):
    # "at convergence": fits run to a tight stopping tolerance
    rng = np.random.default_rng(505)
    worst_c = worst_g = 0.0
    interior = 0
    for _ in range(20):
        data, k = random_blobs(rng)
        init = seed_kmeanspp(data, k, rng)
        for res in (fit_fixed_gamma(data, init, RobustConfig(gamma=1.0 + rng.uniform(0.1, 3), tol=1e-9)),
                    fit_joint(data, init, RobustConfig(radius=rng.uniform(0.1, 2), tol=1e-9))):
            pi, xs = res.assignment, res.worst_case_points
            resid = np.linalg.norm(res.centroids - (pi @ xs) / pi.sum(1)[:, None], axis=1).max()
            worst_c = max(worst_c, resid)
            if res.method == "joint_gamma" and not res.info["boundary"]:
                interior += 1
                r = res.info["radius"]
                msr = np.mean(np.sum((data - pi.T @ res.centroids) ** 2, 1))
                worst_g = max(worst_g, abs(res.gamma_final - (1 + math.sqrt(msr) / r)) / res.gamma_final)
    ok = worst_c <= 1e-6 and worst_g <= 1e-6 and interior > 0
    criterion(5, ok, f"KKT: centroid residual {worst_c:.2e}, gamma relative residual "
                     f"{worst_g:.2e} over {interior} interior joint fits (limits 1e-6, 1e-6)")
    assert ok


def test_c06_lloyd_recovery(criterion):
    worst = 0.0
    for s in range(20):
        data = three_blobs(600 + s)
        init = seed_kmeanspp(data, 3, make_rng(s))
        a = fit_fixed_gamma(data, init, RobustConfig(gamma=1e8))
        b = lloyd_fit(data, init)
        rel = np.linalg.norm(a.centroids - b.centroids, axis=1).max() / np.linalg.norm(b.centroids, axis=1).max()
        worst = max(worst, rel)
    ok = worst <= 1e-4
    criterion(6, ok, f"Lloyd recovery at gamma=1e8: max relative centroid gap {worst:.2e} (limit 1e-4)")
    assert ok


def test_c07_k1_closed_form(criterion):
    rng = np.random.default_rng(707)
    worst_v = worst_g = 0.0
    for _ in range(50):
        n, d = int(rng.integers(2, 40)), int(rng.integers(1, 5))
        data = rng.standard_normal((n, d)) * rng.uniform(0.2, 5)
        mu = rng.standard_normal((1, d))
        r = 10 ** rng.uniform(-1.5, 1)
        risk = empirical_risk(data, mu)
        res = wc_risk(data, mu, r)
        worst_v = max(worst_v, abs(res.value - (r + math.sqrt(risk)) ** 2) / (r + math.sqrt(risk)) ** 2)
        g = 1 + math.sqrt(risk) / r
        worst_g = max(worst_g, abs(res.gamma_star - g) / g)
    ok = worst_v <= 1e-6 and worst_g <= 1e-6
    criterion(7, ok, f"K=1: relative error value {worst_v:.2e}, gamma* {worst_g:.2e} (limit 1e-6)")
    assert ok


def test_c08_sandwich_and_convexity(criterion):
    rng = np.random.default_rng(808)
    convex = 0
    failures = []
    for i in range(50):
        n, k, d = int(rng.integers(5, 30)), int(rng.integers(1, 5)), int(rng.integers(1, 4))
        data = rng.standard_normal((n, d)) * 2
        mu = rng.standard_normal((k, d)) * 2
        r = 10 ** rng.uniform(-2, 1)
        try:
            risk_sandwich_check(data, mu, r, rel_tol=1e-7)
        except AssertionError as exc:
            failures.append(str(exc))
        curve = dual_curve(data, mu, r, np.linspace(1.1, 10.0, 30))
        convex += curve.is_midpoint_convex(rel_tol=1e-7)
    ok = not failures and convex == 50
    criterion(8, ok, f"sandwich violations {len(failures)}/50, convex dual curves {convex}/50")
    assert ok, failures[:3]


def test_c09_mixture_bound(criterion):
    rng = np.random.default_rng(909)
    worst = -np.inf
    for i in range(500):
        lam = (1 + i % 9) / 10
        na, nb = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        xa, xb = rng.standard_normal(na), rng.standard_normal(nb) * 3 + rng.uniform(-5, 5)
        wa, wb = rng.dirichlet(np.ones(na)), rng.dirichlet(np.ones(nb))
        mix = (np.concatenate([xa, xb]), np.concatenate([(1 - lam) * wa, lam * wb]))
        lhs = w2_empirical_1d((xa, wa), mix)
        rhs = math.sqrt(lam) * w2_empirical_1d((xa, wa), (xb, wb))
        worst = max(worst, lhs - rhs)
    ok = worst <= 1e-9
    criterion(9, ok, f"mixture bound: max W2(mu, mix) - sqrt(lam) W2(mu, nu) = {worst:.2e} (limit 1e-9)")
    assert ok


def test_c10_experiment2(criterion):
    t0 = time.perf_counter()
    row = run_experiment2(200, seed=0, settings=((20, 20, 5, 2.25),))[0]
    elapsed = time.perf_counter() - t0
    dr, km = row["drkm_accuracy"], row["km_accuracy"]
    ok = dr >= km and abs(dr - 0.86) <= 0.08 and abs(km - 0.78) <= 0.10 and elapsed < 300
    criterion(10, ok, f"two blobs + outliers: DRKM {dr:.3f} (0.86+-0.08), KM {km:.3f} (0.78+-0.10) "
                      f"in {elapsed:.1f}s")
    assert ok


def test_c11_experiment1(criterion):
    t0 = time.perf_counter()
    rows = run_experiment1((5, 10, 20, 30), trials=30, seed=0)
    elapsed = time.perf_counter() - t0
    gaps = {r["n"]: r["gap"] for r in rows}
    ok = all(g >= 0 for g in gaps.values()) and gaps[5] > gaps[30] and elapsed < 600
    shown = ", ".join(f"n={n}: {g:.3f}" for n, g in gaps.items())
    criterion(11, ok, f"worst-case risk gap KM - DRKM: {shown} in {elapsed:.1f}s")
    assert ok


def test_c12_outlier_recall(criterion):
    out = run_recall(50, seed=0, separation=10.0)
    ok = out["drkm_recall"] >= out["km_recall"] and out["drkm_recall"] >= 0.95
    criterion(12, ok, f"recall DRKM {out['drkm_recall']:.3f} vs Lloyd {out['km_recall']:.3f} "
                      f"(radius ~{out['mean_radius']:.2f}; need DRKM >= Lloyd and >= 0.95)")
    assert ok


def test_c13_entropy_bias(criterion):
    rng = np.random.default_rng(1313)
    lo, hi = np.inf, -np.inf
    for _ in range(30):
        data, k = random_blobs(rng)
        init = seed_kmeanspp(data, k, rng)
        gamma = 1 + 10 ** rng.uniform(-1, 1)
        lam = 10 ** rng.uniform(-3, 0)
        res = fit_entropy(data, init, RobustConfig(gamma=gamma, entropy_lambda=lam))
        # correctly rounded mean, the same reduction the trace uses
        e = solve_assignments(data, res.centroids, gamma, qp_tol=1e-12).e_values
        f = math.fsum(e) / len(e)
        gap = f - res.objective_trace[-1]
        lo = min(lo, gap)
        hi = max(hi, gap - lam * math.log(k))
    ok = lo >= 0 and hi <= 1e-9
    criterion(13, ok, f"entropy bias: min gap {lo:.2e} (>= 0), max gap - lam log K {hi:.2e} (<= 1e-9)")
    assert ok


def _cli(args, cwd):
    proc = subprocess.run([sys.executable, "-m", "drkmeans", *map(str, args)], cwd=cwd,
                          capture_output=True)
    return proc.returncode, proc.stdout, proc.stderr


def test_c14_cli_determinism(criterion, tmp_path):
    data = three_blobs(1414, per=20)
    np.savetxt(tmp_path / "d.csv", data, delimiter=",", fmt="%.17g")
    (tmp_path / "g.json").write_text(json.dumps(
        {"components": [{"mean": [0, 0], "scale": 1, "weight": 0.5},
                        {"mean": [5, 5], "scale": 0.5, "weight": 0.5}]}))
    (tmp_path / "t.csv").write_text("0\n1\n")
    commands = {
        "fit-gamma": (["fit", "--input", "d.csv", "--k", 3, "--gamma", 1.5, "--seed", 7,
                       "--soft", "--worst-case", "--output", "OUT"], "OUT"),
        "fit-radius": (["fit", "--input", "d.csv", "--k", 3, "--radius", 0.8, "--seed", 7,
                        "--standardize", "--output", "OUT"], "OUT"),
        "fit-entropy": (["fit", "--input", "d.csv", "--k", 3, "--gamma", 2, "--entropy-lambda",
                         0.1, "--init", "random", "--output", "OUT"], "OUT"),
        "baseline": (["baseline", "--input", "d.csv", "--k", 3, "--seed", 7, "--output", "OUT"], "OUT"),
        "wc-risk": (["wc-risk", "--input", "d.csv", "--centroids", "base.json", "--radius", 0.5,
                     "--curve", "OUT"], "OUT"),
        "outliers": (["outliers", "--input", "d.csv", "--fit", "base.json", "--z", 3,
                      "--truth", "t.csv", "--output", "OUT"], "OUT"),
        "calibrate": (["calibrate-radius", "--n", 100, "--dim", 7, "--n2", 5, "--sep-D", 2], None),
        "synth": (["synth", "--spec", "g.json", "--n", 50, "--seed", 3, "--output", "OUT"], "OUT"),
        "bench": (["bench", "--experiment", 2, "--trials", 3, "--seed", 1, "--output", "OUT"], "OUT"),
    }
    code, _, err = _cli(["baseline", "--input", "d.csv", "--k", 3, "--output", "base.json"], tmp_path)
    assert code == 0, err
    mismatched = []
    for name, (args, out) in commands.items():
        blobs_ = []
        for i, threads in enumerate((1, 2, 1)):
            target = f"{name}.{i}"
            argv = ["--threads", threads] + [target if a == "OUT" else a for a in args]
            code, stdout, err = _cli(argv, tmp_path)
            assert code == 0, (name, err)
            blobs_.append(stdout + ((tmp_path / target).read_bytes() if out else b""))
        if len(set(blobs_)) != 1:
            mismatched.append(name)
    ok = not mismatched
    criterion(14, ok, f"CLI determinism: {len(commands) - len(mismatched)}/{len(commands)} "
                      f"commands byte-identical across 3 runs with --threads 1/2/1")
    assert ok, mismatched
