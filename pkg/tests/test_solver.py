import math

import numpy as np
import pytest

from drkmeans.core import RobustConfig, empirical_risk, surrogate_objective
from drkmeans.assignment import solve_assignments
from drkmeans.seeding import lloyd_fit, make_rng, seed_kmeanspp
from drkmeans.solver import fit, fit_entropy, fit_fixed_gamma, fit_joint

from conftest import blobs, three_blobs


def kkt_centroid_residual(res):
    pi, xs = res.assignment, res.worst_case_points
    return np.linalg.norm(res.centroids - (pi @ xs) / pi.sum(1)[:, None], axis=1).max()


def rel_dist(a, b):
    return np.linalg.norm(a - b, axis=1).max() / np.linalg.norm(b, axis=1).max()


@pytest.fixture
def blob_data():
    data = three_blobs(11)
    return data, seed_kmeanspp(data, 3, make_rng(11))


def test_fixed_gamma_descent_and_trace_shape(blob_data):
    data, init = blob_data
    res = fit_fixed_gamma(data, init, RobustConfig(gamma=1.3))
    assert res.converged
    assert len(res.objective_trace) == res.iterations + 1
    assert np.all(np.diff(res.objective_trace) <= 1e-10)
    assert res.method == "fixed_gamma"
    # the logged value is the surrogate at the returned state
    assert res.objective_trace[-1] == pytest.approx(
        surrogate_objective(data, res.centroids, res.assignment, 1.3), rel=1e-12)


def test_fixed_gamma_kkt_fixed_point(blob_data):
    data, init = blob_data
    res = fit_fixed_gamma(data, init, RobustConfig(gamma=1.5, tol=1e-9))
    assert kkt_centroid_residual(res) <= 1e-6


def test_large_gamma_recovers_lloyd(blob_data):
    data, init = blob_data
    a = fit_fixed_gamma(data, init, RobustConfig(gamma=1e8))
    b = lloyd_fit(data, init)
    assert rel_dist(a.centroids, b.centroids) <= 1e-4


def test_symmetric_two_point_fixed_point():
    data = np.array([[-1.0], [1.0]])
    res = fit_fixed_gamma(data, np.array([[-1.0], [1.0]]), RobustConfig(gamma=2.0))
    assert res.iterations == 1
    assert np.allclose(res.centroids.ravel(), [-1.0, 1.0], rtol=0, atol=1e-14)


def test_joint_k1_closed_form(rng):
    data = rng.standard_normal((25, 3)) * 2 + 1
    r = 0.8
    res = fit_joint(data, data[:1], RobustConfig(radius=r))
    risk = empirical_risk(data, data.mean(0, keepdims=True))
    assert res.objective_trace[-1] == pytest.approx((r + math.sqrt(risk)) ** 2, rel=1e-9)
    assert res.gamma_final == pytest.approx(1 + math.sqrt(risk) / r, rel=1e-9)


def test_joint_tiny_radius_recovers_lloyd(blob_data):
    data, init = blob_data
    a = fit_joint(data, init, RobustConfig(radius=1e-9))
    b = lloyd_fit(data, init)
    assert rel_dist(a.centroids, b.centroids) <= 1e-4


def test_joint_two_blobs_converges():
    data = blobs(np.random.default_rng(2), [[-3.0, 0.0], [3.0, 0.0]], per=40)
    res = fit_joint(data, seed_kmeanspp(data, 2, make_rng(2)), RobustConfig(radius=0.5))
    assert res.converged and res.iterations <= 100
    assert np.all(np.diff(res.objective_trace) <= 1e-9)
    assert len(res.gamma_trace) == len(res.objective_trace)


def test_joint_trace_is_the_dual_value(blob_data):
    data, init = blob_data
    r = 0.7
    res = fit_joint(data, init, RobustConfig(radius=r))
    sol = solve_assignments(data, res.centroids, res.gamma_final)
    assert res.objective_trace[-1] == pytest.approx(
        res.gamma_final * r * r + sol.e_values.mean(), rel=1e-9)


def test_joint_kkt_fixed_point(blob_data):
    data, init = blob_data
    res = fit_joint(data, init, RobustConfig(radius=1.0, tol=1e-9))
    assert kkt_centroid_residual(res) <= 1e-6
    msr = np.mean(np.sum((data - res.assignment.T @ res.centroids) ** 2, 1))
    assert abs(res.gamma_final - (1 + math.sqrt(msr))) <= 1e-6 * res.gamma_final


def test_joint_boundary_when_everything_fits():
    # every point sits on a center: residuals vanish, gamma goes to the floor
    data = np.array([[0.0], [0.0], [4.0], [4.0]])
    res = fit_joint(data, np.array([[0.0], [4.0]]), RobustConfig(radius=0.5))
    assert res.info["boundary"]
    assert res.objective_trace[-1] == pytest.approx(0.25, rel=1e-6)


def test_entropy_descent_and_small_lambda(blob_data):
    data, init = blob_data
    res = fit_entropy(data, init, RobustConfig(gamma=1.5, entropy_lambda=0.05))
    assert np.all(np.diff(res.objective_trace) <= 1e-9)
    tiny = fit_entropy(data, init, RobustConfig(gamma=1.5, entropy_lambda=1e-8))
    plain = fit_fixed_gamma(data, init, RobustConfig(gamma=1.5))
    assert rel_dist(tiny.centroids, plain.centroids) <= 1e-4


def test_entropy_huge_lambda_uniform(blob_data):
    data, init = blob_data
    res = fit_entropy(data, init, RobustConfig(gamma=1.5, entropy_lambda=1e6, max_iter=5))
    assert np.abs(res.assignment - 1 / 3).max() <= 1e-3


def test_entropy_bias_bound(blob_data):
    data, init = blob_data
    lam = 0.2
    res = fit_entropy(data, init, RobustConfig(gamma=1.5, entropy_lambda=lam))
    f = solve_assignments(data, res.centroids, 1.5).e_values.mean()
    gap = f - res.objective_trace[-1]
    assert 0 <= gap <= lam * math.log(3) + 1e-9


def test_local_linear_rate():
    data = three_blobs(5, per=40)
    opt = fit_fixed_gamma(data, seed_kmeanspp(data, 3, make_rng(5)),
                          RobustConfig(gamma=1.4, tol=1e-13, max_iter=2000))
    start = opt.centroids + 0.3 * np.random.default_rng(0).standard_normal(opt.centroids.shape)
    run = fit_fixed_gamma(data, start, RobustConfig(gamma=1.4, tol=1e-12, max_iter=500))
    err = run.objective_trace - opt.objective_trace[-1]
    err = err[err > 1e-11]
    ratios = err[1:] / err[:-1]
    assert len(ratios) >= 3
    assert np.median(ratios) <= 0.95


@pytest.mark.parametrize("mode", ["fixed", "joint", "entropy"])
def test_permutation_equivariance(mode):
    data = three_blobs(8, per=20)
    init = seed_kmeanspp(data, 3, make_rng(8))
    perm = np.random.default_rng(1).permutation(len(data))
    cfg = {"fixed": RobustConfig(gamma=1.5), "joint": RobustConfig(radius=0.8),
           "entropy": RobustConfig(gamma=1.5, entropy_lambda=0.1)}[mode]
    a = fit(data, 3, cfg, init=init)
    b = fit(data[perm], 3, cfg, init=init)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignment[:, perm], b.assignment)
    assert np.array_equal(a.objective_trace, b.objective_trace)
    assert a.gamma_final == b.gamma_final


def test_default_init_is_seeded(blob_data):
    data, _ = blob_data
    a = fit(data, 3, RobustConfig(gamma=1.5, seed=4))
    b = fit(data, 3, RobustConfig(gamma=1.5, seed=4))
    assert np.array_equal(a.centroids, b.centroids)


def test_empty_cluster_is_reseeded():
    data = np.array([[0.0], [0.1], [10.0], [10.1]])
    res = fit_fixed_gamma(data, np.array([[0.0], [10.0], [1000.0]]), RobustConfig(gamma=1e6))
    assert res.info["reseeded"]
    assert np.all(np.isfinite(res.centroids))


def test_mode_requirements(blob_data):
    data, init = blob_data
    with pytest.raises(ValueError):
        fit_fixed_gamma(data, init, RobustConfig(radius=1.0))
    with pytest.raises(ValueError):
        fit_joint(data, init, RobustConfig(gamma=2.0))
    with pytest.raises(ValueError):
        fit_entropy(data, init, RobustConfig(gamma=2.0))
