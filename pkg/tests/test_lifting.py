import numpy as np
import pytest

from fwas.applications.lifting import (LiftedL1Spec, build_svm_dual, default_radius, l1_objective, lift_l1,
                                       loss_at_zero, split_lifted)
from fwas.solver import SolverConfig, run_fw_away
from tests.oracles import lasso_cd


def solve(spec, max_iter=20_000, gap=1e-13):
    problem, poly = lift_l1(spec)
    res = run_fw_away(problem, poly, SolverConfig(max_iter=max_iter, target_gap=gap, record_time=False))
    return res, split_lifted(res.x)


def test_one_dimensional_soft_threshold():
    spec = LiftedL1Spec("square", np.array([[1.0]]), np.array([1.0]), lam=0.5)
    res, (beta, u) = solve(spec)
    assert res.converged
    assert beta[0] == pytest.approx(0.5, abs=1e-8)
    assert u[0] == pytest.approx(0.5, abs=1e-8)


def test_large_penalty_gives_zero():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((10, 3)), rng.standard_normal(10)
    lam = 1.01 * np.max(np.abs(X.T @ y)) / 10
    _, (beta, _) = solve(LiftedL1Spec("square", X, y, lam))
    np.testing.assert_allclose(beta, 0.0, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_lasso_matches_coordinate_descent(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.standard_normal((12, 4)), rng.standard_normal(12)
    lam = 0.1
    spec = LiftedL1Spec("square", X, y, lam)
    _, (beta, u) = solve(spec)
    ref = lasso_cd(X, y, lam)
    np.testing.assert_allclose(beta, ref, atol=1e-5)
    np.testing.assert_allclose(u, np.abs(beta), atol=1e-6)
    assert l1_objective(spec, beta) == pytest.approx(l1_objective(spec, ref), abs=1e-9)


def test_lifted_objective_equals_original():
    rng = np.random.default_rng(4)
    X, y = rng.standard_normal((6, 3)), rng.standard_normal(6)
    spec = LiftedL1Spec("square", X, y, 0.3)
    problem, _ = lift_l1(spec)
    beta = np.array([0.2, -0.1, 0.0])
    assert problem.objective(np.concatenate([beta, np.abs(beta)])) == pytest.approx(l1_objective(spec, beta))


def test_logistic_improves_on_zero():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 3))
    y = np.sign(X @ np.array([2.0, -1.0, 0.0]) + 0.1 * rng.standard_normal(30))
    spec = LiftedL1Spec("logistic", X, y, 0.05)
    _, (beta, _) = solve(spec, max_iter=3000, gap=1e-9)
    assert l1_objective(spec, beta) < loss_at_zero("logistic", y) - 0.05
    assert beta[0] > 0 > beta[1]


def test_radius_default():
    spec = LiftedL1Spec("square", np.eye(2), np.array([2.0, 0.0]), lam=0.5)
    assert default_radius(spec) == pytest.approx(1.0 / 0.5)
    _, poly = lift_l1(spec)
    assert poly.dim == 4


def test_validation():
    with pytest.raises(ValueError):
        lift_l1(LiftedL1Spec("hinge", np.eye(2), np.ones(2), 1.0))
    with pytest.raises(ValueError):
        lift_l1(LiftedL1Spec("square", np.eye(2), np.ones(2), 0.0))
    with pytest.raises(ValueError):
        lift_l1(LiftedL1Spec("square", np.eye(2), np.ones(3), 1.0))


def test_svm_dual_two_points():
    problem, poly = build_svm_dual([1.0, -1.0], [[1.0], [-1.0]], C=2.0)
    res = run_fw_away(problem, poly, SolverConfig(max_iter=1000, target_gap=1e-12))
    assert res.objective == pytest.approx(-0.5, abs=1e-9)
    assert res.x.sum() == pytest.approx(1.0, abs=1e-6)


def test_svm_dual_objective_form():
    Z = np.array([[1.0, 2.0], [0.5, -1.0], [-1.0, 0.0]])
    y = np.array([1.0, -1.0, 1.0])
    problem, _ = build_svm_dual(y, Z, C=1.0)
    a = np.array([0.2, 0.7, 0.4])
    w = (a * y) @ Z
    assert problem.objective(a) == pytest.approx(0.5 * w @ w - a.sum())
