import numpy as np
import pytest

from dspike.baselines import (
    full_shrinkage_lambda,
    lasso_coordinate_descent,
    lasso_objective,
    simple_average,
    soft_threshold,
    two_step_lasso,
)
from dspike.core import ConvergenceWarning, EnsembleData


def test_soft_threshold():
    assert np.allclose(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                       [-2.0, 0.0, 0.0, 0.0, 2.0])


def test_simple_average():
    assert np.allclose(simple_average(2).values, [0.5, 0.5])
    w = simple_average(23)
    assert np.allclose(w.values, 1 / 23)
    assert np.abs(w.values - simple_average(23).values).sum() == 0
    with pytest.raises(ValueError):
        simple_average(0)


def test_large_lambda_shrinks_everything(scenario_data):
    data, _ = scenario_data
    lam = full_shrinkage_lambda(data)
    fit = lasso_coordinate_descent(data, lam * 1.0001)
    assert fit.converged
    assert not fit.coefficients.any()
    assert fit.support == ()


def test_zero_lambda_orthonormal_design_is_least_squares(rng):
    n = 50
    Q, _ = np.linalg.qr(rng.normal(size=(n, 4)))
    X = Q * np.sqrt(n)  # columns with X_j'X_j / n == 1
    y = rng.normal(size=n)
    fit = lasso_coordinate_descent(EnsembleData(X, y), 0.0)
    ols = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(fit.coefficients, ols, atol=1e-8)


def test_negative_lambda_rejected(tiny_data):
    with pytest.raises(ValueError):
        lasso_coordinate_descent(tiny_data, -1.0)


def test_objective_never_increases(scenario_data):
    data, _ = scenario_data
    fit = lasso_coordinate_descent(data, 0.5)
    steps = np.diff(fit.objective_history)
    assert np.all(steps <= 1e-12)


def test_kkt_conditions_on_random_instances():
    gen = np.random.default_rng(2024)
    tol = 1e-6
    for _ in range(20):
        n, K = gen.integers(10, 40), gen.integers(2, 8)
        data = EnsembleData(gen.normal(size=(n, K)), gen.normal(size=n))
        lam = float(gen.uniform(0.01, 0.5)) * full_shrinkage_lambda(data)
        fit = lasso_coordinate_descent(data, lam, tolerance=1e-12)
        assert fit.converged
        b = fit.coefficients
        grad = data.X.T @ (data.y - data.X @ b) / data.n
        zero = b == 0
        assert np.all(np.abs(grad[zero]) <= lam + tol)
        assert np.allclose(grad[~zero], lam * np.sign(b[~zero]), atol=tol)


def test_two_dimensional_objective_matches_grid_search():
    gen = np.random.default_rng(77)
    X = gen.normal(size=(30, 2))
    y = X @ np.array([0.8, -0.3]) + gen.normal(0.0, 0.5, size=30)
    data = EnsembleData(X, y)
    lam = 0.05
    fit = lasso_coordinate_descent(data, lam, tolerance=1e-13)
    best = lasso_objective(fit.coefficients, data, lam)

    # coarse grid then a fine grid around the coarse minimiser
    def grid_min(c1, c2, half, m):
        b1 = np.linspace(c1 - half, c1 + half, m)
        b2 = np.linspace(c2 - half, c2 + half, m)
        B1, B2 = np.meshgrid(b1, b2)
        R = y[:, None, None] - X[:, 0, None, None] * B1 - X[:, 1, None, None] * B2
        obj = (R ** 2).sum(axis=0) / (2 * 30) + lam * (np.abs(B1) + np.abs(B2))
        i = np.unravel_index(np.argmin(obj), obj.shape)
        return B1[i], B2[i], obj[i]

    c1, c2, _ = grid_min(0.0, 0.0, 2.0, 401)
    for half in (0.02, 2e-4, 2e-6):
        c1, c2, value = grid_min(c1, c2, half, 201)
    assert best <= value + 1e-8
    assert value - best < 1e-8


def test_non_convergence_is_flagged(scenario_data):
    data, _ = scenario_data
    with pytest.warns(ConvergenceWarning):
        fit = lasso_coordinate_descent(data, 0.01, tolerance=1e-15, max_sweeps=2)
    assert not fit.converged
    assert fit.n_iterations == 2


def test_two_step_lasso_equalises_selection():
    gen = np.random.default_rng(5)
    n, K = 200, 6
    X = gen.normal(size=(n, K))
    y = X[:, :3].sum(axis=1) / 3
    w = two_step_lasso(EnsembleData(X, y), 0.01)
    assert np.allclose(w.values, [1 / 3, 1 / 3, 1 / 3, 0, 0, 0])


def test_two_step_lasso_fallback(scenario_data):
    data, _ = scenario_data
    lam = full_shrinkage_lambda(data)
    for scale in (1.01, 10.0, 2981.0):
        assert np.allclose(two_step_lasso(data, lam * scale).values, 1 / data.K)


def test_two_step_lasso_positive_only():
    gen = np.random.default_rng(8)
    X = gen.normal(size=(300, 3))
    y = X[:, 0] - X[:, 1]
    both = two_step_lasso(EnsembleData(X, y), 0.01)
    assert np.allclose(both.values, [0.5, 0.5, 0.0])
    positive = two_step_lasso(EnsembleData(X, y), 0.01, positive_only=True)
    assert np.allclose(positive.values, [1.0, 0.0, 0.0])
