import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from oracles import grid_argmin_1d, grid_min_objective, penalty_1d
from qreg.solver import (
    Coefficients, PathConfig, Penalty, PenaltySpec, ZeroVarianceError, coordinate_descent,
    lambda_grid, lambda_max, objective, penalty_value, predict, scalar_update, solve_path,
    standardize,
)

SPECS = [PenaltySpec(k) for k in Penalty]


def random_design(rng, n=20, d=3, noise=0.5, scale=1.5):
    raw = rng.standard_normal((n, d))
    design = standardize(raw, np.zeros(n))
    theta = rng.uniform(-scale, scale, d)
    y = 0.7 + design.X[:, 1:] @ theta + noise * rng.standard_normal(n)
    return design.with_y(y)


def orthogonal_design(rng, n=12, d=2):
    raw = rng.standard_normal((n, d))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    y = rng.standard_normal(n) * 2 + q @ rng.uniform(-3, 3, d)
    return standardize(q, y)


# -- standardize ------------------------------------------------------------

def test_standardize_column():
    design = standardize(np.array([[1.0], [2.0], [3.0]]), np.zeros(3))
    np.testing.assert_allclose(design.X[:, 1], [-1 / math.sqrt(2), 0, 1 / math.sqrt(2)],
                               atol=1e-15)
    np.testing.assert_array_equal(design.X[:, 0], 1.0)


def test_standardize_postconditions(rng):
    design = standardize(rng.normal(3, 5, (40, 6)), rng.standard_normal(40))
    assert np.all(np.abs(design.X[:, 1:].sum(axis=0)) <= 1e-12)
    np.testing.assert_allclose(np.linalg.norm(design.X[:, 1:], axis=0), 1.0, atol=1e-12)


def test_standardize_idempotent(rng):
    first = standardize(rng.standard_normal((15, 4)), np.zeros(15))
    second = standardize(first.X[:, 1:], np.zeros(15))
    np.testing.assert_allclose(second.X, first.X, atol=1e-12)


def test_standardize_zero_variance():
    raw = np.column_stack([np.arange(4.0), np.full(4, 5.0)])
    with pytest.raises(ZeroVarianceError) as exc:
        standardize(raw, np.zeros(4))
    assert exc.value.column == 1


def test_standardize_rejects_bad_input():
    with pytest.raises(ValueError):
        standardize(np.ones((1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        standardize(np.array([[1.0], [np.nan]]), np.zeros(2))
    with pytest.raises(ValueError):
        standardize(np.arange(6.0).reshape(3, 2), np.zeros(4))


def test_design_is_immutable(rng):
    design = random_design(rng)
    with pytest.raises(ValueError):
        design.X[0, 0] = 3.0


# -- penalties --------------------------------------------------------------

def test_penalty_zero_slopes():
    for spec in SPECS:
        assert penalty_value(Coefficients([4.0, 0, 0, 0]), spec, 1.3) == 0.0


def test_penalty_intercept_unpenalized():
    for spec in SPECS:
        assert penalty_value(Coefficients([100.0, 1.0]), spec, 1.0) == penalty_value(
            Coefficients([0.0, 1.0]), spec, 1.0)


def test_scad_third_branch():
    assert penalty_value(Coefficients([0.0, 5.0]), PenaltySpec("scad"), 1.0) == pytest.approx(2.35)


def test_mcp_integral_form():
    expected, _ = integrate.quad(lambda u: max(0.0, 1 - u / 3.0), 0.0, 1.0)
    assert penalty_value(Coefficients([0.0, 1.0]), PenaltySpec("mcp"), 1.0) == pytest.approx(
        expected, rel=1e-12)
    assert expected == pytest.approx(0.8333333333333333)


@given(t=st.floats(-20, 20), lam=st.floats(0.01, 5), gamma=st.floats(1.1, 10))
def test_mcp_closed_form_matches_quadrature(t, lam, gamma):
    expected, _ = integrate.quad(lambda u: max(0.0, 1 - u / (gamma * lam)), 0.0, abs(t),
                                 points=[gamma * lam] if gamma * lam < abs(t) else None)
    got = penalty_value(Coefficients([0.0, t]), PenaltySpec("mcp", gamma=gamma), lam)
    assert got == pytest.approx(lam * expected, rel=1e-9, abs=1e-12)


@given(lam=st.floats(0.01, 5), a=st.floats(2.1, 6))
def test_scad_continuous_at_knots(lam, a):
    spec = PenaltySpec("scad", a=a)
    for knot in (lam, a * lam):
        lo = penalty_value(Coefficients([0.0, knot * (1 - 1e-12)]), spec, lam)
        hi = penalty_value(Coefficients([0.0, knot * (1 + 1e-12)]), spec, lam)
        assert lo == pytest.approx(hi, rel=1e-9)


def test_penalty_matches_oracle(rng):
    theta = rng.uniform(-8, 8, 30)
    for spec in SPECS:
        for lam in (0.3, 1.0, 2.5):
            ours = penalty_value(Coefficients(np.r_[0.0, theta]), spec, lam)
            assert ours == pytest.approx(penalty_1d(theta, lam, spec.kind.value).sum(), rel=1e-12)


def test_penalty_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec("scad", a=2.0)
    with pytest.raises(ValueError):
        PenaltySpec("mcp", gamma=0.0)
    with pytest.raises(ValueError):
        PenaltySpec("ridge")
    assert PenaltySpec("MCP").kind is Penalty.MCP


# -- scalar update ----------------------------------------------------------

def test_scalar_update_examples():
    assert scalar_update(3.0, 1.0, PenaltySpec("lasso")) == 2.0
    assert scalar_update(2.0, 1.0, PenaltySpec("mcp")) == pytest.approx(1.5)
    for spec in SPECS:
        assert scalar_update(0.0, 1.0, spec) == 0.0


def test_scalar_update_grid_examples():
    # frozen from the grid oracle (step 1e-4)
    assert grid_argmin_1d(3.0, 1.0, "lasso")[0] == pytest.approx(2.0, abs=1e-4)
    assert grid_argmin_1d(2.0, 1.0, "mcp")[0] == pytest.approx(1.5, abs=1e-4)


@given(z=st.floats(-6, 6), lam=st.floats(0, 3), kind=st.sampled_from(list(Penalty)))
def test_scalar_update_is_global_minimizer(z, lam, kind):
    spec = PenaltySpec(kind)
    t = scalar_update(z, lam, spec)
    g, gval = grid_argmin_1d(z, lam, kind.value)
    val = 0.5 * (t - z) ** 2 + float(penalty_1d(t, lam, kind.value))
    assert abs(t - g) <= 2e-4
    assert val <= gval + 1e-12
    assert gval - val <= 1e-6


@given(z=st.floats(-6, 6), lam=st.floats(0, 3), kind=st.sampled_from(list(Penalty)))
def test_scalar_update_odd(z, lam, kind):
    spec = PenaltySpec(kind)
    assert scalar_update(-z, lam, spec) == -scalar_update(z, lam, spec)


def test_scalar_update_mcp_needs_gamma_above_one():
    with pytest.raises(ValueError):
        scalar_update(1.0, 1.0, PenaltySpec("mcp", gamma=0.5))


# -- lambda_max -------------------------------------------------------------

def test_lambda_max_no_signal(rng):
    raw = rng.standard_normal((10, 3))
    design = standardize(raw, np.zeros(10))
    # project a random vector onto the complement of span(1, x_1, x_2, x_3)
    q, _ = np.linalg.qr(design.X)
    v = rng.standard_normal(10)
    v -= q @ (q.T @ v)
    assert lambda_max(design.with_y(v + 4.0)) == pytest.approx(0.0, abs=1e-14)
    assert lambda_max(design.with_y(np.full(10, 2.0))) == 0.0


def test_lambda_max_single_predictor(rng):
    design = standardize(rng.standard_normal((25, 1)), np.zeros(25))
    design = design.with_y(design.X[:, 1].copy())
    assert lambda_max(design) == pytest.approx(1 / 25, rel=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind.value)
def test_lambda_max_self_consistent(spec):
    rng = np.random.default_rng(5)
    for _ in range(20):
        design = random_design(rng)
        lmax = lambda_max(design)
        above = coordinate_descent(design, spec, lmax * (1 + 1e-6))
        assert above.coefs.support == ()
        exact = coordinate_descent(design, spec, lmax)
        assert exact.coefs.support == ()
        below = coordinate_descent(design, spec, lmax * (1 - 1e-6))
        assert below.coefs.support != ()


# -- coordinate descent -----------------------------------------------------

@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind.value)
def test_cd_unpenalized_is_least_squares(spec, rng):
    design = random_design(rng, n=30, d=5)
    res = coordinate_descent(design, spec, 0.0, config=PathConfig(tol=1e-12))
    ols = np.linalg.solve(design.X.T @ design.X, design.X.T @ design.y)
    assert res.converged
    np.testing.assert_allclose(res.coefs.theta, ols, atol=1e-8)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind.value)
def test_cd_above_lambda_max(spec, rng):
    design = random_design(rng)
    res = coordinate_descent(design, spec, 3 * lambda_max(design))
    assert res.coefs.support == ()
    assert res.coefs.intercept == pytest.approx(design.y.mean(), abs=1e-12)


def test_cd_lasso_matches_grid_oracle():
    rng = np.random.default_rng(11)
    design = random_design(rng)
    lam = 0.2 * lambda_max(design)
    res = coordinate_descent(design, PenaltySpec("lasso"), lam)
    oracle = grid_min_objective(design.X[:, 1:], design.y, lambda g: lam * np.abs(g), "lasso")
    assert objective(design, res.coefs, PenaltySpec("lasso"), lam) <= oracle + 1e-4


def test_lasso_objective_is_literal():
    rng = np.random.default_rng(2)
    design = random_design(rng)
    theta = rng.standard_normal(4)
    r = design.y - design.X @ theta
    lam = 0.37
    expected = r @ r / (2 * design.n) + lam * np.abs(theta[1:]).sum()
    assert objective(design, theta, PenaltySpec("lasso"), lam) == pytest.approx(expected, rel=1e-14)


@given(seed=st.integers(0, 2 ** 32 - 1), frac=st.floats(0.01, 0.9))
def test_lasso_descent_per_sweep(seed, frac):
    rng = np.random.default_rng(seed)
    design = random_design(rng, n=25, d=6)
    lam = frac * lambda_max(design)
    res = coordinate_descent(design, PenaltySpec("lasso"), lam, trace="sweep")
    diffs = np.diff(res.trace)
    assert np.all(diffs <= 1e-12 * (1 + np.abs(res.trace[:-1])))


@given(seed=st.integers(0, 2 ** 32 - 1), frac=st.floats(0.01, 0.9),
       kind=st.sampled_from([Penalty.SCAD, Penalty.MCP]))
def test_nonconvex_descent_per_coordinate(seed, frac, kind):
    rng = np.random.default_rng(seed)
    design = random_design(rng, n=25, d=6)
    lam = frac * lambda_max(design)
    res = coordinate_descent(design, PenaltySpec(kind), lam, trace="coordinate")
    diffs = np.diff(res.trace)
    assert np.all(diffs <= 1e-12 * (1 + np.abs(res.trace[:-1])))


@given(seed=st.integers(0, 2 ** 32 - 1), frac=st.floats(0.01, 0.9),
       kind=st.sampled_from(list(Penalty)))
def test_fixed_point_at_convergence(seed, frac, kind):
    rng = np.random.default_rng(seed)
    design = random_design(rng, n=25, d=6)
    spec = PenaltySpec(kind)
    lam = frac * lambda_max(design)
    config = PathConfig(tol=1e-10)
    res = coordinate_descent(design, spec, lam, config=config)
    assert res.converged
    theta = res.coefs.theta
    r = design.y - design.X @ theta
    assert theta[0] == pytest.approx(np.mean(design.y - design.X[:, 1:] @ theta[1:]), abs=1e-9)
    for j in range(1, design.d + 1):
        z = theta[j] + design.X[:, j] @ r
        assert scalar_update(z, design.n * lam, spec) == pytest.approx(theta[j], abs=1e-8)


def test_non_convergence_is_flagged(rng):
    design = random_design(rng, n=30, d=5)
    res = coordinate_descent(design, PenaltySpec("mcp"), 0.01 * lambda_max(design),
                             config=PathConfig(max_iter=1))
    assert not res.converged
    assert res.iterations == 1


def test_support_is_exact_nonzero_set():
    c = Coefficients([1.0, 0.0, 1e-300, -0.0, 2.0])
    assert c.support == (2, 4)


# -- path -------------------------------------------------------------------

@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind.value)
def test_path_first_point_empty(spec, rng):
    path = solve_path(random_design(rng, n=40, d=8), spec)
    assert path[0].support == ()
    assert len(path) == 100
    assert np.all(np.diff(path.lambdas) < 0)
    assert path.lambdas[-1] == pytest.approx(0.001 * path.lambdas[0])


def test_path_grid_ratio_when_d_exceeds_n(rng):
    design = random_design(rng, n=10, d=12)
    grid = lambda_grid(design, PathConfig())
    assert grid[-1] / grid[0] == pytest.approx(0.05)


def test_lasso_path_orthogonal_design_exact(rng):
    # with orthonormal columns each slope is the soft threshold of <x_j, y>
    for _ in range(10):
        design = orthogonal_design(rng)
        path = solve_path(design, PenaltySpec("lasso"), PathConfig(n_lambda=40, tol=1e-12))
        corr = design.X[:, 1:].T @ design.y
        prev = set()
        for lam, theta in zip(path.lambdas, path.thetas):
            expected = np.sign(corr) * np.maximum(np.abs(corr) - design.n * lam, 0.0)
            np.testing.assert_allclose(theta[1:], expected, atol=1e-9)
            support = set(np.flatnonzero(theta[1:]))
            assert prev <= support
            prev = support


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind.value)
def test_path_deterministic(spec, rng):
    design = random_design(rng, n=50, d=10)
    a = solve_path(design, spec)
    b = solve_path(design, spec)
    assert a.thetas.tobytes() == b.thetas.tobytes()
    assert a.lambdas.tobytes() == b.lambdas.tobytes()


def test_path_degenerate_response(rng):
    design = random_design(rng).with_y(np.full(20, 3.0))
    path = solve_path(design, PenaltySpec("mcp"))
    np.testing.assert_array_equal(path.lambdas, [0.0])
    assert path[0].support == ()
    assert path[0].intercept == pytest.approx(3.0)


def test_path_rejects_increasing_lambdas(rng):
    with pytest.raises(ValueError):
        solve_path(random_design(rng), PenaltySpec(), lambdas=[0.1, 0.2])


def test_path_reports_per_lambda_convergence(rng):
    design = random_design(rng, n=30, d=5)
    path = solve_path(design, PenaltySpec("scad"), PathConfig(max_iter=2, n_lambda=20))
    assert path.converged.shape == (20,)
    assert not path.all_converged


# -- predict ----------------------------------------------------------------

def test_predict_zero_slopes(rng):
    raw = rng.standard_normal((20, 3))
    design = standardize(raw, rng.standard_normal(20))
    out = predict(Coefficients([2.5, 0, 0, 0]), rng.standard_normal((7, 3)), design)
    np.testing.assert_array_equal(out, 2.5)


def test_predict_training_rows_give_fitted_values(rng):
    raw = rng.normal(2, 3, (20, 3))
    design = standardize(raw, rng.standard_normal(20))
    coefs = solve_path(design, PenaltySpec("lasso"))[60]
    fitted = predict(coefs, raw, design)
    np.testing.assert_allclose(fitted, design.X @ coefs.theta, atol=1e-12)
    r = design.y - fitted
    assert objective(design, coefs, PenaltySpec("lasso"), 0.0) == pytest.approx(
        r @ r / (2 * design.n), rel=1e-12)


def test_predict_identity_single_predictor(rng):
    raw = rng.standard_normal((15, 1))
    design = standardize(raw, np.zeros(15))
    out = predict(Coefficients([0.0, 1.0]), raw, design)
    np.testing.assert_allclose(out, design.X[:, 1], atol=1e-14)


def test_predict_column_mismatch(rng):
    design = standardize(rng.standard_normal((15, 2)), np.zeros(15))
    with pytest.raises(ValueError):
        predict(Coefficients([0.0, 1.0, 1.0]), rng.standard_normal((3, 3)), design)


def test_raw_scale_coefficients(rng):
    raw = rng.normal(5, 2, (30, 4))
    design = standardize(raw, rng.standard_normal(30))
    theta = rng.standard_normal(5)
    beta = design.to_raw(theta)
    np.testing.assert_allclose(beta[0] + raw @ beta[1:], design.X @ theta, atol=1e-12)
