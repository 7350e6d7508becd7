"""Closure regression: feature layout, normal-equation aggregation
against brute force, Tikhonov closed forms, curvature selection, and
recovery of a known model from its own data."""
import numpy as np
import pytest

from srom.closure import (
    ClosureParameters,
    RegressionSystem,
    accumulate_system,
    closure_from_coefficients,
    compute_features,
    compute_residual_targets,
    estimator_errors,
    feature_count,
    fit_closure,
    lcurve_select,
    normal_equation_residual,
    pack_coefficients,
    quadratic_pairs,
    residual_mse,
    tikhonov_solve,
    unpack_coefficients,
    zero_closure,
)
from srom.errors import CurvatureMeshError, IllPosedSystemError
from srom.galerkin import GalerkinOperators, drift_columns, grom_drift
from srom.pod import CoefficientTrajectory


def random_ops(r, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    linear = -np.eye(r) + scale * rng.normal(size=(r, r))
    linear = 0.5 * (linear + linear.T)
    quad = scale * rng.normal(size=(r, r, r))
    quad = 0.5 * (quad + quad.transpose(1, 0, 2))
    return GalerkinOperators(linear=linear, quadratic=quad, nu=0.01)


def euler_trajectory(ops, closure_linear, closure_quad, a0, delta, n_steps):
    """Explicit Euler of the combined quadratic drift, no noise."""
    a = np.asarray(a0, dtype=np.float64)
    states = [a]
    for _ in range(n_steps):
        drift = grom_drift(ops, a)
        drift = drift + closure_linear @ a + np.einsum("i,ijk,j->k", a, closure_quad, a)
        a = a + delta * drift
        states.append(a)
    return CoefficientTrajectory(values=np.array(states).T, delta=delta, gap=1)


def test_feature_count_and_pair_order():
    assert feature_count(10) == 65
    assert feature_count(1) == 2
    assert quadratic_pairs(3) == [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]


def test_feature_vector_known_answer():
    np.testing.assert_array_equal(compute_features(np.array([2.0, 3.0])), [2, 3, 4, 6, 9])


def test_feature_matrix_matches_columns():
    rng = np.random.default_rng(1)
    states = rng.normal(size=(4, 6))
    block = compute_features(states)
    assert block.shape == (feature_count(4), 6)
    for l in range(6):
        np.testing.assert_array_equal(block[:, l], compute_features(states[:, l]))


def test_residual_targets_finite_difference():
    ops = random_ops(3, seed=2)
    rng = np.random.default_rng(3)
    values = rng.normal(size=(3, 5))
    traj = CoefficientTrajectory(values=values, delta=0.2, gap=1)
    targets = compute_residual_targets(traj, ops)
    assert targets.shape == (3, 4)
    for l in range(4):
        want = (values[:, l + 1] - values[:, l]) / 0.2 - grom_drift(ops, values[:, l])
        np.testing.assert_allclose(targets[:, l], want, rtol=1e-12)


def test_accumulate_system_matches_brute_force():
    ops = random_ops(2, seed=4)
    rng = np.random.default_rng(5)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 6)), delta=0.1, gap=1)
        for _ in range(3)
    ]
    system = accumulate_system(trajectories, ops)
    n_r = feature_count(2)
    normal = np.zeros((n_r, n_r))
    rhs = np.zeros((n_r, 2))
    ssq = np.zeros(2)
    for traj in trajectories:
        for l in range(traj.n_times - 1):
            psi = compute_features(traj.values[:, l])
            f = (traj.values[:, l + 1] - traj.values[:, l]) / 0.1 - grom_drift(
                ops, traj.values[:, l]
            )
            normal += np.outer(psi, psi) / 6.0
            rhs += np.outer(psi, f) / 6.0
            ssq += f**2
    normal /= 3.0
    rhs /= 3.0
    np.testing.assert_allclose(system.normal_matrix, normal, rtol=1e-12)
    np.testing.assert_allclose(system.rhs, rhs, rtol=1e-12)
    np.testing.assert_allclose(system.sum_sq_targets, ssq, rtol=1e-12)
    assert system.n_samples == 3 * 6
    assert system.n_r == n_r


def test_accumulate_system_rejects_mixed_grids():
    ops = random_ops(2, seed=6)
    rng = np.random.default_rng(7)
    base = CoefficientTrajectory(values=rng.normal(size=(2, 5)), delta=0.1, gap=1)
    with pytest.raises(ValueError):
        accumulate_system([], ops)
    other_delta = CoefficientTrajectory(values=rng.normal(size=(2, 5)), delta=0.2, gap=1)
    with pytest.raises(ValueError):
        accumulate_system([base, other_delta], ops)
    other_len = CoefficientTrajectory(values=rng.normal(size=(2, 7)), delta=0.1, gap=1)
    with pytest.raises(ValueError):
        accumulate_system([base, other_len], ops)
    with pytest.raises(ValueError):
        accumulate_system([base], random_ops(3, seed=8))


def diag_system(eigs, rhs, r=2, delta=0.1):
    """System with a chosen spectrum, for closed-form solver checks."""
    n_r = feature_count(r)
    rng = np.random.default_rng(9)
    q, _ = np.linalg.qr(rng.normal(size=(n_r, n_r)))
    normal = q @ np.diag(eigs) @ q.T
    normal = 0.5 * (normal + normal.T)
    return RegressionSystem(
        normal_matrix=normal,
        rhs=rhs,
        sum_sq_targets=np.ones(r),
        r=r,
        delta=delta,
        n_snapshots=10,
        n_trajectories=2,
    ), q


def test_tikhonov_closed_form():
    n_r = feature_count(2)
    rng = np.random.default_rng(10)
    rhs = rng.normal(size=(n_r, 2))
    system, _ = diag_system(np.linspace(0.5, 3.0, n_r), rhs)
    lam = 0.7
    got = tikhonov_solve(system, lam)
    want = np.linalg.solve(system.normal_matrix + lam * np.eye(n_r), rhs)
    np.testing.assert_allclose(got, want, rtol=1e-10)


def test_tikhonov_zero_lambda_is_minimum_norm():
    n_r = feature_count(2)
    eigs = np.linspace(0.5, 3.0, n_r)
    eigs[0] = 0.0  # singular direction
    rng = np.random.default_rng(11)
    rhs = rng.normal(size=(n_r, 2))
    system, _ = diag_system(eigs, rhs)
    got = tikhonov_solve(system, 0.0)
    want = np.linalg.pinv(system.normal_matrix) @ rhs
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)
    with pytest.raises(ValueError):
        tikhonov_solve(system, -0.1)


def test_indefinite_normal_matrix_rejected():
    n_r = feature_count(2)
    eigs = np.linspace(0.5, 3.0, n_r)
    eigs[0] = -0.5
    system, _ = diag_system(eigs, np.ones((n_r, 2)))
    with pytest.raises(IllPosedSystemError):
        tikhonov_solve(system, 0.0)


def test_residual_mse_matches_raw_data():
    ops = random_ops(2, seed=12)
    rng = np.random.default_rng(13)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 8)), delta=0.1, gap=1)
        for _ in range(4)
    ]
    system = accumulate_system(trajectories, ops)
    c = rng.normal(size=(system.n_r, 2))
    direct = np.zeros(2)
    for traj in trajectories:
        psi = compute_features(traj.values[:, :-1])
        f = compute_residual_targets(traj, ops)
        direct += np.sum((f - c.T @ psi) ** 2, axis=1)
    direct /= system.n_samples
    np.testing.assert_allclose(residual_mse(system, c), direct, rtol=1e-10)


def test_normal_equation_residual_vanishes_at_optimum():
    ops = random_ops(2, seed=14)
    rng = np.random.default_rng(15)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 12)), delta=0.1, gap=1)
        for _ in range(5)
    ]
    system = accumulate_system(trajectories, ops)
    c = tikhonov_solve(system, 0.0)
    defect = normal_equation_residual(system, c)
    scale = np.linalg.norm(system.rhs)
    assert np.all(defect <= 1e-8 * max(scale, 1.0))
    worse = normal_equation_residual(system, c + 1.0)
    assert np.all(worse > defect)


def test_pack_unpack_round_trip_and_drift_identity():
    r = 3
    rng = np.random.default_rng(16)
    linear = rng.normal(size=(r, r))
    quad = rng.normal(size=(r, r, r))
    quad = 0.5 * (quad + quad.transpose(1, 0, 2))
    packed = pack_coefficients(linear, quad)
    lin2, quad2 = unpack_coefficients(packed, r)
    np.testing.assert_allclose(lin2, linear, rtol=1e-14)
    np.testing.assert_allclose(quad2, quad, rtol=1e-14)
    # the packed columns must reproduce the closure drift through the
    # feature vector, tying the monomial layout to the tensor contraction
    a = rng.normal(size=r)
    psi = compute_features(a)
    want = linear @ a + np.einsum("i,ijk,j->k", a, quad, a)
    np.testing.assert_allclose(packed.T @ psi, want, rtol=1e-12)
    with pytest.raises(ValueError):
        unpack_coefficients(packed[:-1], r)


def test_known_model_recovered_from_its_own_data():
    """Noise-free data generated by a known quadratic correction is
    refit exactly (to solver precision) by the unregularized estimator."""
    r = 3
    ops = random_ops(r, seed=17, scale=0.1)
    rng = np.random.default_rng(18)
    true_linear = 0.1 * rng.normal(size=(r, r))
    true_quad = 0.1 * rng.normal(size=(r, r, r))
    true_quad = 0.5 * (true_quad + true_quad.transpose(1, 0, 2))
    trajectories = [
        euler_trajectory(ops, true_linear, true_quad, 0.5 * rng.normal(size=r), 0.05, 40)
        for _ in range(8)
    ]
    system = accumulate_system(trajectories, ops)
    eigs = np.linalg.eigvalsh(0.5 * (system.normal_matrix + system.normal_matrix.T))
    assert eigs[-1] / max(eigs[0], 1e-300) <= 1e8, "conditioning guard for this oracle"
    fit = fit_closure(trajectories, ops, mode="none")
    assert np.max(np.abs(fit.linear - true_linear)) <= 1e-8
    assert np.max(np.abs(fit.quadratic - true_quad)) <= 1e-8
    assert np.max(fit.sigma) <= 1e-8
    assert fit.lambda_used == 0.0


def test_galerkin_data_yields_zero_closure():
    # data produced by the plain reduced model needs no correction
    r = 3
    ops = random_ops(r, seed=19, scale=0.1)
    rng = np.random.default_rng(20)
    zero_lin = np.zeros((r, r))
    zero_quad = np.zeros((r, r, r))
    trajectories = [
        euler_trajectory(ops, zero_lin, zero_quad, 0.4 * rng.normal(size=r), 0.05, 30)
        for _ in range(6)
    ]
    fit = fit_closure(trajectories, ops, mode="none")
    assert np.max(np.abs(fit.linear)) <= 1e-10
    assert np.max(np.abs(fit.quadratic)) <= 1e-10
    assert np.max(fit.sigma) <= 1e-10
    assert fit.lambda_used == 0.0
    assert fit.fit_loss <= 1e-20


def test_lcurve_monotonicity_and_range():
    """Along the lambda mesh the coefficient norm must not increase and
    the data residual must not decrease."""
    ops = random_ops(2, seed=21)
    rng = np.random.default_rng(22)
    trajectories = [
        CoefficientTrajectory(
            values=np.cumsum(0.1 * rng.normal(size=(2, 30)), axis=1), delta=0.1, gap=1
        )
        for _ in range(5)
    ]
    system = accumulate_system(trajectories, ops)
    result = lcurve_select(system, n_mesh=60)
    assert not result.degenerate
    assert np.all(np.diff(result.coefficient_norm) <= 1e-12)
    assert np.all(np.diff(result.residual) >= -1e-12)
    assert result.mesh[0] <= result.lambda_star <= result.mesh[-1]
    # interior endpoints carry no curvature value
    assert np.isnan(result.curvature[0]) and np.isnan(result.curvature[-1])


def test_lcurve_mesh_validation_and_degenerate_rhs():
    ops = random_ops(2, seed=23)
    rng = np.random.default_rng(24)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 10)), delta=0.1, gap=1)
        for _ in range(3)
    ]
    system = accumulate_system(trajectories, ops)
    with pytest.raises(CurvatureMeshError):
        lcurve_select(system, n_mesh=2)

    quiet = RegressionSystem(
        normal_matrix=system.normal_matrix,
        rhs=np.zeros_like(system.rhs),
        sum_sq_targets=np.zeros(2),
        r=2,
        delta=0.1,
        n_snapshots=10,
        n_trajectories=3,
    )
    result = lcurve_select(quiet)
    assert result.degenerate and result.lambda_star == 0.0


def test_lcurve_flat_spectrum_returns_smallest_mesh_value():
    n_r = feature_count(2)
    system, _ = diag_system(np.ones(n_r), np.ones((n_r, 2)))
    result = lcurve_select(system, n_mesh=10)
    assert result.lambda_star == pytest.approx(result.mesh[0])


def test_closure_parameter_validation():
    r = 2
    with pytest.raises(ValueError):
        ClosureParameters(
            linear=np.zeros((r, r)),
            quadratic=np.zeros((r, r, r)),
            sigma=-np.ones(r),
            lambda_used=0.0,
            fit_loss=0.0,
        )
    asym = np.zeros((r, r, r))
    asym[0, 1, 0] = 1.0
    with pytest.raises(ValueError):
        ClosureParameters(
            linear=np.zeros((r, r)),
            quadratic=asym,
            sigma=np.zeros(r),
            lambda_used=0.0,
            fit_loss=0.0,
        )
    with pytest.raises(ValueError):
        ClosureParameters(
            linear=np.zeros((r, r)),
            quadratic=np.zeros((r, r, r)),
            sigma=np.zeros(r),
            lambda_used=-1.0,
            fit_loss=0.0,
        )
    zero = zero_closure(3)
    assert zero.r == 3 and zero.fit_loss == 0.0


def test_fit_closure_mode_validation():
    ops = random_ops(2, seed=25)
    rng = np.random.default_rng(26)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 8)), delta=0.1, gap=1)
    ]
    with pytest.raises(ValueError):
        fit_closure(trajectories, ops, mode="fixed")
    with pytest.raises(ValueError):
        fit_closure(trajectories, ops, mode="fixed", lam=-1.0)
    with pytest.raises(ValueError):
        fit_closure(trajectories, ops, mode="ridge")
    fixed = fit_closure(trajectories, ops, mode="fixed", lam=0.5)
    assert fixed.lambda_used == 0.5


def test_sigma_estimators():
    ops = random_ops(2, seed=27)
    rng = np.random.default_rng(28)
    trajectories = [
        CoefficientTrajectory(values=rng.normal(size=(2, 15)), delta=0.2, gap=1)
        for _ in range(4)
    ]
    system = accumulate_system(trajectories, ops)
    c = tikhonov_solve(system, 0.0)
    fit = closure_from_coefficients(system, c, 0.0)
    np.testing.assert_allclose(
        fit.sigma, np.sqrt(0.2 * residual_mse(system, c)), rtol=1e-12
    )
    assert fit.fit_loss == pytest.approx(float(np.sum(residual_mse(system, c))))
    diagnostic = closure_from_coefficients(system, c, 0.0, sigma_estimator="normal_equation")
    assert np.all(diagnostic.sigma <= 1e-8)
    with pytest.raises(ValueError):
        closure_from_coefficients(system, c, 0.0, sigma_estimator="bogus")


def test_estimator_errors_formula():
    r = 2
    a = zero_closure(r)
    lin = np.array([[1.0, 2.0], [3.0, 4.0]])
    quad = np.zeros((r, r, r))
    quad[0, 1, :] = quad[1, 0, :] = 1.0
    quad[0, 0, 1] = 2.0
    b = ClosureParameters(
        linear=lin, quadratic=quad, sigma=np.array([3.0, 4.0]), lambda_used=0.0, fit_loss=0.0
    )
    err_lin, err_quad, err_sig = estimator_errors(b, a)
    assert err_lin == pytest.approx(np.sqrt((1 + 4 + 9 + 16) / 4))
    # upper-triangle slots: (0,0,:) contributes 4, (0,1,:) contributes 2
    assert err_quad == pytest.approx(np.sqrt(2.0 * (4.0 + 2.0) / (4 * 3)))
    assert err_sig == pytest.approx(np.sqrt((9 + 16) / 2))
    assert estimator_errors(a, a) == (0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        estimator_errors(a, zero_closure(3))
