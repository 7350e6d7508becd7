"""Ensemble basis extraction: rank-one oracle, eigendecomposition
invariants, alignment, projection, and error norms."""
import warnings
from dataclasses import replace

import numpy as np
import pytest

from srom.fem import SnapshotMatrix, assemble_fem_operators, mass_norm
from srom.pod import (
    CoefficientTrajectory,
    PodBasis,
    align_basis,
    energy_capture,
    ensemble_pod,
    pod_errors,
    project_trajectory,
)


def snap(values, dt=0.1, t0=0.0):
    values = np.asarray(values, dtype=np.float64)
    padded = np.zeros((values.shape[0] + 2, values.shape[1]))
    padded[1:-1] = values
    return SnapshotMatrix(values=padded, dt=dt, t0=t0)


def unit(v):
    return v / np.linalg.norm(v)


def test_rank_one_trajectory_recovers_direction():
    """All columns proportional to one profile: the single nonzero
    eigenvalue is the mean squared column norm and the mode is that
    profile up to sign."""
    phi = unit(np.array([1.0, 2.0, 3.0, 2.0, 1.0]))
    scales = np.array([1.0, -2.0, 0.5, 3.0])
    Y = snap(np.outer(phi, scales))
    basis = ensemble_pod([Y], r=1)
    lam1 = np.mean(scales**2)
    assert basis.eigenvalues[0] == pytest.approx(lam1, rel=1e-12)
    np.testing.assert_allclose(np.abs(basis.modes[1:-1, 0]), phi, rtol=1e-12)
    # sign convention: the entry of largest magnitude is positive
    peak = np.argmax(np.abs(basis.modes[:, 0]))
    assert basis.modes[peak, 0] > 0
    assert np.all(np.abs(basis.eigenvalues[1:]) < 1e-12)


def test_matches_brute_force_average_covariance():
    rng = np.random.default_rng(2)
    dataset = [snap(rng.normal(size=(6, 9))) for _ in range(4)]
    kbar = sum(s.values @ s.values.T / s.n_times for s in dataset) / 4
    want_eigs = np.sort(np.linalg.eigvalsh(kbar))[::-1]
    basis = ensemble_pod(dataset, r=3)
    np.testing.assert_allclose(basis.eigenvalues, want_eigs, rtol=1e-10, atol=1e-12)
    # retained modes span the same leading subspace
    gram = basis.modes.T @ kbar @ basis.modes
    np.testing.assert_allclose(np.diag(gram), want_eigs[:3], rtol=1e-9, atol=1e-12)


def test_trace_equals_eigenvalue_sum():
    rng = np.random.default_rng(4)
    dataset = [snap(rng.normal(size=(5, 7))) for _ in range(3)]
    trace = np.mean([np.sum(s.values**2) / s.n_times for s in dataset])
    basis = ensemble_pod(dataset, r=2)
    assert basis.eigenvalues.sum() == pytest.approx(trace, rel=1e-8)


def test_modes_orthonormal_and_boundary_zero():
    rng = np.random.default_rng(6)
    dataset = [snap(rng.normal(size=(8, 20))) for _ in range(5)]
    basis = ensemble_pod(dataset, r=4)
    np.testing.assert_allclose(basis.modes.T @ basis.modes, np.eye(4), atol=1e-12)
    assert np.all(basis.modes[0] == 0.0) and np.all(basis.modes[-1] == 0.0)


def test_permutation_invariance_and_bit_stability():
    rng = np.random.default_rng(7)
    dataset = [snap(rng.normal(size=(6, 11))) for _ in range(6)]
    a = ensemble_pod(dataset, r=3)
    b = ensemble_pod(dataset, r=3)
    np.testing.assert_array_equal(a.modes, b.modes)  # same order, same bits
    shuffled = ensemble_pod(dataset[::-1], r=3)
    np.testing.assert_allclose(a.modes, shuffled.modes, atol=1e-10)
    np.testing.assert_allclose(a.eigenvalues, shuffled.eigenvalues, atol=1e-10)


def test_projection_idempotence():
    rng = np.random.default_rng(9)
    dataset = [snap(rng.normal(size=(7, 13))) for _ in range(3)]
    basis = ensemble_pod(dataset, r=4)
    coeffs = rng.normal(size=(4, 5))
    Y = SnapshotMatrix(values=basis.modes @ coeffs, dt=0.1)
    traj = project_trajectory(Y, basis, gap=1)
    np.testing.assert_allclose(traj.values, coeffs, atol=1e-10)
    np.testing.assert_allclose(basis.modes @ traj.values, Y.values, atol=1e-10)


def test_truncate_keeps_leading_columns():
    rng = np.random.default_rng(10)
    dataset = [snap(rng.normal(size=(6, 8))) for _ in range(2)]
    basis = ensemble_pod(dataset, r=4)
    small = basis.truncate(2)
    np.testing.assert_array_equal(small.modes, basis.modes[:, :2])
    np.testing.assert_array_equal(small.eigenvalues, basis.eigenvalues)
    with pytest.raises(ValueError):
        basis.truncate(0)
    with pytest.raises(ValueError):
        basis.truncate(5)


def test_ensemble_pod_validation():
    with pytest.raises(ValueError):
        ensemble_pod([], r=1)
    a = snap(np.ones((3, 4)))
    b = snap(np.ones((4, 4)))
    with pytest.raises(ValueError):
        ensemble_pod([a, b], r=1)
    with pytest.raises(ValueError):
        ensemble_pod([a], r=99)


def test_align_basis_sign_cases():
    rng = np.random.default_rng(12)
    dataset = [snap(rng.normal(size=(6, 9))) for _ in range(2)]
    basis = ensemble_pod(dataset, r=3)

    same = align_basis(basis, basis)
    np.testing.assert_array_equal(same.modes, basis.modes)
    assert same.aligned

    negated = replace(basis, modes=-basis.modes)
    back = align_basis(basis, negated)
    np.testing.assert_array_equal(back.modes, negated.modes)

    # only the flipped column should flip back
    flipped = basis.modes.copy()
    flipped[:, 2] = -flipped[:, 2]
    aligned = align_basis(replace(basis, modes=flipped), basis)
    np.testing.assert_array_equal(aligned.modes, basis.modes)


def test_align_basis_rejects_shape_mismatch():
    rng = np.random.default_rng(13)
    a = ensemble_pod([snap(rng.normal(size=(6, 9)))], r=3)
    b = ensemble_pod([snap(rng.normal(size=(6, 9)))], r=2)
    with pytest.raises(ValueError):
        align_basis(a, b)


def test_projection_of_pure_first_mode():
    rng = np.random.default_rng(14)
    basis = ensemble_pod([snap(rng.normal(size=(6, 9)))], r=3)
    Y = SnapshotMatrix(values=np.tile(basis.modes[:, :1], (1, 7)), dt=0.2)
    traj = project_trajectory(Y, basis, gap=1)
    np.testing.assert_allclose(traj.values[0], np.ones(7), atol=1e-12)
    np.testing.assert_allclose(traj.values[1:], 0.0, atol=1e-12)


def test_projection_gap_grid():
    # 401 columns at dt = 0.005 with gap 5: 81 samples on a 0.025 grid
    basis = ensemble_pod([snap(np.random.default_rng(1).normal(size=(3, 401)))], r=2)
    traj = project_trajectory(SnapshotMatrix(values=np.zeros((5, 401)), dt=0.005), basis, gap=5)
    assert traj.n_times == 81
    assert traj.delta == pytest.approx(0.025)
    assert traj.gap == 5


def test_projection_bessel_inequality():
    rng = np.random.default_rng(15)
    basis = ensemble_pod([snap(rng.normal(size=(8, 12)))], r=3)
    Y = snap(rng.normal(size=(8, 6)))
    traj = project_trajectory(Y, basis, gap=1)
    for l in range(6):
        assert np.sum(traj.values[:, l] ** 2) <= np.sum(Y.values[:, l] ** 2) + 1e-12


def test_projection_validation():
    rng = np.random.default_rng(16)
    basis = ensemble_pod([snap(rng.normal(size=(6, 9)))], r=2)
    Y = snap(rng.normal(size=(6, 4)))
    with pytest.raises(ValueError):
        project_trajectory(Y, basis, gap=0)
    with pytest.raises(ValueError):
        project_trajectory(Y, basis, gap=4)  # N_t - 1 == 3
    with pytest.raises(ValueError):
        project_trajectory(snap(rng.normal(size=(7, 4))), basis, gap=1)


def test_energy_capture_span_and_orthogonal_cases():
    rng = np.random.default_rng(17)
    basis = ensemble_pod([snap(rng.normal(size=(10, 14)))], r=3)
    coeffs = rng.normal(size=(3, 5))
    inside = SnapshotMatrix(values=basis.modes @ coeffs, dt=0.1)
    assert energy_capture(inside, basis) == pytest.approx(1.0, abs=1e-12)

    # build a vector orthogonal to the retained modes
    v = rng.normal(size=basis.n_nodes)
    v[0] = v[-1] = 0.0
    v -= basis.modes @ (basis.modes.T @ v)
    outside = SnapshotMatrix(values=np.outer(v, np.ones(4)), dt=0.1)
    assert energy_capture(outside, basis) == pytest.approx(0.0, abs=1e-12)


def test_energy_capture_zero_matrix_flagged():
    rng = np.random.default_rng(18)
    basis = ensemble_pod([snap(rng.normal(size=(6, 5)))], r=2)
    zero = SnapshotMatrix(values=np.zeros((basis.n_nodes, 3)), dt=0.1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert energy_capture(zero, basis) == 1.0
    assert len(caught) == 1


def test_pod_errors_identical_and_constructed_perturbation():
    fem = assemble_fem_operators(8)
    rng = np.random.default_rng(19)
    dataset = [snap(rng.normal(size=(fem.n_nodes - 2, 12))) for _ in range(3)]
    reference = ensemble_pod(dataset, r=2)

    aligned_self = align_basis(reference, reference)
    mode_err, eig_err = pod_errors(aligned_self, reference, fem)
    np.testing.assert_allclose(mode_err, 0.0, atol=1e-14)
    np.testing.assert_allclose(eig_err, 0.0, atol=1e-14)

    # perturb mode 1 by a direction of unit mass norm: the reported L2
    # error must equal the perturbation size exactly
    psi = rng.normal(size=fem.n_nodes)
    psi[0] = psi[-1] = 0.0
    psi /= mass_norm(psi, fem)
    eps = 1e-3
    perturbed_modes = reference.modes.copy()
    perturbed_modes[:, 0] += eps * psi
    perturbed = replace(reference, modes=perturbed_modes, aligned=True)
    mode_err, _ = pod_errors(perturbed, reference, fem)
    assert mode_err[0] == pytest.approx(eps, rel=1e-10)
    assert mode_err[1] == pytest.approx(0.0, abs=1e-14)


def test_pod_errors_require_alignment():
    rng = np.random.default_rng(20)
    fem = assemble_fem_operators(8)
    basis = ensemble_pod([snap(rng.normal(size=(fem.n_nodes - 2, 9)))], r=2)
    with pytest.raises(ValueError):
        pod_errors(basis, basis, fem)


def test_coefficient_trajectory_grid():
    traj = CoefficientTrajectory(values=np.zeros((2, 4)), delta=0.25, gap=5, t0=1.0)
    np.testing.assert_allclose(traj.times, [1.0, 1.25, 1.5, 1.75])
    assert traj.r == 2
    with pytest.raises(ValueError):
        CoefficientTrajectory(values=np.zeros((2, 4)), delta=-1.0, gap=1)
    with pytest.raises(ValueError):
        CoefficientTrajectory(values=np.full((2, 4), np.nan), delta=1.0, gap=1)
