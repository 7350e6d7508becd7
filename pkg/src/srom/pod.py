"""Ensemble proper orthogonal decomposition.

Builds orthonormal spatial modes from the trajectory-averaged snapshot
covariance and projects snapshots onto them.  The eigenproblem uses the
plain Euclidean inner product on nodal values; reported mode errors use
the continuum L2(0, 1) norm through the FEM mass matrix.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .fem import FemOperators, SnapshotMatrix, mass_norm

__all__ = [
    "PodBasis",
    "CoefficientTrajectory",
    "ensemble_pod",
    "align_basis",
    "project_trajectory",
    "energy_capture",
    "pod_errors",
]


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal spatial modes with the full covariance spectrum.

    ``modes`` has shape (N_x, r) with Euclidean-orthonormal columns;
    ``eigenvalues`` holds the full descending spectrum of the averaged
    covariance.  ``aligned`` records whether the signs have been aligned
    against a reference basis (required by :func:`pod_errors`).
    """

    modes: np.ndarray
    eigenvalues: np.ndarray
    n_trajectories: int
    inner_product: str = "euclidean"
    aligned: bool = False

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.float64)
        eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        if modes.ndim != 2:
            raise ValueError("modes must be a 2D array")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be at least 1")
        if self.inner_product != "euclidean":
            raise ValueError(f"unknown inner product tag {self.inner_product!r}")

    @property
    def n_nodes(self) -> int:
        return self.modes.shape[0]

    @property
    def r(self) -> int:
        return self.modes.shape[1]

    def truncate(self, r: int) -> "PodBasis":
        """First ``r`` modes of the same eigendecomposition."""
        if not 1 <= r <= self.r:
            raise ValueError(f"r must lie in [1, {self.r}]")
        return replace(self, modes=self.modes[:, :r].copy())


@dataclass(frozen=True)
class CoefficientTrajectory:
    """Reduced coefficients a_i(t_l), shape (r, n_t), on the grid
    t_l = t0 + l*delta with delta = gap * dt of the source snapshots."""

    values: np.ndarray
    delta: float
    gap: int
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("coefficient values must be a 2D array")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.gap < 1:
            raise ValueError("gap must be at least 1")
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficient values must be finite")

    @property
    def r(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_times)


def _covariance(snapshot: SnapshotMatrix) -> np.ndarray:
    values = snapshot.values
    return (values @ values.T) / values.shape[1]


def _basis_from_covariance(kbar: np.ndarray, r: int, n_trajectories: int) -> PodBasis:
    """Eigendecompose an averaged covariance and extract the leading modes."""
    eigenvalues, vectors = np.linalg.eigh(kbar)
    eigenvalues = eigenvalues[::-1].copy()
    modes = vectors[:, ::-1][:, :r].copy()
    # boundary nodal values are exactly zero for every mode with nonzero
    # eigenvalue; enforce that exactly
    modes[0, :] = 0.0
    modes[-1, :] = 0.0
    for j in range(modes.shape[1]):
        column = modes[:, j]
        peak = np.argmax(np.abs(column))
        if column[peak] < 0.0:
            modes[:, j] = -column
    return PodBasis(modes=modes, eigenvalues=eigenvalues, n_trajectories=n_trajectories)


def ensemble_pod(dataset: Sequence[SnapshotMatrix], r: int) -> PodBasis:
    """Compute the leading ``r`` modes of the trajectory-averaged covariance.

    Per trajectory K^(m) = Y^(m) Y^(m)T / N_t; the average over
    trajectories is eigendecomposed symmetrically, eigenvalues sorted
    descending, and each retained mode is sign-canonicalized so its
    entry of largest magnitude is positive.
    """
    if len(dataset) == 0:
        raise ValueError("dataset must contain at least one trajectory")
    n_nodes = dataset[0].n_nodes
    for snap in dataset:
        if snap.n_nodes != n_nodes:
            raise ValueError("all snapshots must share the spatial grid")
    if not 1 <= r <= n_nodes:
        raise ValueError(f"r must lie in [1, {n_nodes}]")
    kbar = np.zeros((n_nodes, n_nodes))
    for snap in dataset:
        kbar += _covariance(snap)
    kbar /= len(dataset)
    return _basis_from_covariance(kbar, r, len(dataset))


def align_basis(basis: PodBasis, reference: PodBasis) -> PodBasis:
    """Flip mode signs so that each mode has nonnegative overlap with the
    corresponding reference mode."""
    if basis.modes.shape != reference.modes.shape:
        raise ValueError("basis and reference must share N_x and r")
    overlaps = np.sum(basis.modes * reference.modes, axis=0)
    signs = np.where(overlaps < 0.0, -1.0, 1.0)
    return replace(basis, modes=basis.modes * signs, aligned=True)


def project_trajectory(Y: SnapshotMatrix, basis: PodBasis, gap: int) -> CoefficientTrajectory:
    """Project a snapshot trajectory onto the basis, keeping every
    ``gap``-th column: a_i(t_l) = phi_i . Y[:, l*gap]."""
    if Y.n_nodes != basis.n_nodes:
        raise ValueError("snapshot and basis must share the spatial grid")
    if Y.n_times < 2:
        raise ValueError("trajectory must contain at least 2 snapshots")
    if gap < 1:
        raise ValueError("gap must be at least 1")
    if gap > Y.n_times - 1:
        raise ValueError(f"gap must not exceed N_t - 1 = {Y.n_times - 1}")
    coefficients = basis.modes.T @ Y.values[:, ::gap]
    return CoefficientTrajectory(
        values=coefficients, delta=gap * Y.dt, gap=gap, t0=Y.t0
    )


def energy_capture(Y: SnapshotMatrix, basis: PodBasis) -> float:
    """Fraction of the trajectory's discrete energy retained by the modes:
    ||Phi PhiT Y||_F^2 / ||Y||_F^2.  A zero trajectory returns 1 with a
    warning."""
    if Y.n_nodes != basis.n_nodes:
        raise ValueError("snapshot and basis must share the spatial grid")
    total = float(np.sum(Y.values**2))
    if total == 0.0:
        warnings.warn("zero snapshot matrix: energy capture defined as 1")
        return 1.0
    retained = float(np.sum((basis.modes.T @ Y.values) ** 2))
    return retained / total


def pod_errors(
    basis_M: PodBasis, reference: PodBasis, mass_weight: FemOperators
) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode L2(0, 1) errors and per-eigenvalue absolute errors
    against a reference basis.

    The mode error is the mass-matrix norm of the nodal difference, i.e.
    the continuum L2 norm of the difference of the piecewise-linear
    interpolants.  ``basis_M`` must have been sign-aligned against
    ``reference`` via :func:`align_basis`.
    """
    if not basis_M.aligned:
        raise ValueError("basis must be aligned against the reference first")
    if basis_M.modes.shape != reference.modes.shape:
        raise ValueError("basis and reference must share N_x and r")
    if basis_M.n_nodes != mass_weight.n_nodes:
        raise ValueError("basis and mass weight must share the spatial grid")
    r = basis_M.r
    mode_errors = np.asarray(mass_norm(basis_M.modes - reference.modes, mass_weight))
    eigenvalue_errors = np.abs(basis_M.eigenvalues[:r] - reference.eigenvalues[:r])
    return mode_errors, eigenvalue_errors
