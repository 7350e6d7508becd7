"""Full-order solver for the 1D viscous Burgers equation.

Piecewise-linear finite elements on a uniform mesh over (0, 1) with
homogeneous Dirichlet boundaries; time stepping by implicit Euler with a
Newton solve per step.  Also provides random initial-condition sampling
and multi-trajectory dataset generation.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import BlowupError, NumericalError, SolverDivergenceError
from .rng import TRAINING_ICS, RandomStream, derive_seed

NEWTON_TOL = 1e-10
MAX_NEWTON_ITERATIONS = 50


@dataclass(frozen=True)
class FemOperators:
    """Interior-node mass and stiffness matrices of the uniform mesh.

    ``mass`` is (h/6) tridiag(1, 4, 1) and ``stiffness`` is
    (1/h) tridiag(-1, 2, -1), both of size (n_elements - 1)^2.
    """

    n_elements: int
    h: float
    mass: np.ndarray
    stiffness: np.ndarray

    @property
    def n_nodes(self) -> int:
        """Grid points including both boundaries."""
        return self.n_elements + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_nodes)


@dataclass(frozen=True)
class InitialConditionSpec:
    """Random initial profile u0(x) = sum_k (w_k / k) sin(pi k x) with
    i.i.d. Gaussian weights w_k."""

    n_terms: int = 50
    mean: float = 0.5
    std: float = 0.2

    def __post_init__(self):
        if self.n_terms < 1:
            raise ValueError("n_terms must be at least 1")
        if self.std < 0:
            raise ValueError("std must be nonnegative")


@dataclass(frozen=True)
class SnapshotMatrix:
    """One trajectory of nodal solution values, shape (N_x, N_t).

    Rows are spatial nodes including both boundaries (identically zero),
    columns are time instances t0 + l*dt.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ValueError("snapshot values must be a 2D array")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(values)):
            raise ValueError("snapshot values must be finite")
        if np.any(values[0] != 0.0) or np.any(values[-1] != 0.0):
            raise ValueError("boundary rows must be exactly zero")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_times)


def assemble_fem_operators(n_elements: int) -> FemOperators:
    """Assemble mass and stiffness matrices for interior hat functions.

    Parameters
    ----------
    n_elements : int
        Number of mesh elements; must be at least 2 so that at least one
        interior node exists.
    """
    if n_elements < 2:
        raise ValueError("n_elements must be at least 2")
    n_interior = n_elements - 1
    h = 1.0 / n_elements
    ones = np.ones(n_interior - 1)
    mass = (h / 6.0) * (
        4.0 * np.eye(n_interior) + np.diag(ones, 1) + np.diag(ones, -1)
    )
    stiffness = (1.0 / h) * (
        2.0 * np.eye(n_interior) - np.diag(ones, 1) - np.diag(ones, -1)
    )
    return FemOperators(n_elements=n_elements, h=h, mass=mass, stiffness=stiffness)


def mass_norm(values: np.ndarray, fem: FemOperators) -> np.ndarray | float:
    """Discrete L2(0, 1) norm of nodal vectors with zero boundary values.

    Accepts a single nodal vector (length N_x) or a matrix of column
    vectors; returns a scalar or a vector of norms accordingly.
    """
    values = np.asarray(values, dtype=np.float64)
    interior = values[1:-1]
    products = np.sum(interior * (fem.mass @ interior), axis=0)
    result = np.sqrt(np.maximum(products, 0.0))
    return float(result) if np.isscalar(products) or products.ndim == 0 else result


def sample_initial_condition(
    spec: InitialConditionSpec, fem: FemOperators, rng: RandomStream
) -> np.ndarray:
    """Sample nodal values of the random sine-series initial profile.

    Weights w_k are drawn i.i.d. from Normal(mean, std^2) using the
    stream's first ``n_terms`` normal variates.  Endpoint values are
    forced to exact zero.
    """
    weights = spec.mean + spec.std * rng.normals(spec.n_terms)
    k = np.arange(1, spec.n_terms + 1)
    u0 = np.sin(np.pi * np.outer(fem.nodes, k)) @ (weights / k)
    u0[0] = 0.0
    u0[-1] = 0.0
    return u0


def _convection(v: np.ndarray) -> np.ndarray:
    """Exact convection integrals N_i(U) = int u_h (u_h)_x phi_i dx for
    interior nodes, with implied zero boundary values."""
    n = v.size
    vm = np.zeros(n)
    vm[1:] = v[:-1]
    vp = np.zeros(n)
    vp[:-1] = v[1:]
    return (vp * vp - vm * vm + v * vp - v * vm) / 6.0


def _convection_jacobian_banded(v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tridiagonal Jacobian of the convection term: (sub, diag, super)."""
    vm = np.zeros(v.size)
    vm[1:] = v[:-1]
    vp = np.zeros(v.size)
    vp[:-1] = v[1:]
    diag = (vp - vm) / 6.0
    # d N_{i+1} / d U_i and d N_i / d U_{i+1}
    sub = -(v[1:] + 2.0 * v[:-1]) / 6.0
    sup = (2.0 * v[1:] + v[:-1]) / 6.0
    return sub, diag, sup


def solve_fom(
    u0: np.ndarray,
    nu: float,
    dt: float,
    t_final: float,
    fem: FemOperators,
    *,
    newton_tol: float = NEWTON_TOL,
    max_iterations: int = MAX_NEWTON_ITERATIONS,
) -> SnapshotMatrix:
    """March the fully implicit FEM system from u0 to t_final.

    Each step solves M (U^{n+1} - U^n)/dt = -nu S U^{n+1} - N(U^{n+1})
    by Newton iteration with the analytic tridiagonal Jacobian, starting
    from U^n, to absolute residual tolerance ``newton_tol`` in the max
    norm.

    Returns
    -------
    SnapshotMatrix
        N_t = t_final/dt + 1 columns; column 0 is u0.

    Raises
    ------
    ValueError
        If u0 violates the boundary conditions or t_final is not an
        integer multiple of dt.
    SolverDivergenceError
        If Newton does not converge within ``max_iterations``.
    BlowupError
        If the state becomes non-finite.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (fem.n_nodes,):
        raise ValueError(f"u0 must have length {fem.n_nodes}")
    if u0[0] != 0.0 or u0[-1] != 0.0:
        raise ValueError("u0 must vanish at both boundaries")
    if not np.all(np.isfinite(u0)):
        raise ValueError("u0 must be finite")
    if nu <= 0:
        raise ValueError("nu must be positive")
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    ratio = t_final / dt
    n_steps = int(round(ratio))
    if n_steps < 1 or abs(ratio - n_steps) > 1e-9 * max(1.0, ratio):
        raise ValueError("t_final must be a positive integer multiple of dt")

    h = fem.h
    n_interior = fem.n_elements - 1
    snapshots = np.zeros((fem.n_nodes, n_steps + 1))
    snapshots[:, 0] = u0

    mass_diag = 4.0 * h / 6.0
    mass_off = h / 6.0
    stiff_diag = 2.0 / h
    stiff_off = -1.0 / h

    def mass_apply(w):
        out = mass_diag * w
        out[:-1] += mass_off * w[1:]
        out[1:] += mass_off * w[:-1]
        return out

    def stiffness_apply(w):
        out = stiff_diag * w
        out[:-1] += stiff_off * w[1:]
        out[1:] += stiff_off * w[:-1]
        return out

    banded = np.zeros((3, n_interior))
    u = u0[1:-1].copy()
    for step in range(1, n_steps + 1):
        mass_u = mass_apply(u)
        v = u.copy()
        for _ in range(max_iterations):
            residual = (mass_apply(v) - mass_u) / dt + nu * stiffness_apply(v) + _convection(v)
            if not np.all(np.isfinite(residual)):
                raise BlowupError(step_index=step, state_norm=float("inf"))
            if np.max(np.abs(residual)) <= newton_tol:
                break
            sub, diag, sup = _convection_jacobian_banded(v)
            banded[1, :] = mass_diag / dt + nu * stiff_diag + diag
            banded[0, 1:] = mass_off / dt + nu * stiff_off + sup
            banded[2, :-1] = mass_off / dt + nu * stiff_off + sub
            v = v - solve_banded((1, 1), banded, residual)
        else:
            residual = (mass_apply(v) - mass_u) / dt + nu * stiffness_apply(v) + _convection(v)
            residual_norm = float(np.max(np.abs(residual)))
            if not np.isfinite(residual_norm):
                raise BlowupError(step_index=step, state_norm=float("inf"))
            if residual_norm > newton_tol:
                raise SolverDivergenceError(step, residual_norm)
        snapshots[1:-1, step] = v
        u = v
    return SnapshotMatrix(values=snapshots, dt=dt, t0=0.0)


def _solve_one_trajectory(args) -> SnapshotMatrix:
    spec, nu, dt, t_final, fem, sub_seed = args
    u0 = sample_initial_condition(spec, fem, RandomStream(sub_seed))
    return solve_fom(u0, nu, dt, t_final, fem)


def generate_dataset(
    spec: InitialConditionSpec,
    nu: float,
    dt: float,
    t_final: float,
    fem: FemOperators,
    n_trajectories: int,
    seed: int,
    *,
    n_jobs: int = 1,
) -> list[SnapshotMatrix]:
    """Generate ``n_trajectories`` independent FOM trajectories.

    Trajectory m draws its initial condition from the sub-seed
    ``derive_seed(seed, TRAINING_ICS, m)`` (a domain disjoint from test
    initial conditions and ensemble noise), so the result is a pure
    function of its arguments: independent of execution order and of the
    degree of parallelism (``n_jobs`` processes).
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    if n_jobs < 1:
        raise ValueError("n_jobs must be at least 1")
    jobs = [
        (spec, nu, dt, t_final, fem, trajectory_sub_seed(seed, m))
        for m in range(n_trajectories)
    ]
    dataset: list[SnapshotMatrix] = []
    if n_jobs == 1:
        results = map(_solve_one_trajectory, jobs)
    else:
        executor = ProcessPoolExecutor(max_workers=n_jobs)
        results = executor.map(_solve_one_trajectory, jobs)
    try:
        for snap in results:
            dataset.append(snap)
    except NumericalError as err:
        err.trajectory_index = len(dataset)
        raise
    finally:
        if n_jobs > 1:
            executor.shutdown()
    return dataset


def trajectory_sub_seed(seed: int, trajectory_index: int) -> int:
    """The sub-seed used for trajectory ``trajectory_index`` of a dataset."""
    return derive_seed(seed, TRAINING_ICS, trajectory_index)
