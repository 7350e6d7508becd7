"""Closure inference by multi-trajectory least squares.

Learns the correction operators of the reduced map from flow-map
residuals: targets F(t_l) = (a(t_{l+1}) - a(t_l))/delta - F_galerkin(a(t_l))
are regressed on linear and quadratic monomial features of the state,
with optional Tikhonov regularization and curvature-based selection of
the regularization strength.  The diagonal noise amplitude is estimated
from the residual variance of the fit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CurvatureMeshError, IllPosedSystemError
from .galerkin import GalerkinOperators, drift_columns
from .pod import CoefficientTrajectory

__all__ = [
    "RegressionSystem",
    "ClosureParameters",
    "LCurveResult",
    "feature_count",
    "quadratic_pairs",
    "compute_features",
    "compute_residual_targets",
    "accumulate_system",
    "tikhonov_solve",
    "lcurve_select",
    "fit_closure",
    "closure_from_coefficients",
    "zero_closure",
    "pack_coefficients",
    "unpack_coefficients",
    "residual_mse",
    "normal_equation_residual",
    "estimator_errors",
]

# relative eigenvalue cutoff for the minimum-norm solve at lambda = 0
_PINV_RTOL = 1e-13
# relative tolerance below which a negative eigenvalue marks the
# symmetrized normal matrix as indefinite rather than merely rounded
_INDEFINITE_RTOL = 1e-8


def feature_count(r: int) -> int:
    """Number of features n_r = r + r(r+1)/2."""
    return r + r * (r + 1) // 2


def quadratic_pairs(r: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), j <= i, of the quadratic monomials a_i a_j in
    lexicographic order of (i, j); 0-based."""
    return [(i, j) for i in range(r) for j in range(i + 1)]


def compute_features(a: np.ndarray) -> np.ndarray:
    """Feature vector psi(a) = (a_1..a_r, then a_i a_j for j <= i).

    Accepts a single state (length r) or a matrix of column states
    (r, n); returns (n_r,) or (n_r, n) accordingly.
    """
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    states = a[:, None] if single else a
    if states.ndim != 2:
        raise ValueError("state must be a vector or a matrix of columns")
    r = states.shape[0]
    features = np.empty((feature_count(r), states.shape[1]))
    features[:r] = states
    for row, (i, j) in enumerate(quadratic_pairs(r)):
        features[r + row] = states[i] * states[j]
    return features[:, 0] if single else features


def compute_residual_targets(
    traj: CoefficientTrajectory, ops: GalerkinOperators
) -> np.ndarray:
    """Flow-map residual targets, shape (r, n_t - 1):
    F(t_l) = (a(t_{l+1}) - a(t_l)) / delta - drift(a(t_l))."""
    if traj.r != ops.r:
        raise ValueError("trajectory and operators must share r")
    if traj.n_times < 2:
        raise ValueError("trajectory must contain at least 2 samples")
    a = traj.values
    increments = (a[:, 1:] - a[:, :-1]) / traj.delta
    return increments - drift_columns(ops, a[:, :-1])


@dataclass(frozen=True)
class RegressionSystem:
    """Aggregated normal equations of the closure regression.

    ``normal_matrix`` is the trajectory-average of (1/n_t) sum_l psi psiT,
    ``rhs`` of (1/n_t) sum_l psi F(t_l)T.  ``sum_sq_targets`` holds the
    raw per-mode sums of squared targets over all samples so that the
    data-space residual of any coefficient matrix is recoverable without
    the data.  ``n_samples`` counts trajectory-snapshot pairs, M * n_t,
    matching the normalization of the aggregates.
    """

    normal_matrix: np.ndarray
    rhs: np.ndarray
    sum_sq_targets: np.ndarray
    r: int
    delta: float
    n_snapshots: int
    n_trajectories: int

    @property
    def n_r(self) -> int:
        return feature_count(self.r)

    @property
    def n_samples(self) -> int:
        return self.n_trajectories * self.n_snapshots


@dataclass(frozen=True)
class ClosureParameters:
    """Learned closure: linear correction (r x r), quadratic correction
    (r x r x r, symmetric output slices), per-mode noise amplitudes, the
    regularization strength used, and the training loss at the fit."""

    linear: np.ndarray
    quadratic: np.ndarray
    sigma: np.ndarray
    lambda_used: float
    fit_loss: float

    def __post_init__(self):
        linear = np.asarray(self.linear, dtype=np.float64)
        quadratic = np.asarray(self.quadratic, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quadratic)
        object.__setattr__(self, "sigma", sigma)
        r = linear.shape[0]
        if linear.shape != (r, r):
            raise ValueError("linear correction must be square")
        if quadratic.shape != (r, r, r):
            raise ValueError("quadratic correction must have shape (r, r, r)")
        if sigma.shape != (r,):
            raise ValueError("sigma must have length r")
        if np.any(sigma < 0):
            raise ValueError("sigma entries must be nonnegative")
        if self.lambda_used < 0:
            raise ValueError("lambda_used must be nonnegative")
        asym = np.max(np.abs(quadratic - quadratic.transpose(1, 0, 2)))
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(quadratic)))):
            raise ValueError("quadratic correction slices must be symmetric")

    @property
    def r(self) -> int:
        return self.linear.shape[0]


def zero_closure(r: int) -> ClosureParameters:
    """The closure of the plain Galerkin model: all corrections zero."""
    return ClosureParameters(
        linear=np.zeros((r, r)),
        quadratic=np.zeros((r, r, r)),
        sigma=np.zeros(r),
        lambda_used=0.0,
        fit_loss=0.0,
    )


def accumulate_system(
    trajectories: Sequence[CoefficientTrajectory], ops: GalerkinOperators
) -> RegressionSystem:
    """Aggregate the normal equations over trajectories.

    All trajectories must share r, delta, and the snapshot count; sums
    run over the n_t - 1 steps with both endpoints available and are
    normalized by n_t per trajectory before averaging over trajectories.
    """
    if len(trajectories) == 0:
        raise ValueError("at least one trajectory is required")
    first = trajectories[0]
    r = first.r
    if r != ops.r:
        raise ValueError("trajectories and operators must share r")
    delta = first.delta
    n_snapshots = first.n_times
    if n_snapshots < 2:
        raise ValueError("trajectories must contain at least 2 samples")
    n_r = feature_count(r)
    normal = np.zeros((n_r, n_r))
    rhs = np.zeros((n_r, r))
    sum_sq = np.zeros(r)
    for traj in trajectories:
        if traj.r != r:
            raise ValueError("mixed r across trajectories")
        if abs(traj.delta - delta) > 1e-12 * delta:
            raise ValueError("mixed delta across trajectories")
        if traj.n_times != n_snapshots:
            raise ValueError("mixed snapshot counts across trajectories")
        features = compute_features(traj.values[:, :-1])
        targets = compute_residual_targets(traj, ops)
        normal += (features @ features.T) / n_snapshots
        rhs += (features @ targets.T) / n_snapshots
        sum_sq += np.sum(targets**2, axis=1)
    count = len(trajectories)
    normal /= count
    rhs /= count
    normal = 0.5 * (normal + normal.T)
    return RegressionSystem(
        normal_matrix=normal,
        rhs=rhs,
        sum_sq_targets=sum_sq,
        r=r,
        delta=delta,
        n_snapshots=n_snapshots,
        n_trajectories=count,
    )


def _spectral_factor(system: RegressionSystem) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the symmetrized normal matrix, with the
    indefiniteness guard."""
    sym = 0.5 * (system.normal_matrix + system.normal_matrix.T)
    eigenvalues, vectors = np.linalg.eigh(sym)
    largest = float(eigenvalues[-1])
    if eigenvalues[0] < -_INDEFINITE_RTOL * max(largest, 1e-300):
        raise IllPosedSystemError(
            f"normal matrix is numerically indefinite "
            f"(eigenvalue range [{eigenvalues[0]:.3e}, {largest:.3e}])"
        )
    return eigenvalues, vectors


def _solve_from_factor(
    eigenvalues: np.ndarray, vectors: np.ndarray, rhs: np.ndarray, lam: float
) -> np.ndarray:
    clipped = np.maximum(eigenvalues, 0.0)
    if lam == 0.0:
        cutoff = _PINV_RTOL * max(float(clipped[-1]), 0.0)
        inverse = np.where(clipped > cutoff, 1.0, 0.0) / np.where(
            clipped > cutoff, clipped, 1.0
        )
    else:
        inverse = 1.0 / (clipped + lam)
    return vectors @ (inverse[:, None] * (vectors.T @ rhs))


def tikhonov_solve(system: RegressionSystem, lam: float) -> np.ndarray:
    """Solve (A + lambda I) c = b for the coefficient matrix (n_r x r).

    At lambda = 0 with a singular normal matrix, the minimum-norm
    solution is returned (eigenvalues below a relative cutoff are
    treated as zero).
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    eigenvalues, vectors = _spectral_factor(system)
    return _solve_from_factor(eigenvalues, vectors, system.rhs, lam)


def residual_mse(system: RegressionSystem, coefficients: np.ndarray) -> np.ndarray:
    """Per-mode mean squared data residual of a coefficient matrix,
    (1/n_samples) sum over samples of (F_k - psi . c_k)^2, recovered from
    the stored aggregates.  Clamped at zero against rounding."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (system.n_r, system.r):
        raise ValueError(f"coefficients must have shape ({system.n_r}, {system.r})")
    scale = float(system.n_samples)
    cross = np.einsum("jk,jk->k", coefficients, system.rhs)
    quad = np.einsum("jk,jl,lk->k", coefficients, system.normal_matrix, coefficients)
    per_mode = system.sum_sq_targets / scale - 2.0 * cross + quad
    return np.maximum(per_mode, 0.0)


def normal_equation_residual(system: RegressionSystem, coefficients: np.ndarray) -> np.ndarray:
    """Diagnostic per-mode norm of the normal-equation defect,
    ||A c_k - b_k||.  Vanishes identically at the unregularized optimum,
    so it measures optimality rather than noise; kept for comparison
    with the residual-variance noise estimate."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    defect = system.normal_matrix @ coefficients - system.rhs
    return np.linalg.norm(defect, axis=0)


@dataclass(frozen=True)
class LCurveResult:
    """Curvature analysis of the residual-norm trade-off curve.

    ``mesh`` holds the lambda mesh with the corresponding data residuals
    (mean squared), coefficient Frobenius norms, and curvature values
    (NaN where a log coordinate or a central difference is unavailable).
    ``degenerate`` flags an identically-zero right-hand side, for which
    selection is meaningless and lambda_star is 0.
    """

    mesh: np.ndarray
    residual: np.ndarray
    coefficient_norm: np.ndarray
    curvature: np.ndarray
    lambda_star: float
    degenerate: bool = False


def lcurve_select(system: RegressionSystem, n_mesh: int = 100) -> LCurveResult:
    """Select the regularization strength of maximal curvature.

    Builds a logarithmic mesh of ``n_mesh`` values between
    max(lambda_min(A), floor) and lambda_max(A) (floor at 1e-14 times the
    largest eigenvalue), computes x = log residual and y = log
    coefficient norm along it, and returns the mesh point maximizing the
    curvature kappa = (x'y'' - x''y') / (x'^2 + y'^2)^{3/2} evaluated by
    central differences in log lambda.  A single lambda serves all output
    modes jointly.
    """
    if n_mesh < 3:
        raise CurvatureMeshError("the mesh needs at least 3 points")
    if not np.any(system.rhs):
        return LCurveResult(
            mesh=np.zeros(0),
            residual=np.zeros(0),
            coefficient_norm=np.zeros(0),
            curvature=np.zeros(0),
            lambda_star=0.0,
            degenerate=True,
        )
    eigenvalues, vectors = _spectral_factor(system)
    largest = float(eigenvalues[-1])
    if largest <= 0.0:
        raise IllPosedSystemError("normal matrix has no positive eigenvalue")
    low = max(float(eigenvalues[0]), largest * 1e-14)
    mesh = np.geomspace(low, largest, n_mesh)
    residual = np.empty(n_mesh)
    norms = np.empty(n_mesh)
    for index, lam in enumerate(mesh):
        coefficients = _solve_from_factor(eigenvalues, vectors, system.rhs, float(lam))
        residual[index] = float(np.sum(residual_mse(system, coefficients)))
        norms[index] = float(np.linalg.norm(coefficients))
    curvature = np.full(n_mesh, np.nan)
    if low >= largest * (1.0 - 1e-12):
        # perfectly conditioned system: the mesh has no width and the
        # trade-off curve is flat, so the smallest mesh value is returned
        return LCurveResult(mesh, residual, norms, curvature, float(mesh[0]))
    usable = (residual > 0.0) & (norms > 0.0)
    if int(np.count_nonzero(usable)) < 3:
        raise CurvatureMeshError("fewer than 3 usable mesh points")
    t = np.log(mesh[usable])
    x = np.log(residual[usable])
    y = np.log(norms[usable])
    xp = np.gradient(x, t)
    yp = np.gradient(y, t)
    xpp = np.gradient(xp, t)
    ypp = np.gradient(yp, t)
    denominator = (xp**2 + yp**2) ** 1.5
    kappa = np.where(denominator > 0.0, (xp * ypp - xpp * yp), np.nan)
    kappa = kappa / np.where(denominator > 0.0, denominator, 1.0)
    # endpoints use one-sided differences, so restrict the search to
    # interior mesh points
    kappa[0] = np.nan
    kappa[-1] = np.nan
    curvature[usable] = kappa
    if np.all(np.isnan(kappa)):
        raise CurvatureMeshError("curvature undefined on all interior mesh points")
    best = int(np.nanargmax(kappa))
    lambda_star = float(mesh[usable][best])
    return LCurveResult(mesh, residual, norms, curvature, lambda_star)


def pack_coefficients(linear: np.ndarray, quadratic: np.ndarray) -> np.ndarray:
    """Pack closure operators into the regression layout (n_r x r).

    Row i < r of column k is linear[k, i]; the quadratic rows follow the
    monomial ordering, with symmetric off-diagonal slots recombined
    (coefficient of a_i a_j, j < i, is 2 * quadratic[i, j, k])."""
    linear = np.asarray(linear, dtype=np.float64)
    quadratic = np.asarray(quadratic, dtype=np.float64)
    r = linear.shape[0]
    coefficients = np.empty((feature_count(r), r))
    coefficients[:r] = linear.T
    for row, (i, j) in enumerate(quadratic_pairs(r)):
        if i == j:
            coefficients[r + row] = quadratic[i, i, :]
        else:
            coefficients[r + row] = 2.0 * quadratic[i, j, :]
    return coefficients


def unpack_coefficients(coefficients: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_coefficients`: (linear, quadratic) with
    symmetric output slices."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (feature_count(r), r):
        raise ValueError(f"coefficients must have shape ({feature_count(r)}, {r})")
    linear = coefficients[:r].T.copy()
    quadratic = np.zeros((r, r, r))
    for row, (i, j) in enumerate(quadratic_pairs(r)):
        values = coefficients[r + row]
        if i == j:
            quadratic[i, i, :] = values
        else:
            quadratic[i, j, :] = 0.5 * values
            quadratic[j, i, :] = 0.5 * values
    return linear, quadratic


def closure_from_coefficients(
    system: RegressionSystem,
    coefficients: np.ndarray,
    lambda_used: float,
    *,
    sigma_estimator: str = "residual",
) -> ClosureParameters:
    """Build closure parameters from a solved coefficient matrix.

    The noise amplitude uses the residual variance of the fit,
    sigma_k^2 = delta * mean squared residual of F_k, consistent with
    additive noise scaled by sqrt(delta) in the reduced map.  Passing
    ``sigma_estimator="normal_equation"`` substitutes the diagnostic
    normal-equation defect norm instead (near zero at the unregularized
    optimum; not a noise estimate).
    """
    per_mode = residual_mse(system, coefficients)
    fit_loss = float(np.sum(per_mode))
    if sigma_estimator == "residual":
        sigma = np.sqrt(system.delta * per_mode)
    elif sigma_estimator == "normal_equation":
        sigma = normal_equation_residual(system, coefficients)
    else:
        raise ValueError(f"unknown sigma estimator {sigma_estimator!r}")
    linear, quadratic = unpack_coefficients(coefficients, system.r)
    return ClosureParameters(
        linear=linear,
        quadratic=quadratic,
        sigma=sigma,
        lambda_used=float(lambda_used),
        fit_loss=fit_loss,
    )


def fit_closure(
    trajectories: Sequence[CoefficientTrajectory],
    ops: GalerkinOperators,
    mode: str = "none",
    *,
    lam: float | None = None,
    n_mesh: int = 100,
    sigma_estimator: str = "residual",
) -> ClosureParameters:
    """Fit the closure on reduced trajectories.

    ``mode`` selects the regularization strength: ``"none"`` solves the
    plain least-squares problem (minimum-norm when singular), ``"fixed"``
    uses the supplied ``lam``, and ``"lcurve"`` selects the strength of
    maximal curvature on a logarithmic mesh of ``n_mesh`` points.
    """
    system = accumulate_system(trajectories, ops)
    if mode == "none":
        lambda_used = 0.0
    elif mode == "fixed":
        if lam is None:
            raise ValueError("mode 'fixed' requires lam")
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        lambda_used = float(lam)
    elif mode == "lcurve":
        lambda_used = lcurve_select(system, n_mesh).lambda_star
    else:
        raise ValueError(f"unknown regularization mode {mode!r}")
    coefficients = tikhonov_solve(system, lambda_used)
    return closure_from_coefficients(
        system, coefficients, lambda_used, sigma_estimator=sigma_estimator
    )


def estimator_errors(
    fit_M: ClosureParameters, fit_ref: ClosureParameters
) -> tuple[float, float, float]:
    """Normalized Frobenius errors between two closures.

    Returns square roots of: the mean squared linear difference over the
    r^2 entries; 2/(r^2 (r+1)) times the squared quadratic difference
    summed over the upper-triangular slots of every output slice; and
    the mean squared noise-amplitude difference over the r modes.
    """
    if fit_M.r != fit_ref.r:
        raise ValueError("fits must share r")
    r = fit_M.r
    err_linear = np.sqrt(np.sum((fit_M.linear - fit_ref.linear) ** 2) / r**2)
    rows, cols = np.triu_indices(r)
    quad_diff = fit_M.quadratic - fit_ref.quadratic
    err_quadratic = np.sqrt(
        2.0 * np.sum(quad_diff[rows, cols, :] ** 2) / (r**2 * (r + 1))
    )
    err_sigma = np.sqrt(np.sum((fit_M.sigma - fit_ref.sigma) ** 2) / r)
    return float(err_linear), float(err_quadratic), float(err_sigma)
