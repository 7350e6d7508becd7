"""Data-driven stochastic reduced-order modeling of viscous Burgers flow.

The pipeline: finite-element full-order solves over random initial
conditions, ensemble proper orthogonal decomposition, Galerkin
projection, least-squares closure inference with optional Tikhonov
regularization, and stochastic reduced-order simulation, plus the
studies quantifying convergence, prediction accuracy, and stability.
"""

from .closure import (
    ClosureParameters,
    LCurveResult,
    RegressionSystem,
    accumulate_system,
    compute_features,
    compute_residual_targets,
    estimator_errors,
    fit_closure,
    lcurve_select,
    tikhonov_solve,
    zero_closure,
)
from .config import (
    PipelineConfig,
    config_hash,
    load_config,
    save_config,
)
from .engine import (
    BLOWUP_NORM,
    EnsembleResult,
    RomTrajectory,
    SromModel,
    reconstruct_field,
    simulate_deterministic,
    simulate_ensemble,
)
from .errors import (
    BlowupError,
    ConfigError,
    CurvatureMeshError,
    IllPosedSystemError,
    ManifestError,
    MissingInputError,
    NumericalError,
    SolverDivergenceError,
    SromError,
)
from .fem import (
    FemOperators,
    InitialConditionSpec,
    SnapshotMatrix,
    assemble_fem_operators,
    generate_dataset,
    mass_norm,
    sample_initial_condition,
    solve_fom,
    trajectory_sub_seed,
)
from .galerkin import GalerkinOperators, assemble_galerkin, grom_drift
from .pod import (
    CoefficientTrajectory,
    PodBasis,
    align_basis,
    energy_capture,
    ensemble_pod,
    pod_errors,
    project_trajectory,
)
from .rng import RandomStream, derive_seed
from .studies import (
    SlopeFit,
    StudyReport,
    StudyTable,
    ensemble_study,
    estimator_convergence_study,
    fit_loglog_slope,
    load_report,
    pod_convergence_study,
    prediction_study,
    rmse_curve,
    save_report,
    spacetime_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "BLOWUP_NORM",
    "BlowupError",
    "ClosureParameters",
    "CoefficientTrajectory",
    "ConfigError",
    "CurvatureMeshError",
    "EnsembleResult",
    "FemOperators",
    "GalerkinOperators",
    "IllPosedSystemError",
    "InitialConditionSpec",
    "LCurveResult",
    "ManifestError",
    "MissingInputError",
    "NumericalError",
    "PipelineConfig",
    "PodBasis",
    "RandomStream",
    "RegressionSystem",
    "RomTrajectory",
    "SlopeFit",
    "SnapshotMatrix",
    "SolverDivergenceError",
    "SromError",
    "SromModel",
    "StudyReport",
    "StudyTable",
    "accumulate_system",
    "align_basis",
    "assemble_fem_operators",
    "assemble_galerkin",
    "compute_features",
    "compute_residual_targets",
    "config_hash",
    "derive_seed",
    "energy_capture",
    "ensemble_pod",
    "ensemble_study",
    "estimator_convergence_study",
    "estimator_errors",
    "fit_closure",
    "fit_loglog_slope",
    "generate_dataset",
    "grom_drift",
    "lcurve_select",
    "load_config",
    "load_report",
    "mass_norm",
    "pod_convergence_study",
    "pod_errors",
    "prediction_study",
    "project_trajectory",
    "reconstruct_field",
    "rmse_curve",
    "sample_initial_condition",
    "save_config",
    "save_report",
    "simulate_deterministic",
    "simulate_ensemble",
    "solve_fom",
    "spacetime_sweep",
    "tikhonov_solve",
    "trajectory_sub_seed",
    "zero_closure",
]
