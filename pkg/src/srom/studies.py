"""Quantitative studies: convergence rates, prediction accuracy,
ensemble statistics, and the stability sweep over (r, gap).

Each study is a pure function of (data, config): reports carry named
columnar tables with units, fitted log-log slopes where applicable, and
the seed, and serialize losslessly to a directory of CSV files plus a
JSON index.  Scalar findings (overfit ratio, stability boundaries,
boxplot statistics) are stored in one-row summary tables.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .closure import fit_closure, estimator_errors, zero_closure
from .config import PipelineConfig
from .engine import RomTrajectory, SromModel, simulate_deterministic, simulate_ensemble
from .errors import ConfigError, MissingInputError
from .fem import (
    FemOperators,
    InitialConditionSpec,
    SnapshotMatrix,
    assemble_fem_operators,
    sample_initial_condition,
    solve_fom,
)
from .galerkin import GalerkinOperators, assemble_galerkin
from .pod import (
    CoefficientTrajectory,
    PodBasis,
    _basis_from_covariance,
    _covariance,
    align_basis,
    ensemble_pod,
    pod_errors,
    project_trajectory,
)
from .rng import ENSEMBLE_NOISE, TEST_ICS, RandomStream, derive_seed

__all__ = [
    "SlopeFit",
    "StudyTable",
    "StudyReport",
    "rmse_curve",
    "fit_loglog_slope",
    "default_ladder",
    "boxplot_stats",
    "pod_convergence_study",
    "estimator_convergence_study",
    "prediction_study",
    "ensemble_study",
    "spacetime_sweep",
    "save_report",
    "load_report",
]

REPORT_NAME = "report.json"
REPORT_FORMAT_VERSION = 1


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


@dataclass(frozen=True)
class StudyTable:
    """One columnar dataset: equally long float columns, each with a
    unit string ("1" marks a dimensionless quantity).  NaN cells are
    markers for unavailable values (blowups, not-applicable)."""

    name: str
    columns: Mapping[str, np.ndarray]
    units: Mapping[str, str]

    def __post_init__(self):
        columns = {
            key: np.asarray(value, dtype=np.float64)
            for key, value in self.columns.items()
        }
        object.__setattr__(self, "columns", columns)
        if set(columns) != set(self.units):
            raise ValueError("every column needs a unit")
        lengths = {column.shape for column in columns.values()}
        if len(lengths) > 1 or any(len(shape) != 1 for shape in lengths):
            raise ValueError("columns must be 1D and equally long")

    @property
    def n_rows(self) -> int:
        first = next(iter(self.columns.values()), np.zeros(0))
        return first.shape[0]


@dataclass(frozen=True)
class StudyReport:
    """Output of one study: identifying tag, the full parameter record,
    named tables, fitted slopes where applicable, and the seed."""

    study_id: str
    config: Mapping
    tables: Mapping[str, StudyTable]
    fitted_slopes: Mapping[str, SlopeFit] = field(default_factory=dict)
    seed: int = 0


def rmse_curve(predicted, reference) -> np.ndarray:
    """Euclidean coefficient error at each shared time instant.

    Accepts trajectory objects (anything with ``values`` and ``times``)
    or plain (r, n_t) arrays; shapes and time grids must agree.
    """
    pv, pt = _values_and_times(predicted)
    rv, rt = _values_and_times(reference)
    if pv.shape != rv.shape:
        raise ValueError("trajectory shapes differ")
    if pt is not None and rt is not None:
        if not np.allclose(pt, rt, rtol=0.0, atol=1e-10):
            raise ValueError("time grids differ")
    return np.linalg.norm(pv - rv, axis=0)


def _values_and_times(traj) -> tuple[np.ndarray, np.ndarray | None]:
    if hasattr(traj, "values"):
        return np.asarray(traj.values, dtype=np.float64), np.asarray(traj.times)
    return np.asarray(traj, dtype=np.float64), None


def fit_loglog_slope(xs, ys) -> SlopeFit:
    """Ordinary least squares of log y on log x."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be equally long vectors")
    if xs.size < 3:
        raise ValueError("at least 3 points are required")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit requires positive values")
    lx = np.log(xs)
    ly = np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    residuals = ly - (slope * lx + intercept)
    total = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residuals**2)) / total if total > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), r_squared)


def default_ladder(m_max: int) -> list[int]:
    """Geometric sample-count ladder floor(10^(1 + 2j/9)), j = 0..9,
    clipped at m_max / 2 and deduplicated."""
    cap = m_max // 2
    rungs = sorted({min(int(10 ** (1 + 2 * j / 9)), cap) for j in range(10)})
    if len(rungs) < 3:
        raise ConfigError(f"dataset of {m_max} trajectories is too small for a ladder")
    return rungs


def boxplot_stats(values: np.ndarray) -> dict[str, float]:
    """Median, quartiles, 1.5*IQR whiskers, and outlier count."""
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return {key: math.nan for key in (
            "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers",
        )}
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    in_low = values[values >= q1 - 1.5 * iqr]
    in_high = values[values <= q3 + 1.5 * iqr]
    n_outliers = np.count_nonzero((values < q1 - 1.5 * iqr) | (values > q3 + 1.5 * iqr))
    return {
        "median": float(median),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(in_low.min()),
        "whisker_high": float(in_high.max()),
        "n_outliers": float(n_outliers),
    }


def _resolve_ladder(dataset_size: int, config: PipelineConfig) -> list[int]:
    ladder = config.study.ladder
    if ladder is None:
        return default_ladder(dataset_size)
    if max(ladder) > dataset_size // 2:
        raise ConfigError("study.ladder exceeds half the dataset size")
    return list(ladder)


def _check_dataset(dataset: Sequence[SnapshotMatrix], fem: FemOperators) -> None:
    if len(dataset) == 0:
        raise MissingInputError("the dataset is empty")
    for snapshots in dataset:
        if snapshots.n_nodes != fem.n_nodes:
            raise ValueError("dataset resolution disagrees with the configuration")


def pod_convergence_study(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> StudyReport:
    """Mode and eigenvalue errors of the sample basis versus the
    full-dataset reference along the sample-count ladder, with fitted
    log-log slopes per mode index.

    Covariances accumulate over a single pass in trajectory order, so
    the rung-M basis uses exactly the first M trajectories.
    """
    fem = assemble_fem_operators(config.physics.n_elements)
    _check_dataset(dataset, fem)
    r = config.reduction.r
    ladder = _resolve_ladder(len(dataset), config)
    running = np.zeros((fem.n_nodes, fem.n_nodes))
    bases: dict[int, PodBasis] = {}
    targets = set(ladder)
    for count, snapshots in enumerate(dataset, start=1):
        running += _covariance(snapshots)
        if count in targets:
            bases[count] = _basis_from_covariance(running / count, r, count)
    reference = _basis_from_covariance(running / len(dataset), r, len(dataset))
    reference = align_basis(reference, reference)

    mode_columns: dict[str, np.ndarray] = {"M": np.asarray(ladder, dtype=np.float64)}
    eig_columns: dict[str, np.ndarray] = {"M": np.asarray(ladder, dtype=np.float64)}
    mode_errors = np.empty((len(ladder), r))
    eig_errors = np.empty((len(ladder), r))
    for row, count in enumerate(ladder):
        aligned = align_basis(bases[count], reference)
        mode_errors[row], eig_errors[row] = pod_errors(aligned, reference, fem)
    slopes: dict[str, SlopeFit] = {}
    for j in range(r):
        mode_columns[f"mode_{j + 1}"] = mode_errors[:, j]
        eig_columns[f"eigenvalue_{j + 1}"] = eig_errors[:, j]
        for label, errors in (
            (f"mode_{j + 1}", mode_errors[:, j]),
            (f"eigenvalue_{j + 1}", eig_errors[:, j]),
        ):
            usable = errors > 0
            if np.count_nonzero(usable) >= 3:
                slopes[label] = fit_loglog_slope(
                    np.asarray(ladder, dtype=np.float64)[usable], errors[usable]
                )
    tables = {
        "mode_errors": StudyTable(
            name="mode_errors",
            columns=mode_columns,
            units={key: "1" for key in mode_columns},
        ),
        "eigenvalue_errors": StudyTable(
            name="eigenvalue_errors",
            columns=eig_columns,
            units={key: "1" for key in eig_columns},
        ),
    }
    return StudyReport(
        study_id="pod-convergence",
        config=config.to_dict(),
        tables=tables,
        fitted_slopes=slopes,
        seed=config.data.seed,
    )


def _project_dataset(
    dataset: Sequence[SnapshotMatrix], basis: PodBasis, gap: int
) -> list[CoefficientTrajectory]:
    return [project_trajectory(snapshots, basis, gap) for snapshots in dataset]


def estimator_convergence_study(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> StudyReport:
    """Closure-parameter errors versus the full-dataset fit along the
    sample-count ladder, plus the single-trajectory overfitting
    contrast.

    The basis is fixed (computed once from the full dataset) and all
    fits are unregularized, so the errors measure the least-squares
    estimator alone.
    """
    fem = assemble_fem_operators(config.physics.n_elements)
    _check_dataset(dataset, fem)
    r = config.reduction.r
    gap = config.reduction.gap
    ladder = _resolve_ladder(len(dataset), config)
    basis = ensemble_pod(dataset, r)
    ops = assemble_galerkin(basis, config.physics.nu, fem)
    trajectories = _project_dataset(dataset, basis, gap)
    reference_fit = fit_closure(trajectories, ops, mode="none")

    rows = {
        "M": np.asarray(ladder, dtype=np.float64),
        "linear_error": np.empty(len(ladder)),
        "quadratic_error": np.empty(len(ladder)),
        "sigma_error": np.empty(len(ladder)),
        "sigma_mean": np.empty(len(ladder)),
    }
    for row, count in enumerate(ladder):
        fit_m = fit_closure(trajectories[:count], ops, mode="none")
        err_a, err_b, err_s = estimator_errors(fit_m, reference_fit)
        rows["linear_error"][row] = err_a
        rows["quadratic_error"][row] = err_b
        rows["sigma_error"][row] = err_s
        rows["sigma_mean"][row] = float(np.mean(fit_m.sigma))
    slopes = {
        label: fit_loglog_slope(rows["M"], rows[label])
        for label in ("linear_error", "quadratic_error", "sigma_error")
        if np.all(rows[label] > 0)
    }

    n_single = min(config.study.n_single_trajectory, len(trajectories))
    single = {
        "trajectory": np.arange(n_single, dtype=np.float64),
        "sigma_mean": np.empty(n_single),
        "fit_loss": np.empty(n_single),
        "linear_first": np.empty(n_single),
        "linear_last": np.empty(n_single),
    }
    for index in range(n_single):
        fit_one = fit_closure([trajectories[index]], ops, mode="none")
        single["sigma_mean"][index] = float(np.mean(fit_one.sigma))
        single["fit_loss"][index] = fit_one.fit_loss
        single["linear_first"][index] = float(fit_one.linear[0, 0])
        single["linear_last"][index] = float(fit_one.linear[-1, -1])

    largest = ladder[-1]
    largest_sigma = float(rows["sigma_mean"][-1])
    single_median = float(np.median(single["sigma_mean"]))
    overfit_ratio = largest_sigma / single_median if single_median > 0 else math.inf
    summary = {
        "largest_rung": np.asarray([float(largest)]),
        "sigma_largest_rung": np.asarray([largest_sigma]),
        "sigma_single_median": np.asarray([single_median]),
        "overfit_ratio": np.asarray([overfit_ratio]),
    }
    tables = {
        "estimator_errors": StudyTable(
            name="estimator_errors", columns=rows, units={key: "1" for key in rows}
        ),
        "single_trajectory": StudyTable(
            name="single_trajectory", columns=single, units={key: "1" for key in single}
        ),
        "summary": StudyTable(
            name="summary", columns=summary, units={key: "1" for key in summary}
        ),
    }
    return StudyReport(
        study_id="estimator-convergence",
        config=config.to_dict(),
        tables=tables,
        fitted_slopes=slopes,
        seed=config.data.seed,
    )


class FittedPipeline(NamedTuple):
    """Everything the prediction-stage studies share: the discretization,
    the reduced basis, the projected training data, the Galerkin
    operators, and the fitted stochastic model."""

    fem: FemOperators
    basis: PodBasis
    trajectories: list[CoefficientTrajectory]
    ops: GalerkinOperators
    model: SromModel


def build_pipeline(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> FittedPipeline:
    """Basis, projection, and closure fit at the configured settings."""
    fem = assemble_fem_operators(config.physics.n_elements)
    _check_dataset(dataset, fem)
    basis = ensemble_pod(dataset, config.reduction.r)
    ops = assemble_galerkin(basis, config.physics.nu, fem)
    trajectories = _project_dataset(dataset, basis, config.reduction.gap)
    closure = fit_closure(
        trajectories,
        ops,
        mode=config.regression.mode,
        lam=config.regression.lam,
        n_mesh=config.regression.n_mesh,
    )
    delta = config.reduction.gap * config.physics.dt
    model = SromModel(
        galerkin=ops,
        closure=closure,
        delta=delta,
        provenance={
            "nu": config.physics.nu,
            "n_trajectories": len(dataset),
            "gap": config.reduction.gap,
            "seed": config.data.seed,
            "training_window": [0.0, config.physics.t_final],
        },
    )
    return FittedPipeline(fem, basis, trajectories, ops, model)


def _horizon_steps(config: PipelineConfig) -> int:
    """Fine steps in the prediction window [0, horizon_factor * T]."""
    steps = config.physics.n_steps * config.study.horizon_factor
    rounded = int(round(steps))
    if abs(steps - rounded) > 1e-9 * max(1.0, steps):
        raise ConfigError("the prediction horizon must hold a whole number of steps")
    return rounded


def test_reference(
    config: PipelineConfig,
    fem: FemOperators,
    basis: PodBasis,
    index: int,
    n_fine_steps: int,
    gap: int | None = None,
) -> CoefficientTrajectory:
    """Projected full-order solution for held-out initial condition
    ``index``, drawn from the test seed domain, over ``n_fine_steps``
    fine time steps.  ``gap`` overrides the configured downsampling."""
    spec = InitialConditionSpec(
        n_terms=config.initial_condition.n_terms,
        mean=config.initial_condition.mean,
        std=config.initial_condition.std,
    )
    stream = RandomStream(derive_seed(config.data.seed, TEST_ICS, index))
    u0 = sample_initial_condition(spec, fem, stream)
    dt = config.physics.dt
    snapshots = solve_fom(u0, config.physics.nu, dt, n_fine_steps * dt, fem)
    if gap is None:
        gap = config.reduction.gap
    return project_trajectory(snapshots, basis, gap)


def _deterministic_run(
    model: SromModel, reference: CoefficientTrajectory
) -> RomTrajectory:
    return simulate_deterministic(
        model, reference.values[:, 0], reference.n_times - 1, t0=reference.t0
    )


def _time_avg_rmse(run: RomTrajectory, reference: CoefficientTrajectory) -> float:
    """Mean RMSE over the time grid; NaN when the run blew up."""
    if run.blew_up:
        return math.nan
    return float(np.mean(rmse_curve(run, reference)))


def prediction_study(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> StudyReport:
    """Deterministic prediction on held-out initial conditions: the
    fitted model against the plain Galerkin model, both started from the
    projected full-order state, with per-trajectory RMSE curves and
    boxplot summary statistics of the time-averaged RMSE."""
    pipeline = build_pipeline(dataset, config)
    grom = SromModel(
        galerkin=pipeline.ops,
        closure=zero_closure(config.reduction.r),
        delta=pipeline.model.delta,
    )
    n_fine = _horizon_steps(config)
    n_test = config.study.n_test

    curves: dict[str, np.ndarray] = {}
    per_traj = {
        "trajectory": np.arange(n_test, dtype=np.float64),
        "srom_time_avg_rmse": np.empty(n_test),
        "grom_time_avg_rmse": np.empty(n_test),
        "srom_blowup_step": np.full(n_test, np.nan),
        "grom_blowup_step": np.full(n_test, np.nan),
    }
    times = None
    n_coarse = None
    for index in range(n_test):
        reference = test_reference(config, pipeline.fem, pipeline.basis, index, n_fine)
        if times is None:
            times = reference.times
            n_coarse = reference.n_times
        srom_run = _deterministic_run(pipeline.model, reference)
        grom_run = _deterministic_run(grom, reference)
        per_traj["srom_time_avg_rmse"][index] = _time_avg_rmse(srom_run, reference)
        per_traj["grom_time_avg_rmse"][index] = _time_avg_rmse(grom_run, reference)
        for label, run in (("srom", srom_run), ("grom", grom_run)):
            curve = np.full(n_coarse, np.nan)
            valid = run.n_times
            curve[:valid] = np.linalg.norm(
                run.values - reference.values[:, :valid], axis=0
            )
            curves[f"{label}_rmse_{index}"] = curve
            if run.blew_up:
                per_traj[f"{label}_blowup_step"][index] = float(run.blowup_step)
    curve_columns: dict[str, np.ndarray] = {"t": times}
    curve_columns.update(curves)
    curve_units = {key: "1" for key in curve_columns}
    curve_units["t"] = "time"

    summary_columns: dict[str, np.ndarray] = {}
    for label in ("srom", "grom"):
        stats = boxplot_stats(per_traj[f"{label}_time_avg_rmse"])
        for key, value in stats.items():
            summary_columns[f"{label}_{key}"] = np.asarray([value])
        summary_columns[f"{label}_n_blowups"] = np.asarray(
            [float(np.count_nonzero(np.isfinite(per_traj[f"{label}_blowup_step"])))]
        )
    tables = {
        "rmse_curves": StudyTable(
            name="rmse_curves", columns=curve_columns, units=curve_units
        ),
        "per_trajectory": StudyTable(
            name="per_trajectory",
            columns=per_traj,
            units={key: "1" for key in per_traj},
        ),
        "summary": StudyTable(
            name="summary",
            columns=summary_columns,
            units={key: "1" for key in summary_columns},
        ),
    }
    return StudyReport(
        study_id="prediction",
        config=config.to_dict(),
        tables=tables,
        seed=config.data.seed,
    )


def ensemble_study(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> StudyReport:
    """Stochastic forecasting for the first held-out initial condition:
    percentile band widths and ensemble-mean RMSE over time, plus the
    distribution of the time-averaged ensemble-mean RMSE over repeated
    independent ensembles, compared against the deterministic run."""
    pipeline = build_pipeline(dataset, config)
    n_fine = _horizon_steps(config)
    reference = test_reference(config, pipeline.fem, pipeline.basis, 0, n_fine)
    a0 = reference.values[:, 0]
    n_steps = reference.n_times - 1

    deterministic = _deterministic_run(pipeline.model, reference)
    deterministic_rmse = _time_avg_rmse(deterministic, reference)

    levels = tuple(config.study.percentile_levels)
    rep_rmse = np.empty(config.study.n_repetitions)
    first = None
    for rep in range(config.study.n_repetitions):
        rep_seed = derive_seed(config.data.seed, ENSEMBLE_NOISE, rep)
        result = simulate_ensemble(
            pipeline.model,
            a0,
            n_steps,
            config.study.n_ensemble,
            rep_seed,
            percentile_levels=levels,
        )
        rep_rmse[rep] = float(
            np.mean(np.linalg.norm(result.mean - reference.values, axis=0))
        )
        if rep == 0:
            first = result

    band_columns: dict[str, np.ndarray] = {"t": reference.times}
    band_units = {"t": "time"}
    for level in levels:
        lower, upper = first.percentiles[level]
        band_columns[f"width_{level}"] = np.max(upper - lower, axis=0)
        band_units[f"width_{level}"] = "1"
    band_columns["mean_rmse"] = np.linalg.norm(
        first.mean - reference.values, axis=0
    )
    band_units["mean_rmse"] = "1"

    summary = {
        "deterministic_time_avg_rmse": np.asarray([deterministic_rmse]),
        "ensemble_median_time_avg_rmse": np.asarray([float(np.median(rep_rmse))]),
        "n_blown_members_first": np.asarray([float(len(first.blowup_steps))]),
    }
    tables = {
        "bands": StudyTable(name="bands", columns=band_columns, units=band_units),
        "repetitions": StudyTable(
            name="repetitions",
            columns={
                "repetition": np.arange(config.study.n_repetitions, dtype=np.float64),
                "mean_rmse_time_avg": rep_rmse,
            },
            units={"repetition": "1", "mean_rmse_time_avg": "1"},
        ),
        "summary": StudyTable(
            name="summary", columns=summary, units={key: "1" for key in summary}
        ),
    }
    return StudyReport(
        study_id="ensemble",
        config=config.to_dict(),
        tables=tables,
        seed=config.data.seed,
    )


def spacetime_sweep(
    dataset: Sequence[SnapshotMatrix], config: PipelineConfig
) -> StudyReport:
    """Average held-out prediction RMSE over the (r, gap) grid.

    The basis is computed once at the largest requested dimension and
    truncated per cell, so bases are nested across r.  A cell where any
    prediction blows up records NaN and the blowup count instead of an
    average.  The per-r maximum stable gap is the longest prefix of the
    gap ladder whose cells are all finite.
    """
    fem = assemble_fem_operators(config.physics.n_elements)
    _check_dataset(dataset, fem)
    r_values = sorted(set(config.study.sweep_r))
    gap_values = sorted(set(config.study.sweep_gaps))
    r_max = max(r_values)
    basis_full = ensemble_pod(dataset, r_max)
    ops_full = assemble_galerkin(basis_full, config.physics.nu, fem)
    n_fine = _horizon_steps(config)
    n_sweep = config.study.n_sweep

    # fine-grid projections computed once; every cell downsamples views
    fine_training = _project_dataset(dataset, basis_full, 1)
    references = [
        test_reference(config, fem, basis_full, index, n_fine, gap=1)
        for index in range(n_sweep)
    ]

    rows_r: list[float] = []
    rows_gap: list[float] = []
    rows_rmse: list[float] = []
    rows_blowups: list[float] = []
    max_stable: dict[int, int] = {}
    dt = config.physics.dt
    for r in r_values:
        ops = GalerkinOperators(
            linear=ops_full.linear[:r, :r],
            quadratic=ops_full.quadratic[:r, :r, :r],
            nu=config.physics.nu,
        )
        stable_prefix = 0
        prefix_alive = True
        for gap in gap_values:
            delta = gap * dt
            training = [
                CoefficientTrajectory(
                    values=traj.values[:r, ::gap], delta=delta, gap=gap
                )
                for traj in fine_training
            ]
            closure = fit_closure(
                training,
                ops,
                mode=config.regression.mode,
                lam=config.regression.lam,
                n_mesh=config.regression.n_mesh,
            )
            model = SromModel(galerkin=ops, closure=closure, delta=delta)
            cell_sum = 0.0
            cell_count = 0
            cell_blowups = 0
            for reference in references:
                coarse = CoefficientTrajectory(
                    values=reference.values[:r, ::gap], delta=delta, gap=gap
                )
                run = _deterministic_run(model, coarse)
                if run.blew_up:
                    cell_blowups += 1
                    continue
                cell_sum += float(np.sum(rmse_curve(run, coarse)))
                cell_count += coarse.n_times
            rows_r.append(float(r))
            rows_gap.append(float(gap))
            rows_blowups.append(float(cell_blowups))
            if cell_blowups > 0:
                rows_rmse.append(math.nan)
                prefix_alive = False
            else:
                rows_rmse.append(cell_sum / cell_count)
                if prefix_alive:
                    stable_prefix = gap
        max_stable[r] = stable_prefix

    tables = {
        "sweep": StudyTable(
            name="sweep",
            columns={
                "r": np.asarray(rows_r),
                "gap": np.asarray(rows_gap),
                "avg_rmse": np.asarray(rows_rmse),
                "n_blowups": np.asarray(rows_blowups),
            },
            units={"r": "1", "gap": "1", "avg_rmse": "1", "n_blowups": "1"},
        ),
        "max_stable_gap": StudyTable(
            name="max_stable_gap",
            columns={
                "r": np.asarray([float(r) for r in r_values]),
                "max_stable_gap": np.asarray(
                    [float(max_stable[r]) for r in r_values]
                ),
            },
            units={"r": "1", "max_stable_gap": "1"},
        ),
    }
    return StudyReport(
        study_id="sweep",
        config=config.to_dict(),
        tables=tables,
        seed=config.data.seed,
    )


def save_report(report: StudyReport, directory: str | Path) -> None:
    """Write report.json plus one CSV per table.

    CSV headers carry units as "name [unit]"; floats use shortest
    round-trip form, so loading reproduces the report exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {
        "format_version": REPORT_FORMAT_VERSION,
        "study_id": report.study_id,
        "seed": report.seed,
        "config": dict(report.config),
        "fitted_slopes": {
            name: {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
            }
            for name, fit in report.fitted_slopes.items()
        },
        "tables": {
            name: {
                "file": f"{name}.csv",
                "columns": list(table.columns),
                "units": dict(table.units),
            }
            for name, table in report.tables.items()
        },
    }
    (directory / REPORT_NAME).write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for name, table in report.tables.items():
        header = ",".join(f"{key} [{table.units[key]}]" for key in table.columns)
        lines = [header]
        matrix = list(table.columns.values())
        for row in range(table.n_rows):
            lines.append(",".join(repr(float(column[row])) for column in matrix))
        (directory / f"{name}.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )


def load_report(directory: str | Path) -> StudyReport:
    """Inverse of :func:`save_report`."""
    directory = Path(directory)
    path = directory / REPORT_NAME
    if not path.is_file():
        raise MissingInputError(f"no report at {path}")
    index = json.loads(path.read_text(encoding="utf-8"))
    if index.get("format_version") != REPORT_FORMAT_VERSION:
        raise MissingInputError(f"{path}: unsupported report version")
    tables = {}
    for name, meta in index["tables"].items():
        text = (directory / meta["file"]).read_text(encoding="utf-8").strip()
        lines = text.split("\n")
        headers = [cell.rsplit(" [", 1)[0] for cell in lines[0].split(",")]
        cells = [line.split(",") for line in lines[1:]]
        data = np.asarray(
            [[float(value) for value in row] for row in cells], dtype=np.float64
        )
        if data.size == 0:
            data = data.reshape(0, len(headers))
        columns = {key: data[:, pos] for pos, key in enumerate(headers)}
        tables[name] = StudyTable(name=name, columns=columns, units=meta["units"])
    slopes = {
        name: SlopeFit(entry["slope"], entry["intercept"], entry["r_squared"])
        for name, entry in index["fitted_slopes"].items()
    }
    return StudyReport(
        study_id=index["study_id"],
        config=index["config"],
        tables=tables,
        fitted_slopes=slopes,
        seed=index["seed"],
    )
