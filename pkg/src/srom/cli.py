"""Command-line surface of the pipeline.

Each subcommand reads a JSON config (defaults apply when omitted) plus
flag overrides, writes its artifacts to the declared output location,
and prints exactly one machine-readable JSON summary line to stdout;
diagnostics go to stderr.  Exit codes: 0 success, 2 invalid
configuration or usage, 3 missing or incompatible inputs, 4 numerical
failure.

Numerical work runs with BLAS thread pools pinned to one thread, so
outputs are byte-identical regardless of the host's core count.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as sio
from .closure import accumulate_system, fit_closure, lcurve_select
from .config import PipelineConfig, load_config
from .engine import SromModel, simulate_deterministic, simulate_ensemble
from .errors import ConfigError, MissingInputError, NumericalError
from .fem import (
    InitialConditionSpec,
    assemble_fem_operators,
    generate_dataset,
    trajectory_sub_seed,
)
from .galerkin import assemble_galerkin
from .pod import ensemble_pod, project_trajectory
from .rng import ENSEMBLE_NOISE, derive_seed
from .studies import (
    ensemble_study,
    estimator_convergence_study,
    pod_convergence_study,
    prediction_study,
    rmse_curve,
    save_report,
    spacetime_sweep,
)

__all__ = ["cli_dispatch", "main"]

_STUDIES = {
    "pod-convergence": pod_convergence_study,
    "estimator-convergence": estimator_convergence_study,
    "prediction": prediction_study,
    "ensemble": ensemble_study,
    "sweep": spacetime_sweep,
}


def _load_base_config(args) -> PipelineConfig:
    if args.config is not None:
        return load_config(args.config)
    return PipelineConfig()


def _apply_overrides(config: PipelineConfig, args) -> PipelineConfig:
    """Fold the recognized flag overrides into the config sections."""
    data = config.data
    if getattr(args, "seed", None) is not None:
        data = dataclasses.replace(data, seed=args.seed)
    if getattr(args, "num_traj", None) is not None:
        data = dataclasses.replace(data, n_trajectories=args.num_traj)
    reduction = config.reduction
    if getattr(args, "modes", None) is not None:
        reduction = dataclasses.replace(reduction, r=args.modes)
    if getattr(args, "gap", None) is not None:
        reduction = dataclasses.replace(reduction, gap=args.gap)
    regression = config.regression
    if getattr(args, "reg", None) is not None:
        regression = dataclasses.replace(regression, mode=args.reg)
    if getattr(args, "lam", None) is not None:
        regression = dataclasses.replace(regression, lam=args.lam)
    if getattr(args, "mesh", None) is not None:
        regression = dataclasses.replace(regression, n_mesh=args.mesh)
    try:
        return config.replace_section(
            data=data, reduction=reduction, regression=regression
        )
    except TypeError as err:
        raise ConfigError(f"invalid override: {err}") from err


def _resolve_config(args) -> PipelineConfig:
    return _apply_overrides(_load_base_config(args), args)


def _ic_spec(config: PipelineConfig) -> InitialConditionSpec:
    return InitialConditionSpec(
        n_terms=config.initial_condition.n_terms,
        mean=config.initial_condition.mean,
        std=config.initial_condition.std,
    )


def _load_compatible_dataset(args, config: PipelineConfig):
    dataset, dataset_config, dataset_seed = sio.load_dataset(args.data)
    sio.check_config_compatibility(dataset_config, config)
    return dataset, dataset_config, dataset_seed


def _cmd_generate(args) -> dict:
    config = _resolve_config(args)
    fem = assemble_fem_operators(config.physics.n_elements)
    seed = config.data.seed
    count = config.data.n_trajectories
    dataset = generate_dataset(
        _ic_spec(config),
        config.physics.nu,
        config.physics.dt,
        config.physics.t_final,
        fem,
        count,
        seed,
    )
    sub_seeds = [trajectory_sub_seed(seed, m) for m in range(count)]
    sio.write_dataset(args.out, dataset, config, seed, sub_seeds)
    return {
        "command": "generate",
        "n_trajectories": count,
        "seed": seed,
        "out": args.out,
    }


def _cmd_pod(args) -> dict:
    config = _resolve_config(args)
    dataset, _, _ = _load_compatible_dataset(args, config)
    basis = ensemble_pod(dataset, config.reduction.r)
    sio.write_basis(args.out, basis)
    total = float(np.sum(basis.eigenvalues))
    retained = float(np.sum(basis.eigenvalues[: basis.r]))
    return {
        "command": "pod",
        "r": basis.r,
        "n_trajectories": basis.n_trajectories,
        "fingerprint": sio.basis_fingerprint(basis),
        "eigenvalue_fraction": retained / total if total > 0 else 1.0,
        "out": args.out,
    }


def _cmd_project(args) -> dict:
    config = _resolve_config(args)
    dataset, _, _ = _load_compatible_dataset(args, config)
    basis = sio.read_basis(args.basis)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gap = config.reduction.gap
    delta = None
    for index, snapshots in enumerate(dataset):
        traj = project_trajectory(snapshots, basis, gap)
        delta = traj.delta
        sio.write_coefficients(
            out / f"coeff_{index:05d}.srom", traj.values, traj.delta, traj.t0
        )
    return {
        "command": "project",
        "n_trajectories": len(dataset),
        "gap": gap,
        "delta": delta,
        "out": args.out,
    }


def _cmd_fit(args) -> dict:
    config = _resolve_config(args)
    dataset, _, _ = _load_compatible_dataset(args, config)
    basis = sio.read_basis(args.basis)
    fem = assemble_fem_operators(config.physics.n_elements)
    ops = assemble_galerkin(basis, config.physics.nu, fem)
    gap = config.reduction.gap
    trajectories = [
        project_trajectory(snapshots, basis, gap) for snapshots in dataset
    ]
    closure = fit_closure(
        trajectories,
        ops,
        mode=config.regression.mode,
        lam=config.regression.lam,
        n_mesh=config.regression.n_mesh,
    )
    model = SromModel(
        galerkin=ops,
        closure=closure,
        delta=gap * config.physics.dt,
        basis_fingerprint=sio.basis_fingerprint(basis),
        provenance={
            "nu": config.physics.nu,
            "n_trajectories": len(dataset),
            "gap": gap,
            "seed": config.data.seed,
            "training_window": [0.0, config.physics.t_final],
        },
    )
    sio.write_model(args.out, model)
    if args.diagnostics is not None:
        _write_fit_diagnostics(args.diagnostics, trajectories, ops, config, closure)
    return {
        "command": "fit",
        "mode": config.regression.mode,
        "lambda": closure.lambda_used,
        "fit_loss": closure.fit_loss,
        "sigma_max": float(np.max(closure.sigma)),
        "out": args.out,
    }


def _write_fit_diagnostics(path, trajectories, ops, config, closure) -> None:
    """Regularization trade-off record: the mesh with residuals, norms,
    and curvatures when selection ran, always the strength used."""
    document: dict = {
        "mode": config.regression.mode,
        "lambda_used": closure.lambda_used,
        "fit_loss": closure.fit_loss,
    }
    if config.regression.mode == "lcurve":
        system = accumulate_system(trajectories, ops)
        curve = lcurve_select(system, config.regression.n_mesh)
        document["degenerate"] = curve.degenerate
        document["lambda_star"] = curve.lambda_star
        document["mesh"] = [float(v) for v in curve.mesh]
        document["residual"] = [float(v) for v in curve.residual]
        document["coefficient_norm"] = [float(v) for v in curve.coefficient_norm]
        document["curvature"] = [
            None if np.isnan(v) else float(v) for v in curve.curvature
        ]
    Path(path).write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _cmd_simulate(args) -> dict:
    config = _resolve_config(args)
    model = sio.read_model(args.model)
    initial = sio.read_coefficients(args.initial)
    a0 = initial.values[:, 0]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {
        "command": "simulate",
        "mode": args.mode,
        "n_steps": args.steps,
        "out": args.out,
    }
    if args.mode == "deterministic":
        run = simulate_deterministic(model, a0, args.steps, t0=initial.t0)
        sio.write_coefficients(out / "trajectory.srom", run.values, run.delta, run.t0)
        sio.write_trajectory_csv(out / "trajectory.csv", run.values, run.delta, run.t0)
        summary["blowup_step"] = run.blowup_step
    else:
        members = args.members or config.study.n_ensemble
        seed = config.data.seed if args.seed is None else args.seed
        ensemble_seed = derive_seed(seed, ENSEMBLE_NOISE, 0)
        result = simulate_ensemble(
            model,
            a0,
            args.steps,
            members,
            ensemble_seed,
            percentile_levels=tuple(config.study.percentile_levels),
            t0=initial.t0,
        )
        sio.write_coefficients(out / "mean.srom", result.mean, result.delta, result.t0)
        sio.write_trajectory_csv(out / "mean.csv", result.mean, result.delta, result.t0)
        _write_bands_csv(out / "bands.csv", result)
        summary["n_members"] = members
        summary["seed"] = seed
        summary["n_blown_members"] = len(result.blowup_steps)
    return summary


def _write_bands_csv(path: Path, result) -> None:
    """Per-component percentile bands: for each level L and component i,
    columns lo{L}_a_i and hi{L}_a_i."""
    columns: list[tuple[str, np.ndarray]] = [("t", result.times)]
    for level in sorted(result.percentiles):
        lower, upper = result.percentiles[level]
        for i in range(result.r):
            columns.append((f"lo{level}_a_{i + 1}", lower[i]))
            columns.append((f"hi{level}_a_{i + 1}", upper[i]))
    header = ",".join(name for name, _ in columns)
    lines = [header]
    for row in range(result.n_times):
        lines.append(",".join(repr(float(values[row])) for _, values in columns))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_evaluate(args) -> dict:
    _resolve_config(args)
    predicted = sio.read_coefficients(args.predicted)
    reference = sio.read_coefficients(args.reference)
    try:
        curve = rmse_curve(predicted, reference)
    except ValueError as err:
        raise MissingInputError(f"incompatible trajectories: {err}") from err
    summary = {
        "command": "evaluate",
        "time_avg_rmse": float(np.mean(curve)),
        "max_rmse": float(np.max(curve)),
        "n_times": int(curve.size),
    }
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["t,rmse"]
        for time, value in zip(predicted.times, curve):
            lines.append(f"{time!r},{float(value)!r}")
        (out / "rmse.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        summary["out"] = args.out
    return summary


def _cmd_study(args) -> dict:
    config = _resolve_config(args)
    dataset, _, _ = _load_compatible_dataset(args, config)
    report = _STUDIES[args.study](dataset, config)
    save_report(report, args.out)
    return {
        "command": "study",
        "study": report.study_id,
        "n_trajectories": len(dataset),
        "tables": sorted(report.tables),
        "out": args.out,
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srom",
        description="stochastic reduced-order modeling pipeline for 1D viscous Burgers flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (defaults when omitted)")

    p = sub.add_parser("generate", help="solve full-order trajectories")
    common(p)
    p.add_argument("--num-traj", type=int, help="override data.n_trajectories")
    p.add_argument("--seed", type=int, help="override data.seed")
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("pod", help="compute the reduced basis")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--modes", type=int, help="override reduction.r")
    p.add_argument("--out", required=True, help="basis file")
    p.set_defaults(handler=_cmd_pod)

    p = sub.add_parser("project", help="project snapshots onto the basis")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--basis", required=True, help="basis file")
    p.add_argument("--gap", type=int, help="override reduction.gap")
    p.add_argument("--out", required=True, help="coefficient directory")
    p.set_defaults(handler=_cmd_project)

    p = sub.add_parser("fit", help="fit the closure and write the model")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--basis", required=True, help="basis file")
    p.add_argument("--gap", type=int, help="override reduction.gap")
    p.add_argument(
        "--reg", choices=("none", "fixed", "lcurve"), help="override regression.mode"
    )
    p.add_argument("--lam", type=float, help="override regression.lam")
    p.add_argument("--mesh", type=int, help="override regression.n_mesh")
    p.add_argument("--diagnostics", help="also write a fit-diagnostics JSON here")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("simulate", help="run the reduced model")
    common(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--initial", required=True, help="coefficient file; column 0 starts the run")
    p.add_argument("--steps", required=True, type=int, help="number of updates")
    p.add_argument(
        "--mode",
        choices=("deterministic", "ensemble"),
        default="deterministic",
    )
    p.add_argument("--members", type=int, help="ensemble size (config default)")
    p.add_argument("--seed", type=int, help="ensemble noise seed (config default)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("evaluate", help="RMSE of a prediction against a reference")
    common(p)
    p.add_argument("--predicted", required=True, help="coefficient file")
    p.add_argument("--reference", required=True, help="coefficient file")
    p.add_argument("--out", help="directory for rmse.csv (optional)")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("study", help="run a full study and save its report")
    p.add_argument("study", choices=sorted(_STUDIES))
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, help="override data.seed")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(handler=_cmd_study)

    return parser


def cli_dispatch(argv=None) -> int:
    """Parse arguments, run the subcommand, print the summary line.

    Returns the process exit status instead of raising; see the module
    docstring for the category mapping.
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code in (0, None) else 2
    try:
        with threadpool_limits(limits=1):
            summary = args.handler(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except MissingInputError as err:
        print(f"input error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 4
    print(json.dumps(summary, sort_keys=True))
    return 0


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
