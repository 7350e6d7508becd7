"""Persistence: binary containers, model files, manifests, CSV export.

All artifacts are deterministic functions of their inputs: no
timestamps, no absolute paths, keys sorted in every JSON document, and
floats serialized in shortest round-trip form.  Rewriting the same data
therefore reproduces files byte for byte.

Binary container layout (little endian): magic "SROM", u16 format
version, u32 rows, u32 cols, f64 dt, f64 t0, then rows*cols f64 in
row-major order.  A basis file appends a descriptor record: u32 r,
u32 trajectory count, u8 inner-product tag, u32 eigenvalue count, then
the eigenvalues as f64.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .closure import ClosureParameters
from .config import PipelineConfig, config_hash
from .engine import SromModel
from .errors import ManifestError, MissingInputError
from .fem import SnapshotMatrix
from .galerkin import GalerkinOperators
from .pod import CoefficientTrajectory, PodBasis

__all__ = [
    "CONTAINER_VERSION",
    "MODEL_FORMAT_VERSION",
    "MANIFEST_VERSION",
    "MANIFEST_NAME",
    "trajectory_filename",
    "write_snapshots",
    "read_snapshots",
    "write_coefficients",
    "read_coefficients",
    "write_basis",
    "read_basis",
    "basis_fingerprint",
    "write_model",
    "read_model",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_manifest",
    "load_manifest",
    "verify_manifest",
    "write_dataset",
    "load_dataset",
    "check_config_compatibility",
]

_MAGIC = b"SROM"
CONTAINER_VERSION = 1
MODEL_FORMAT_VERSION = 1
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

_HEADER = struct.Struct("<4sHIIdd")
_BASIS_DESCRIPTOR = struct.Struct("<IIBI")

_INNER_PRODUCT_TAGS = {"euclidean": 0}
_INNER_PRODUCT_NAMES = {tag: name for name, tag in _INNER_PRODUCT_TAGS.items()}


def trajectory_filename(index: int) -> str:
    return f"traj_{index:05d}.srom"


def _matrix_bytes(values: np.ndarray, dt: float, t0: float) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    header = _HEADER.pack(
        _MAGIC, CONTAINER_VERSION, values.shape[0], values.shape[1], dt, t0
    )
    return header + values.tobytes(order="C")


def _parse_matrix(data: bytes, source: str) -> tuple[np.ndarray, float, float, int]:
    """Decode one container record; returns (values, dt, t0, end offset)."""
    if len(data) < _HEADER.size:
        raise MissingInputError(f"{source}: truncated header")
    magic, version, rows, cols, dt, t0 = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise MissingInputError(f"{source}: bad magic bytes")
    if version != CONTAINER_VERSION:
        raise MissingInputError(f"{source}: unsupported container version {version}")
    end = _HEADER.size + rows * cols * 8
    if len(data) < end:
        raise MissingInputError(f"{source}: truncated payload")
    flat = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return flat.reshape(rows, cols).astype(np.float64), dt, t0, end


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    try:
        return path.read_bytes()
    except OSError as err:
        raise MissingInputError(f"cannot read {path}: {err}") from err


def write_snapshots(path: str | Path, snapshots: SnapshotMatrix) -> None:
    Path(path).write_bytes(
        _matrix_bytes(snapshots.values, snapshots.dt, snapshots.t0)
    )


def read_snapshots(path: str | Path) -> SnapshotMatrix:
    data = _read_bytes(path)
    values, dt, t0, end = _parse_matrix(data, str(path))
    if end != len(data):
        raise MissingInputError(f"{path}: trailing bytes after payload")
    return SnapshotMatrix(values=values, dt=dt, t0=t0)


def write_coefficients(path: str | Path, values: np.ndarray, delta: float, t0: float = 0.0) -> None:
    """Store a reduced trajectory (r x n_t) in the binary container; the
    step field carries delta."""
    Path(path).write_bytes(_matrix_bytes(np.asarray(values), delta, t0))


def read_coefficients(path: str | Path, gap: int = 1) -> CoefficientTrajectory:
    """Load a reduced trajectory.  The container does not store the
    downsampling factor, so callers that need it pass ``gap``."""
    data = _read_bytes(path)
    values, delta, t0, end = _parse_matrix(data, str(path))
    if end != len(data):
        raise MissingInputError(f"{path}: trailing bytes after payload")
    return CoefficientTrajectory(values=values, delta=delta, gap=gap, t0=t0)


def _basis_bytes(basis: PodBasis) -> bytes:
    matrix = _matrix_bytes(basis.modes, 0.0, 0.0)
    eigenvalues = np.ascontiguousarray(basis.eigenvalues, dtype="<f8")
    descriptor = _BASIS_DESCRIPTOR.pack(
        basis.r,
        basis.n_trajectories,
        _INNER_PRODUCT_TAGS[basis.inner_product],
        eigenvalues.size,
    )
    return matrix + descriptor + eigenvalues.tobytes()


def write_basis(path: str | Path, basis: PodBasis) -> None:
    Path(path).write_bytes(_basis_bytes(basis))


def read_basis(path: str | Path) -> PodBasis:
    data = _read_bytes(path)
    modes, _, _, offset = _parse_matrix(data, str(path))
    if len(data) < offset + _BASIS_DESCRIPTOR.size:
        raise MissingInputError(f"{path}: truncated basis descriptor")
    r, n_trajectories, tag, n_eigs = _BASIS_DESCRIPTOR.unpack_from(data, offset)
    if r != modes.shape[1]:
        raise MissingInputError(f"{path}: descriptor rank disagrees with the modes")
    if tag not in _INNER_PRODUCT_NAMES:
        raise MissingInputError(f"{path}: unknown inner-product tag {tag}")
    offset += _BASIS_DESCRIPTOR.size
    end = offset + n_eigs * 8
    if len(data) < end:
        raise MissingInputError(f"{path}: truncated eigenvalue record")
    if end != len(data):
        raise MissingInputError(f"{path}: trailing bytes after payload")
    eigenvalues = np.frombuffer(data, dtype="<f8", count=n_eigs, offset=offset)
    return PodBasis(
        modes=modes,
        eigenvalues=eigenvalues.astype(np.float64),
        n_trajectories=n_trajectories,
        inner_product=_INNER_PRODUCT_NAMES[tag],
    )


def basis_fingerprint(basis: PodBasis) -> str:
    """Content hash (SHA-256) of the serialized basis."""
    return hashlib.sha256(_basis_bytes(basis)).hexdigest()


def _matrix_list(matrix: np.ndarray) -> list[list[float]]:
    return [[float(v) for v in row] for row in matrix]


def _quadratic_list(tensor: np.ndarray) -> list[list[list[float]]]:
    """Quadratic tensor as a list over output modes k of the symmetric
    (i, j) slice, each row-major."""
    return [_matrix_list(tensor[:, :, k]) for k in range(tensor.shape[2])]


def _quadratic_array(slices: Sequence, r: int) -> np.ndarray:
    tensor = np.empty((r, r, r))
    for k in range(r):
        tensor[:, :, k] = np.asarray(slices[k], dtype=np.float64)
    return tensor


def write_model(path: str | Path, model: SromModel) -> None:
    """Serialize a reduced model to JSON."""
    document = {
        "format_version": MODEL_FORMAT_VERSION,
        "r": model.r,
        "delta": model.delta,
        "nu": model.galerkin.nu,
        "galerkin": {
            "linear": _matrix_list(model.galerkin.linear),
            "quadratic": _quadratic_list(model.galerkin.quadratic),
        },
        "closure": {
            "linear": _matrix_list(model.closure.linear),
            "quadratic": _quadratic_list(model.closure.quadratic),
            "sigma": [float(v) for v in model.closure.sigma],
            "lambda_used": model.closure.lambda_used,
            "fit_loss": model.closure.fit_loss,
        },
        "basis_fingerprint": model.basis_fingerprint,
        "provenance": dict(model.provenance),
    }
    Path(path).write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_model(path: str | Path) -> SromModel:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise MissingInputError(f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise MissingInputError(f"{path}: invalid JSON: {err}") from err
    try:
        version = document["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise MissingInputError(
                f"{path}: unsupported model format version {version}"
            )
        r = int(document["r"])
        galerkin = GalerkinOperators(
            linear=np.asarray(document["galerkin"]["linear"], dtype=np.float64),
            quadratic=_quadratic_array(document["galerkin"]["quadratic"], r),
            nu=float(document["nu"]),
        )
        closure = ClosureParameters(
            linear=np.asarray(document["closure"]["linear"], dtype=np.float64),
            quadratic=_quadratic_array(document["closure"]["quadratic"], r),
            sigma=np.asarray(document["closure"]["sigma"], dtype=np.float64),
            lambda_used=float(document["closure"]["lambda_used"]),
            fit_loss=float(document["closure"]["fit_loss"]),
        )
        return SromModel(
            galerkin=galerkin,
            closure=closure,
            delta=float(document["delta"]),
            basis_fingerprint=str(document.get("basis_fingerprint", "")),
            provenance=document.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise MissingInputError(f"{path}: malformed model file: {err}") from err


def write_trajectory_csv(
    path: str | Path, values: np.ndarray, delta: float, t0: float = 0.0
) -> None:
    """Export a reduced trajectory as CSV with header t, a_1, ..., a_r.

    Floats use shortest round-trip form, so re-parsing is lossless.
    """
    values = np.asarray(values, dtype=np.float64)
    r, n_times = values.shape
    lines = ["t," + ",".join(f"a_{i + 1}" for i in range(r))]
    for l in range(n_times):
        time = t0 + delta * l
        lines.append(",".join([repr(time)] + [repr(float(v)) for v in values[:, l]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trajectory_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`write_trajectory_csv`: (times, values)."""
    try:
        lines = Path(path).read_text(encoding="utf-8").strip().split("\n")
    except OSError as err:
        raise MissingInputError(f"cannot read {path}: {err}") from err
    rows = [[float(cell) for cell in line.split(",")] for line in lines[1:]]
    table = np.asarray(rows, dtype=np.float64)
    return table[:, 0], table[:, 1:].T


def _file_checksum(path: Path) -> str:
    return hashlib.sha256(_read_bytes(path)).hexdigest()


def write_manifest(
    directory: str | Path,
    config: PipelineConfig,
    seed: int,
    sub_seeds: Mapping[str, int],
) -> None:
    """Record the directory contents: per-file checksums, the generating
    seed and per-file sub-seeds, and the configuration with its hash.
    File names are relative to the directory."""
    directory = Path(directory)
    files = {name: _file_checksum(directory / name) for name in sub_seeds}
    manifest = {
        "format_version": MANIFEST_VERSION,
        "config_hash": config_hash(config),
        "config": config.to_dict(),
        "seed": seed,
        "files": files,
        "sub_seeds": {name: int(value) for name, value in sub_seeds.items()},
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise MissingInputError(f"no manifest at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ManifestError(f"{path}: unreadable manifest: {err}") from err
    for key in ("format_version", "config_hash", "config", "seed", "files", "sub_seeds"):
        if key not in manifest:
            raise ManifestError(f"{path}: manifest lacks the '{key}' field")
    if manifest["format_version"] != MANIFEST_VERSION:
        raise ManifestError(
            f"{path}: unsupported manifest version {manifest['format_version']}"
        )
    return manifest


def verify_manifest(directory: str | Path) -> dict:
    """Load the manifest and verify it against the directory: the stored
    configuration must reproduce the stored hash, and every listed file
    must match its checksum.  Returns the manifest on success."""
    directory = Path(directory)
    manifest = load_manifest(directory)
    config = PipelineConfig.from_dict(manifest["config"])
    if config_hash(config) != manifest["config_hash"]:
        raise ManifestError(f"{directory}: config hash mismatch")
    for name, checksum in sorted(manifest["files"].items()):
        actual = _file_checksum(directory / name)
        if actual != checksum:
            raise ManifestError(f"{directory}: checksum mismatch for {name}")
    return manifest


def write_dataset(
    directory: str | Path,
    dataset: Sequence[SnapshotMatrix],
    config: PipelineConfig,
    seed: int,
    sub_seeds: Sequence[int],
) -> None:
    """Write one container per trajectory plus the manifest."""
    if len(dataset) != len(sub_seeds):
        raise ValueError("one sub-seed per trajectory is required")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = {}
    for index, snapshots in enumerate(dataset):
        name = trajectory_filename(index)
        write_snapshots(directory / name, snapshots)
        names[name] = int(sub_seeds[index])
    write_manifest(directory, config, seed, names)


def load_dataset(
    directory: str | Path, verify: bool = True
) -> tuple[list[SnapshotMatrix], PipelineConfig, int]:
    """Load every trajectory listed in the manifest, in name order.

    Returns (dataset, generating config, generating seed).  With
    ``verify`` set (the default), checksums and the config hash are
    checked first.
    """
    directory = Path(directory)
    manifest = verify_manifest(directory) if verify else load_manifest(directory)
    config = PipelineConfig.from_dict(manifest["config"])
    dataset = [
        read_snapshots(directory / name) for name in sorted(manifest["files"])
    ]
    return dataset, config, int(manifest["seed"])


def check_config_compatibility(
    dataset_config: PipelineConfig, run_config: PipelineConfig
) -> None:
    """Reject a dataset generated under different physics or initial
    conditions than the active run requires.  Reduction, regression, and
    study settings may differ freely."""
    mismatches = []
    if dataset_config.physics != run_config.physics:
        mismatches.append("physics")
    if dataset_config.initial_condition != run_config.initial_condition:
        mismatches.append("initial_condition")
    if mismatches:
        raise ManifestError(
            "dataset configuration is incompatible with the run configuration "
            f"(differs in: {', '.join(mismatches)})"
        )
