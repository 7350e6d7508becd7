"""Time stepping of the reduced models.

The deterministic map advances the coefficients by an explicit Euler
step of the combined drift (Galerkin plus learned corrections); the
stochastic map adds per-mode Gaussian increments scaled by the learned
amplitudes and the square root of the step.  Ensembles of noise
realizations share deterministic drift evaluations and report mean and
percentile bands over the members that stay finite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .closure import ClosureParameters
from .errors import BlowupError
from .galerkin import GalerkinOperators
from .pod import PodBasis
from .rng import derive_seed, normals

__all__ = [
    "BLOWUP_NORM",
    "SromModel",
    "RomTrajectory",
    "EnsembleResult",
    "simulate_deterministic",
    "simulate_ensemble",
    "reconstruct_field",
]

# coefficient norm beyond which a trajectory counts as blown up
BLOWUP_NORM = 1e3


@dataclass(frozen=True)
class SromModel:
    """Reduced model: Galerkin operators, learned closure, and the step.

    ``basis_fingerprint`` ties the model to the basis it was fitted in
    (content hash of the serialized basis); ``provenance`` records the
    training context (viscosity, trajectory count, gap, seed, window).
    Both are carried for persistence and may be empty for ad-hoc models.
    """

    galerkin: GalerkinOperators
    closure: ClosureParameters
    delta: float
    basis_fingerprint: str = ""
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.galerkin.r != self.closure.r:
            raise ValueError("operators and closure must share r")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def r(self) -> int:
        return self.galerkin.r

    @cached_property
    def total_linear(self) -> np.ndarray:
        return self.galerkin.linear + self.closure.linear

    @cached_property
    def total_quadratic(self) -> np.ndarray:
        return self.galerkin.quadratic + self.closure.quadratic

    def drift(self, a: np.ndarray) -> np.ndarray:
        """Combined drift (A + A_c) a + aT (B + B_c) a."""
        a = np.asarray(a, dtype=np.float64)
        return self.total_linear @ a + np.einsum(
            "i,ijk,j->k", a, self.total_quadratic, a
        )

    def step(self, a: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        """One update a + delta * drift(a) (+ sqrt(delta) * sigma * xi).

        Raises :class:`BlowupError` when the updated state is non-finite
        or its Euclidean norm exceeds ``BLOWUP_NORM``.
        """
        a = np.asarray(a, dtype=np.float64)
        out = a + self.delta * self.drift(a)
        if noise is not None:
            out = out + np.sqrt(self.delta) * self.closure.sigma * noise
        if not np.all(np.isfinite(out)):
            raise BlowupError()
        norm = float(np.linalg.norm(out))
        if norm > BLOWUP_NORM:
            raise BlowupError(state_norm=norm)
        return out


@dataclass(frozen=True)
class RomTrajectory:
    """Reduced trajectory on the coarse grid.

    ``values`` has one column per stored time; when the run blew up,
    ``blowup_step`` is the index of the first state that failed and the
    stored columns are exactly the valid prefix (values.shape[1] equals
    blowup_step)."""

    values: np.ndarray
    delta: float
    t0: float = 0.0
    blowup_step: int | None = None

    @property
    def r(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_times)

    @property
    def blew_up(self) -> bool:
        return self.blowup_step is not None


def simulate_deterministic(
    model: SromModel, a0: np.ndarray, n_steps: int, t0: float = 0.0
) -> RomTrajectory:
    """Run the deterministic reduced map for ``n_steps`` updates.

    Returns the full trajectory (r, n_steps + 1) on success; on blowup
    the valid prefix is returned with ``blowup_step`` marking the index
    the failed state would have occupied.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    if a0.shape != (model.r,):
        raise ValueError(f"initial state must have length {model.r}")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    values = np.empty((model.r, n_steps + 1))
    values[:, 0] = a0
    for step_index in range(n_steps):
        try:
            values[:, step_index + 1] = model.step(values[:, step_index])
        except BlowupError:
            return RomTrajectory(
                values=values[:, : step_index + 1].copy(),
                delta=model.delta,
                t0=t0,
                blowup_step=step_index + 1,
            )
    return RomTrajectory(values=values, delta=model.delta, t0=t0)


@dataclass(frozen=True)
class EnsembleResult:
    """Statistics of an ensemble of noise realizations.

    ``members`` is (n_members, r, n_steps + 1) with blown-up members
    NaN-padded from their failure index on.  ``mean`` and the percentile
    bands are taken per time over the members still valid there; the
    mean therefore equals the exact arithmetic mean of the valid member
    columns.  ``blowup_steps`` maps member index to failure index for
    the members that blew up.
    """

    members: np.ndarray
    mean: np.ndarray
    percentiles: Mapping[int, tuple[np.ndarray, np.ndarray]]
    delta: float
    seed: int
    t0: float = 0.0
    blowup_steps: Mapping[int, int] = field(default_factory=dict)

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def r(self) -> int:
        return self.members.shape[1]

    @property
    def n_times(self) -> int:
        return self.members.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.delta * np.arange(self.n_times)


def simulate_ensemble(
    model: SromModel,
    a0: np.ndarray,
    n_steps: int,
    n_members: int,
    seed: int,
    percentile_levels: tuple[int, ...] = (25, 75, 95),
    t0: float = 0.0,
) -> EnsembleResult:
    """Run ``n_members`` stochastic realizations from a shared state.

    Member j draws its Gaussian increments from the counter-based
    substream derived as (seed, j); step l consumes the r values at
    offset l * r, so members are reproducible independently of execution
    order and of each other.  Callers separate ensemble seeds from other
    randomness by deriving ``seed`` in the ensemble-noise domain.
    Members that blow up are NaN-padded and excluded from the
    statistics; if every member blows up a :class:`BlowupError` is
    raised.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    if a0.shape != (model.r,):
        raise ValueError(f"initial state must have length {model.r}")
    if n_members < 1:
        raise ValueError("n_members must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    r = model.r
    members = np.full((n_members, r, n_steps + 1), np.nan)
    blowup_steps: dict[int, int] = {}
    for member in range(n_members):
        member_seed = derive_seed(seed, member)
        members[member, :, 0] = a0
        for step_index in range(n_steps):
            noise = normals(member_seed, r, start=step_index * r)
            try:
                members[member, :, step_index + 1] = model.step(
                    members[member, :, step_index], noise
                )
            except BlowupError:
                members[member, :, step_index + 1 :] = np.nan
                blowup_steps[member] = step_index + 1
                break
    if len(blowup_steps) == n_members:
        raise BlowupError()
    mean = np.nanmean(members, axis=0)
    percentiles: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for level in percentile_levels:
        if not 0 < level < 100:
            raise ValueError("percentile levels must lie in (0, 100)")
        half = (100 - level) / 2.0
        lower = np.nanpercentile(members, half, axis=0)
        upper = np.nanpercentile(members, 100 - half, axis=0)
        percentiles[int(level)] = (lower, upper)
    return EnsembleResult(
        members=members,
        mean=mean,
        percentiles=percentiles,
        delta=model.delta,
        seed=seed,
        t0=t0,
        blowup_steps=blowup_steps,
    )


def reconstruct_field(basis: PodBasis, coefficients: np.ndarray) -> np.ndarray:
    """Lift reduced coefficients to nodal values, u = Phi a.

    Accepts a single coefficient vector (r,) or a trajectory (r, n);
    boundary rows of the result are forced to exact zeros, matching the
    basis construction.
    """
    coefficients = np.asarray(coefficients, dtype=np.float64)
    single = coefficients.ndim == 1
    states = coefficients[:, None] if single else coefficients
    if states.shape[0] != basis.r:
        raise ValueError("coefficient dimension must match the basis rank")
    fields = basis.modes @ states
    fields[0, :] = 0.0
    fields[-1, :] = 0.0
    return fields[:, 0] if single else fields
