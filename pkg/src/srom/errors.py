"""Exception hierarchy shared across the package.

The CLI maps these onto exit-code categories: configuration problems,
missing or corrupt inputs, and numerical failures.
"""


class SromError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SromError):
    """Invalid configuration file, value, or command-line argument."""


class MissingInputError(SromError):
    """A required input file or directory is absent or unreadable
    (truncated, corrupt, or in an unrecognized format)."""


class ManifestError(MissingInputError):
    """A manifest is missing, fails checksum verification, or is
    incompatible with the active configuration."""


class NumericalError(SromError):
    """Base class for failures of the numerical algorithms."""


class SolverDivergenceError(NumericalError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, step_index, residual_norm, trajectory_index=None):
        self.step_index = step_index
        self.residual_norm = residual_norm
        self.trajectory_index = trajectory_index
        where = f"step {step_index}"
        if trajectory_index is not None:
            where = f"trajectory {trajectory_index}, {where}"
        super().__init__(
            f"Newton iteration did not converge at {where} "
            f"(residual max-norm {residual_norm:.3e})"
        )

    # keep attributes intact across process boundaries
    def __reduce__(self):
        return (type(self), (self.step_index, self.residual_norm, self.trajectory_index))


class BlowupError(NumericalError):
    """A state left the finite/bounded admissible region."""

    def __init__(self, step_index=None, state_norm=None, trajectory_index=None):
        self.step_index = step_index
        self.state_norm = state_norm
        self.trajectory_index = trajectory_index
        parts = ["state blew up"]
        if step_index is not None:
            parts.append(f"at step {step_index}")
        if trajectory_index is not None:
            parts.append(f"of trajectory {trajectory_index}")
        if state_norm is not None:
            parts.append(f"(norm {state_norm:.3e})")
        super().__init__(" ".join(parts))

    def __reduce__(self):
        return (type(self), (self.step_index, self.state_norm, self.trajectory_index))


class IllPosedSystemError(NumericalError):
    """The regression normal matrix is numerically indefinite or has no
    positive spectrum, so a regularized solve is meaningless."""


class CurvatureMeshError(NumericalError):
    """Too few usable mesh points to evaluate the curvature of the
    residual-norm trade-off curve."""
