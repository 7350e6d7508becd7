"""Galerkin operators of the reduced Burgers dynamics.

Treats each mode as a piecewise-linear FEM function through its nodal
values and evaluates the weak-form integrals exactly, element by
element.  The drift of the resulting quadratic system is
F(a) = A a + aT B a.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import FemOperators
from .pod import PodBasis


@dataclass(frozen=True)
class GalerkinOperators:
    """Linear operator (r x r) and quadratic tensor (r x r x r) of the
    reduced dynamics; every output slice quadratic[:, :, k] is symmetric."""

    linear: np.ndarray
    quadratic: np.ndarray
    nu: float

    def __post_init__(self):
        linear = np.asarray(self.linear, dtype=np.float64)
        quadratic = np.asarray(self.quadratic, dtype=np.float64)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "quadratic", quadratic)
        r = linear.shape[0]
        if linear.shape != (r, r):
            raise ValueError("linear operator must be square")
        if quadratic.shape != (r, r, r):
            raise ValueError("quadratic tensor must have shape (r, r, r)")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")

    @property
    def r(self) -> int:
        return self.linear.shape[0]


def assemble_galerkin(basis: PodBasis, nu: float, fem: FemOperators) -> GalerkinOperators:
    """Assemble the exact weak-form operators for the given modes.

    linear(i, k) = -nu * int phi_i' phi_k' dx and
    quadratic(i, j, k) = -1/2 * int (phi_i phi_j' + phi_j phi_i') phi_k dx,
    integrated exactly for piecewise linears.  The symmetrization makes
    every output slice symmetric without changing aT B a, and the
    convection tensor satisfies the exact conservation identity
    sum_k a_k (aT B a)_k = 0.
    """
    if basis.n_nodes != fem.n_nodes:
        raise ValueError("basis and mesh must share the spatial grid")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    modes = basis.modes
    h = fem.h
    # slopes scaled by h: differences of consecutive nodal values
    diffs = np.diff(modes, axis=0)
    linear = -(nu / h) * (diffs.T @ diffs)

    left = modes[:-1, :]
    right = modes[1:, :]
    # int_e phi_i phi_j' phi_k dx with phi_j' constant on the element:
    # (right_j - left_j) * (2 l_i l_k + l_i r_k + r_i l_k + 2 r_i r_k) / 6
    convection = (
        2.0 * np.einsum("ei,ej,ek->ijk", left, diffs, left)
        + np.einsum("ei,ej,ek->ijk", left, diffs, right)
        + np.einsum("ei,ej,ek->ijk", right, diffs, left)
        + 2.0 * np.einsum("ei,ej,ek->ijk", right, diffs, right)
    ) / 6.0
    quadratic = -0.5 * (convection + convection.transpose(1, 0, 2))
    return GalerkinOperators(linear=linear, quadratic=quadratic, nu=nu)


def grom_drift(ops: GalerkinOperators, a: np.ndarray) -> np.ndarray:
    """Drift A a + aT B a with (aT B a)_k = sum_{i,j} a_i B(i,j,k) a_j."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (ops.r,):
        raise ValueError(f"state must have length {ops.r}")
    return ops.linear @ a + np.einsum("i,ijk,j->k", a, ops.quadratic, a)


def drift_columns(ops: GalerkinOperators, states: np.ndarray) -> np.ndarray:
    """Vectorized drift over column states, shape (r, n) -> (r, n)."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] != ops.r:
        raise ValueError(f"states must have shape ({ops.r}, n)")
    return ops.linear @ states + np.einsum(
        "il,ijk,jl->kl", states, ops.quadratic, states
    )
