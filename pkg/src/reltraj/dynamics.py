"""Fields and equations of motion of the trajectory ensemble.

The state carries, for every trajectory, the coordinate time ``t``, the
position ``x`` and the scaled velocities ``u0 = exp(Q/mc^2) dt/dT`` and
``u1 = exp(Q/mc^2) dx/dT``, where ``T`` is the ensemble proper time.  In
these variables the second-order equations of motion become first order and
no time derivative of ``Q`` is needed::

    dt/dT  = E u0            du0/dT = -E t_C Q_C / (m gamma)
    dx/dT  = E u1            du1/dT = -E x_C Q_C / (m gamma)

with ``E = exp(-Q/mc^2)`` and ``gamma = x_C**2 - c**2 t_C**2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricDegeneracyError, NonFiniteFieldError, ShapeError
from .model import Grid, PhysicalParams, deriv1

__all__ = [
    "EnsembleState",
    "FieldSet",
    "initial_state",
    "initial_time_rate",
    "spatial_metric",
    "leaf_derivatives",
    "quantum_potential",
    "quantum_force",
    "compute_fields",
    "project_force",
    "rhs",
    "pack",
    "unpack",
]


@dataclass
class EnsembleState:
    """Ensemble at one value of the ensemble proper time ``tau_ens``."""

    tau_ens: float
    t: np.ndarray
    x: np.ndarray
    u0: np.ndarray
    u1: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.u0 = np.asarray(self.u0, dtype=float)
        self.u1 = np.asarray(self.u1, dtype=float)
        n = self.t.shape
        if self.x.shape != n or self.u0.shape != n or self.u1.shape != n:
            raise ShapeError("state arrays must share one shape")

    def as_vector(self) -> np.ndarray:
        return pack(self.t, self.x, self.u0, self.u1)


@dataclass
class FieldSet:
    """Derived fields on one constant-``T`` leaf."""

    gamma: np.ndarray
    Q: np.ndarray
    dQdC: np.ndarray
    f0: np.ndarray
    f1: np.ndarray
    dtdC: np.ndarray
    dxdC: np.ndarray


def pack(t, x, u0, u1) -> np.ndarray:
    return np.concatenate([t, x, u0, u1])


def unpack(y: np.ndarray):
    t, x, u0, u1 = np.split(np.asarray(y), 4)
    return t, x, u0, u1


def initial_time_rate(params: PhysicalParams, C) -> np.ndarray:
    """``dt/dT`` at ``T = 0``, i.e. ``exp(-Q0/mc^2)`` for the coherent Gaussian."""
    C = np.asarray(C, dtype=float)
    a = params.a
    lam = params.hbar / (params.m * params.c)
    return np.exp(0.5 * lam**2 * (a**2 * C**2 - a))


def initial_state(params: PhysicalParams, grid: Grid) -> EnsembleState:
    """Stationary coherent Gaussian at ``T = 0``.

    Every trajectory starts at rest at its label, ``x = C`` and ``t = 0``.
    The time rate ``dt/dT = exp(-Q0/mc^2)`` cancels against the scaling in
    ``u0``, so ``u0 = 1`` identically.
    """
    n = grid.n
    return EnsembleState(0.0, np.zeros(n), np.array(grid.C, dtype=float),
                         np.ones(n), np.zeros(n))


def _leaf_derivatives(state, grid):
    # dC/dC = 1 exactly; only the displacement x - C is differenced
    return deriv1(state.t, grid), 1.0 + deriv1(state.x - grid.C, grid)


def leaf_derivatives(state: EnsembleState, grid: Grid):
    """``(t_C, x_C)`` along the current leaf."""
    return _leaf_derivatives(state, grid)


def spatial_metric(state: EnsembleState, grid: Grid, params: PhysicalParams,
                   *, _derivs=None) -> np.ndarray:
    """Squared interval density ``x_C**2 - c**2 t_C**2`` along the leaf.

    ``x_C`` is formed as ``1 + D(x - C)`` so that the undisplaced ensemble
    has ``gamma = 1`` to the last bit on any grid.

    Raises
    ------
    MetricDegeneracyError
        If the metric is not strictly positive at some grid point.
    """
    dtdC, dxdC = _derivs if _derivs is not None else _leaf_derivatives(state, grid)
    gamma = dxdC**2 - params.c**2 * dtdC**2
    bad = ~(gamma > 0)
    if bad.any():
        i = int(np.argmax(bad))
        raise MetricDegeneracyError(
            f"spatial metric {gamma[i]:.3e} <= 0 at index {i} (C={grid.C[i]:.6g}) "
            f"at T={state.tau_ens:.6g}",
            tau=state.tau_ens, index=i,
        )
    return gamma


def quantum_potential(state: EnsembleState, grid: Grid, params: PhysicalParams,
                      *, gamma=None) -> np.ndarray:
    """Quantum potential of the ensemble on the current leaf.

    Built as two nested first derivatives::

        Q = -(hbar^2/2m) e^{aC^2/2} g^{-1/4} D[ g^{-1/2} D( e^{-aC^2/2} g^{-1/4} ) ]

    An expanded fourth-derivative stencil would amplify edge noise through
    the ``e^{aC^2/2}`` prefactor, so it is deliberately avoided.
    """
    if gamma is None:
        gamma = spatial_metric(state, grid, params)
    C = grid.C
    half_gauss = np.exp(-0.5 * params.a * C**2)
    g14 = gamma**-0.25
    inner = deriv1(half_gauss * g14, grid)
    outer = deriv1(inner / np.sqrt(gamma), grid)
    return -(params.hbar**2 / (2.0 * params.m)) * g14 * outer / half_gauss


def compute_fields(state: EnsembleState, grid: Grid, params: PhysicalParams) -> FieldSet:
    derivs = _leaf_derivatives(state, grid)
    gamma = spatial_metric(state, grid, params, _derivs=derivs)
    Q = quantum_potential(state, grid, params, gamma=gamma)
    dQdC = deriv1(Q, grid)
    dtdC, dxdC = derivs
    f0 = -(params.c / gamma) * dtdC * dQdC
    f1 = -(1.0 / gamma) * dxdC * dQdC
    fields = FieldSet(gamma, Q, dQdC, f0, f1, dtdC, dxdC)
    for name in ("Q", "dQdC", "f0", "f1"):
        values = getattr(fields, name)
        if not np.all(np.isfinite(values)):
            i = int(np.argmax(~np.isfinite(values)))
            raise NonFiniteFieldError(
                f"{name} is not finite at index {i} at T={state.tau_ens:.6g}"
            )
    return fields


def quantum_force(state: EnsembleState, grid: Grid, params: PhysicalParams) -> FieldSet:
    """Quantum force ``(f0, f1)`` together with the fields it is built from."""
    return compute_fields(state, grid, params)


def project_force(f0, f1, u0, u1, c):
    """Remove the component of ``(f0, f1)`` along the four-velocity ``(c u0, u1)``.

    The exact force is orthogonal to the four-velocity whenever the leaves
    are orthogonal to the trajectories; the projection restores that
    discretely so the mass shell ``u0**2 - (u1/c)**2 = 1`` is not driven
    away at the fringes.
    """
    U0 = c * u0
    dot = -f0 * U0 + f1 * u1
    norm = -U0**2 + u1**2
    k = dot / norm
    return f0 - k * U0, f1 - k * u1


def rhs(state: EnsembleState, grid: Grid, params: PhysicalParams):
    """Ensemble-time derivatives ``(dt, dx, du0, du1)`` of ``state``."""
    fl = compute_fields(state, grid, params)
    E = np.exp(-fl.Q / params.mc2)
    f0, f1 = project_force(fl.f0, fl.f1, state.u0, state.u1, params.c)
    # f0 carries a factor c from the ct component
    du0 = E * f0 / (params.m * params.c)
    du1 = E * f1 / params.m
    return E * state.u0, E * state.u1, du0, du1
