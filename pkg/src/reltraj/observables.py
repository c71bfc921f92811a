"""Flux four-vector, constant-time slices and probability conservation.

Everything here reads a :class:`~reltraj.integrator.SolutionRecord`, which
may be expressed in the stationary frame or in a boosted one; the formulas
are the same in every inertial frame because the spatial metric and the
ensemble weight are frame independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import EnsembleState, unpack
from .errors import LightConeViolation, NumericalBreakdown, SpanError, VerificationFailure
from .integrator import SolutionRecord, _hermite, dense_eval, dense_eval_many
from .model import Grid, PhysicalParams, deriv1

__all__ = [
    "FluxSamples",
    "SliceReport",
    "ConservationReport",
    "coordinate_velocity",
    "flux_at",
    "frame_leaf_derivatives",
    "event_taus",
    "slice_constant_t",
    "conservation_report",
    "simultaneity_contours",
    "max_speed_ratio",
    "slice_coverage_stop",
]

BISECTION_TOL = 1e-10


@dataclass
class FluxSamples:
    """Events ``(ct, x)`` with the flux ``(j0, j1)`` carried by trajectory ``traj_index``."""

    ct: np.ndarray
    x: np.ndarray
    j0: np.ndarray
    j1: np.ndarray
    traj_index: np.ndarray
    tau: Optional[np.ndarray] = None

    def __len__(self):
        return self.x.size

    def take(self, order) -> "FluxSamples":
        tau = None if self.tau is None else self.tau[order]
        return FluxSamples(self.ct[order], self.x[order], self.j0[order],
                           self.j1[order], self.traj_index[order], tau)


@dataclass
class SliceReport:
    """Samples on one constant-coordinate-time slice, ordered by ``x``."""

    t_slice: float
    samples: FluxSamples
    integral: float
    frame_v: float = 0.0


@dataclass
class ConservationReport:
    mean: float
    rms: float
    integrals: np.ndarray
    t_slices: np.ndarray
    slices: list = field(default_factory=list, repr=False)
    frame_v: float = 0.0

    @property
    def relative_rms(self) -> float:
        return self.rms / self.mean


def coordinate_velocity(state: EnsembleState, grid: Grid = None) -> np.ndarray:
    """``dx/dt`` of every trajectory; the ``exp(-Q/mc^2)`` factors cancel."""
    if not np.all(state.u0 > 0):
        i = int(np.argmax(~(state.u0 > 0)))
        raise NumericalBreakdown(f"u0 <= 0 at index {i}: coordinate time not advancing")
    return state.u1 / state.u0


def frame_leaf_derivatives(t, x, grid: Grid, c: float, frame_v: float = 0.0):
    """``(t_C, x_C)`` on leaves expressed in the frame moving at ``frame_v``.

    The initial leaf ``(t, x) = (0, C)`` seen from that frame is linear in
    ``C``; its slope is applied analytically and only the remainder is
    differenced, exactly as the dynamics does in the stationary frame.
    """
    beta = frame_v / c
    gb = 1.0 / np.sqrt(1.0 - beta**2)
    lt, lx = -gb * beta / c, gb
    return lt + deriv1(t - lt * grid.C, grid), lx + deriv1(x - lx * grid.C, grid)


def _flux_components(t, x, u0, u1, grid, params, frame_v=0.0):
    """Flux of every trajectory on the leaves in the last axis of the inputs."""
    c = params.c
    dtdC, dxdC = frame_leaf_derivatives(t, x, grid, c, frame_v)
    gamma = dxdC**2 - c**2 * dtdC**2
    if not np.all(u0 > 0):
        raise NumericalBreakdown("u0 <= 0: coordinate time not advancing")
    w = u1 / u0
    beta2 = (w / c) ** 2
    if not np.all(beta2 < 1):
        i = np.unravel_index(int(np.argmax(~(beta2 < 1))), beta2.shape)[-1]
        raise LightConeViolation(f"|dx/dt| >= c on trajectory {i}")
    if not np.all(gamma > 0):
        i = np.unravel_index(int(np.argmax(~(gamma > 0))), gamma.shape)[-1]
        raise NumericalBreakdown(f"spatial metric <= 0 at trajectory {i}")
    lorentz = 1.0 / np.sqrt(1.0 - beta2)
    density = grid.f / np.sqrt(gamma)
    return c * density * lorentz, density * w * lorentz


def flux_at(state: EnsembleState, grid: Grid, params: PhysicalParams,
            frame_v: float = 0.0) -> FluxSamples:
    """Flux four-vector carried by each trajectory at the events of one leaf.

    ``j0 = c f / sqrt(gamma) * dt/dtau`` and ``j1 = f / sqrt(gamma) * dx/dtau``.
    ``frame_v`` names the frame ``state`` is expressed in.
    """
    j0, j1 = _flux_components(state.t, state.x, state.u0, state.u1, grid, params, frame_v)
    return FluxSamples(params.c * state.t, state.x.copy(), j0, j1,
                       np.arange(grid.n), np.full(grid.n, state.tau_ens))


def event_taus(record: SolutionRecord, t_slice: float) -> np.ndarray:
    """Ensemble time at which each trajectory reaches coordinate time ``t_slice``.

    Coordinate time is monotone along every trajectory, so the step
    containing the crossing is found by search and the Hermite interpolant
    of ``t`` is bisected inside it.
    """
    T = record.component("t")
    dT = record.F[:, : record.n]
    n = record.n
    out = np.empty(n)
    ks = np.empty(n, dtype=np.intp)
    for i in range(n):
        col = T[:, i]
        if t_slice < col[0] or t_slice > col[-1]:
            need = "more negative" if t_slice < col[0] else "larger"
            raise SpanError(
                f"slice t={t_slice:g} not reached by trajectory {i}: its t range is "
                f"[{col[0]:.6g}, {col[-1]:.6g}]; integrate to {need} T"
            )
        k = int(np.searchsorted(col, t_slice, side="left"))
        if k < col.size and col[k] == t_slice:
            out[i] = record.taus[k]
            ks[i] = -1
            continue
        ks[i] = k - 1
    todo = np.flatnonzero(ks >= 0)
    if todo.size:
        k = ks[todo]
        h = record.taus[k + 1] - record.taus[k]
        y0, y1 = T[k, todo], T[k + 1, todo]
        f0, f1 = dT[k, todo], dT[k + 1, todo]
        lo = np.zeros(todo.size)
        hi = np.ones(todo.size)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = _hermite(y0, y1, f0, f1, h, mid)
            below = val < t_slice
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(np.abs(val - t_slice) < BISECTION_TOL) or np.all(hi - lo < 1e-15):
                break
        out[todo] = record.taus[k] + 0.5 * (lo + hi) * h
    return out


def slice_constant_t(record: SolutionRecord, t_slice: float, params: PhysicalParams,
                     grid: Grid) -> SliceReport:
    """Flux samples where each trajectory crosses ``t = t_slice``.

    The slice integral of ``j0`` over ``x`` uses the trapezoidal rule on the
    trajectory-carried samples and is not renormalised.
    """
    taus = event_taus(record, t_slice)
    n = grid.n
    Ys = dense_eval_many(record, taus)
    t, x, u0, u1 = (Ys[:, j * n:(j + 1) * n] for j in range(4))
    j0, j1 = _flux_components(t, x, u0, u1, grid, params, record.frame_v)
    diag = np.arange(n)
    samples = FluxSamples(params.c * t[diag, diag], x[diag, diag].copy(),
                          j0[diag, diag], j1[diag, diag], diag.copy(), taus)
    order = np.argsort(samples.x, kind="stable")
    samples = samples.take(order)
    if not np.all(np.diff(samples.x) > 0):
        raise NumericalBreakdown(f"trajectories crossed on slice t={t_slice:g}")
    integral = float(np.trapezoid(samples.j0, samples.x))
    return SliceReport(float(t_slice), samples, integral, record.frame_v)


def conservation_report(record: SolutionRecord, t_slices: Sequence[float],
                        params: PhysicalParams, grid: Grid) -> ConservationReport:
    """Mean and RMS deviation of the slice integrals over ``t_slices``."""
    slices = [slice_constant_t(record, ts, params, grid) for ts in t_slices]
    integrals = np.array([s.integral for s in slices])
    mean = float(integrals.mean()) if integrals.size else float("nan")
    rms = float(np.sqrt(np.mean((integrals - mean) ** 2))) if integrals.size else float("nan")
    for s in slices:
        if np.any(s.samples.j0 < 0):
            raise VerificationFailure(f"negative density on slice t={s.t_slice:g}")
    return ConservationReport(mean, rms, integrals, np.asarray(t_slices, dtype=float),
                              slices, record.frame_v)


def simultaneity_contours(record: SolutionRecord, tau_values: Sequence[float],
                          c: float) -> list:
    """Constant-``T`` leaves as polylines ``(x_i, c t_i)`` across the labels."""
    contours = []
    for tau in tau_values:
        st = dense_eval(record, tau)
        contours.append(np.column_stack([st.x, c * st.t]))
    return contours


def max_speed_ratio(record: SolutionRecord, c: float) -> float:
    """Largest ``|dx/dt| / c`` over all trajectories and stored steps."""
    u0 = record.component("u0")
    u1 = record.component("u1")
    if not np.all(u0 > 0):
        raise NumericalBreakdown("u0 <= 0 in stored steps")
    return float(np.max(np.abs(u1 / u0)) / c)


def slice_coverage_stop(t_min: float, t_max: float, c: float, frame_v: float = 0.0):
    """Stop predicate for :func:`~reltraj.integrator.evolve`.

    The forward pass may stop once every trajectory has passed ``t_max`` in
    the frame moving at ``frame_v``; the backward pass once every
    trajectory is earlier than ``t_min``.
    """
    beta = frame_v / c
    gb = 1.0 / np.sqrt(1.0 - beta**2)

    def stop(state: EnsembleState, direction: int) -> bool:
        tp = gb * (state.t - beta * state.x / c)
        if direction > 0:
            return bool(np.all(tp >= t_max))
        return bool(np.all(tp <= t_min))

    return stop
