"""Scale invariance, grid convergence and the nonrelativistic limit.

These are comparisons between complete runs; none of them integrates
anything itself.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError
from .integrator import SolutionRecord
from .integrator import dense_eval_many
from .model import Grid, PhysicalParams, build_grid
from .observables import event_taus, frame_leaf_derivatives

__all__ = [
    "ScaleTransform",
    "CoordinateScaling",
    "apply_scale",
    "grid_for",
    "metric_history",
    "scale_invariance_error",
    "ScaleReport",
    "convergence_error",
    "ConvergenceField",
    "nonrelativistic_trajectory",
    "nonrelativistic_check",
]


@dataclass(frozen=True)
class ScaleTransform:
    """Double rescaling ``c -> zeta c`` and coordinates ``-> eta *``."""

    zeta: float = 1.0
    eta: float = 1.0

    def __post_init__(self):
        if not (self.zeta > 0 and self.eta > 0):
            raise ConfigurationError("zeta and eta must be positive")

    def then(self, other: "ScaleTransform") -> "ScaleTransform":
        return ScaleTransform(self.zeta * other.zeta, self.eta * other.eta)


@dataclass(frozen=True)
class CoordinateScaling:
    """Factors by which each coordinate is multiplied."""

    tau: float
    C: float
    t: float
    x: float


def apply_scale(params: PhysicalParams, s: ScaleTransform):
    """Parameters of the rescaled problem and the induced coordinate map.

    The mass is held fixed, so ``hbar/m -> eta*zeta*hbar/m`` becomes
    ``hbar -> eta*zeta*hbar``; ``a -> a/eta**2`` keeps the weight invariant.
    """
    new = PhysicalParams(a=params.a / s.eta**2, hbar=params.hbar * s.eta * s.zeta,
                         m=params.m, c=params.c * s.zeta)
    ratio = s.eta / s.zeta
    return new, CoordinateScaling(tau=ratio, C=s.eta, t=ratio, x=s.eta)


def grid_for(record: SolutionRecord) -> Grid:
    return build_grid(record.grid_spec, record.params.a)


def metric_history(record: SolutionRecord, taus: Sequence[float],
                   grid: Optional[Grid] = None) -> np.ndarray:
    """Spatial metric on the stored leaves at ``taus``, shape ``(len(taus), n)``."""
    grid = grid or grid_for(record)
    c = record.params.c
    rows = []
    for tau in taus:
        st = record.state(record.index_of(tau))
        dtdC, dxdC = frame_leaf_derivatives(st.t, st.x, grid, c, record.frame_v)
        rows.append(dxdC**2 - c**2 * dtdC**2)
    return np.array(rows)


@dataclass
class ScaleReport:
    max_weighted: float
    rms_weighted: float
    max_gamma: float
    taus_a: np.ndarray

    @property
    def relative_max(self) -> float:
        return self.max_weighted / self.max_gamma


def scale_invariance_error(run_a: SolutionRecord, run_b: SolutionRecord,
                           s: ScaleTransform, taus_a: Sequence[float],
                           interior: float = 3.0) -> ScaleReport:
    """Probability-weighted metric discrepancy between a run and its rescaled twin.

    ``run_b`` must use the labels of ``run_a`` multiplied by ``eta`` and must
    have stored steps at ``(eta/zeta) * taus_a``; points are compared index
    by index, nothing is interpolated.  ``interior`` bounds ``|C|`` in the
    labels of ``run_a``.
    """
    params_b, cmap = apply_scale(run_a.params, s)
    for name in ("a", "hbar", "m", "c"):
        if not math.isclose(getattr(params_b, name), getattr(run_b.params, name), rel_tol=1e-12):
            raise ConfigurationError(f"run_b.{name} does not match the rescaled parameters")
    grid_a, grid_b = grid_for(run_a), grid_for(run_b)
    if grid_a.n != grid_b.n or not np.allclose(grid_b.C, cmap.C * grid_a.C, rtol=1e-12, atol=1e-12):
        raise ConfigurationError("run_b labels are not eta times run_a labels")
    taus_a = np.asarray(taus_a, dtype=float)
    try:
        gamma_a = metric_history(run_a, taus_a, grid_a)
        gamma_b = metric_history(run_b, [cmap.tau * float(t) for t in taus_a], grid_b)
    except Exception as exc:
        raise ConfigurationError(f"runs are not time-aligned: {exc}") from exc
    mask = np.abs(grid_a.C) <= interior
    weighted = (grid_a.f * np.abs(gamma_b - gamma_a))[:, mask]
    return ScaleReport(float(weighted.max()), float(np.sqrt(np.mean(weighted**2))),
                       float(gamma_a[:, mask].max()), taus_a)


@dataclass
class ConvergenceField:
    """``f(C) * (gamma_large - gamma_small)`` on the small grid's labels."""

    taus: np.ndarray
    C: np.ndarray
    values: np.ndarray

    def interior_rms(self, interior: float = 3.0) -> float:
        v = self.values[:, np.abs(self.C) <= interior]
        return float(np.sqrt(np.mean(v**2)))

    def argmax_label(self) -> float:
        k, i = np.unravel_index(int(np.argmax(np.abs(self.values))), self.values.shape)
        return float(self.C[i])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def convergence_error(small: SolutionRecord, large: SolutionRecord,
                      taus: Sequence[float]) -> ConvergenceField:
    """Probability-weighted metric difference against a larger grid.

    The larger grid's metric is carried to the smaller grid's labels with a
    cubic spline in ``C``.  Both runs need stored steps at ``taus``.
    """
    if small.params != large.params:
        raise ConfigurationError("convergence runs must share physical parameters")
    sa, sb = small.grid_spec, large.grid_spec
    if (sa.kind, sa.c_max, sa.q_max, sa.beta_grid) != (sb.kind, sb.c_max, sb.q_max, sb.beta_grid):
        raise ConfigurationError("convergence runs must share the grid map")
    g_small, g_large = grid_for(small), grid_for(large)
    gam_s = metric_history(small, taus, g_small)
    gam_l = metric_history(large, taus, g_large)
    carried = CubicSpline(g_large.C, gam_l, axis=1)(g_small.C)
    return ConvergenceField(np.asarray(taus, dtype=float), np.array(g_small.C),
                            g_small.f * (carried - gam_s))


def nonrelativistic_trajectory(C, t, params: PhysicalParams):
    """Bohmian trajectory of a free coherent Gaussian in the ``c -> inf`` limit."""
    spread = np.sqrt(1.0 + (params.hbar * params.a * np.asarray(t) / params.m) ** 2)
    return np.asarray(C) * spread


def nonrelativistic_check(record: SolutionRecord, params: PhysicalParams,
                          t_values: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0),
                          c_limit: float = 2.0) -> float:
    """Largest deviation from the nonrelativistic trajectories, in packet widths.

    Trajectories with ``|C| <= c_limit`` are sampled at constant ``t``.  The
    width is ``sqrt(1/2a) * sqrt(1 + (hbar a t/m)**2)``; for ``a = 0`` the
    absolute deviation is returned instead.
    """
    grid = grid_for(record)
    sel = np.flatnonzero(np.abs(grid.C) <= c_limit)
    n = grid.n
    worst = 0.0
    for t in t_values:
        taus = event_taus(record, float(t))[sel]
        Ys = dense_eval_many(record, taus)
        x = Ys[np.arange(sel.size), n + sel]
        x_nr = nonrelativistic_trajectory(grid.C[sel], t, params)
        if params.a > 0:
            width = math.sqrt(0.5 / params.a) * math.sqrt(1 + (params.hbar * params.a * t / params.m) ** 2)
        else:
            width = 1.0
        worst = max(worst, float(np.max(np.abs(x - x_nr)) / width))
    return worst
