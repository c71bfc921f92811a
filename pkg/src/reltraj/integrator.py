"""Adaptive propagation of the ensemble in ensemble proper time.

A Dormand-Prince 5(4) pair with an elementary (proportional) step
controller advances the state forward from ``T = 0`` and, independently,
backward.  Every accepted step is stored together with its time derivative
so the record can be evaluated anywhere by cubic Hermite interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import EnsembleState, pack, rhs, unpack
from .errors import (
    ConfigurationError,
    LightConeViolation,
    NumericalBreakdown,
    SpanError,
    StepSizeUnderflow,
)
from .model import Grid, GridSpec, PhysicalParams

__all__ = ["IntegratorConfig", "SolutionRecord", "evolve", "dense_eval"]

# Dormand & Prince (1980) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and span of one propagation.

    ``t_span`` bounds the ensemble time in both directions; with a ``stop``
    predicate passed to :func:`evolve` the integration may end earlier.
    Every entry of ``output_times`` becomes an accepted step exactly.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float = math.inf
    t_span: tuple = (0.0, 10.0)
    output_times: tuple = ()
    max_steps: int = 200_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ConfigurationError("rtol and atol must be positive")
        if not self.max_step > 0:
            raise ConfigurationError("max_step must be positive")
        lo, hi = self.t_span
        if not lo <= 0 <= hi:
            raise ConfigurationError(f"t_span must bracket 0, got {self.t_span}")
        for tau in self.output_times:
            if not lo <= tau <= hi:
                raise ConfigurationError(f"output time {tau} outside t_span {self.t_span}")
        object.__setattr__(self, "t_span", (float(lo), float(hi)))
        object.__setattr__(self, "output_times", tuple(sorted(float(t) for t in self.output_times)))


@dataclass
class SolutionRecord:
    """Accepted steps of a propagation, sorted by ensemble time.

    ``Y[k]`` and ``F[k]`` are the packed state ``(t, x, u0, u1)`` and its
    derivative at ``taus[k]``.  ``frame_v`` is the velocity of the frame the
    coordinates are expressed in relative to the stationary frame.
    """

    taus: np.ndarray
    Y: np.ndarray
    F: np.ndarray
    params: PhysicalParams
    grid_spec: GridSpec
    config: IntegratorConfig
    frame_v: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Y.shape[1] // 4

    @property
    def span(self) -> tuple:
        return float(self.taus[0]), float(self.taus[-1])

    def state(self, k: int) -> EnsembleState:
        return EnsembleState(float(self.taus[k]), *unpack(self.Y[k]))

    def component(self, name: str) -> np.ndarray:
        """One field over all steps, shape ``(n_steps, n_points)``."""
        j = ("t", "x", "u0", "u1").index(name)
        n = self.n
        return self.Y[:, j * n:(j + 1) * n]

    def index_of(self, tau: float) -> int:
        k = int(np.searchsorted(self.taus, tau))
        if k < self.taus.size and self.taus[k] == tau:
            return k
        raise SpanError(f"T={tau} is not a stored step")


def _rhs_vector(grid, params):
    def fun(tau, y):
        t, x, u0, u1 = unpack(y)
        return pack(*rhs(EnsembleState(tau, t, x, u0, u1), grid, params))
    return fun


def _error_norm(err, y, y_new, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(fun, tau0, y0, f0, direction, cfg):
    """Starting step size after Hairer, Norsett & Wanner (II.4)."""
    scale = cfg.atol + cfg.rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step)
    try:
        f1 = fun(tau0 + direction * h0, y0 + direction * h0 * f0)
    except NumericalBreakdown:
        return h0 * 1e-3
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, cfg.max_step)


def _check_accepted(tau, y, params):
    t, x, u0, u1 = unpack(y)
    if not np.all(u0 > 0):
        i = int(np.argmax(~(u0 > 0)))
        raise NumericalBreakdown(f"u0 <= 0 at index {i} at T={tau:.6g}")
    speed = np.abs(u1 / u0)
    if not np.all(speed < params.c):
        i = int(np.argmax(~(speed < params.c)))
        raise LightConeViolation(
            f"|dx/dt|={speed[i]:.6g} >= c={params.c} at index {i} at T={tau:.6g}"
        )


def _integrate_direction(fun, y0, f0, direction, bound, outputs, cfg, params, stop):
    """March from ``T = 0`` toward ``bound``; returns the accepted steps."""
    taus, ys, fs = [], [], []
    tau, y, f = 0.0, y0, f0
    targets = sorted((o for o in outputs if o * direction > 0), key=lambda o: o * direction)
    if bound == 0.0:
        return taus, ys, fs, {"rejected": 0, "stopped_early": False}
    h = _initial_step(fun, tau, y, f, direction, cfg)
    rejected = 0
    stopped_early = False
    while True:
        remaining = (bound - tau) * direction
        if remaining <= 0:
            break
        if len(taus) >= cfg.max_steps:
            raise StepSizeUnderflow(f"exceeded {cfg.max_steps} steps at T={tau:.6g}")
        next_target = targets[0] if targets else bound
        h = min(h, cfg.max_step, (next_target - tau) * direction)
        hits_target = h == (next_target - tau) * direction
        min_h = 16 * np.spacing(max(abs(tau), 1.0))
        if h < min_h:
            raise StepSizeUnderflow(f"step size {h:.3e} below {min_h:.3e} at T={tau:.6g}")
        try:
            k = [f]
            for s in range(1, 7):
                dy = sum(a * kk for a, kk in zip(_A[s], k))
                k.append(fun(tau + direction * _C[s] * h, y + direction * h * dy))
            y_new = y + direction * h * sum(b * kk for b, kk in zip(_B5, k[:6]))
            err = direction * h * sum(e * kk for e, kk in zip(_E, k))
            err_norm = _error_norm(err, y, y_new, cfg)
            if not math.isfinite(err_norm):
                raise NumericalBreakdown("non-finite error estimate")
        except NumericalBreakdown as exc:
            # a trial stage left the admissible domain: shrink and retry
            rejected += 1
            h *= 0.25
            if h < min_h:
                # persistent failure: surface the physical cause
                raise exc
            continue
        if err_norm <= 1.0:
            tau_new = next_target if hits_target else tau + direction * h
            f_new = k[6]
            _check_accepted(tau_new, y_new, params)
            tau, y, f = tau_new, y_new, f_new
            taus.append(tau)
            ys.append(y)
            fs.append(f)
            if hits_target and targets:
                targets.pop(0)
            factor = _MAX_FACTOR if err_norm == 0 else min(
                _MAX_FACTOR, _SAFETY * err_norm ** -0.2)
            h *= factor
            if stop is not None and not targets and stop(EnsembleState(tau, *unpack(y)), direction):
                stopped_early = True
                break
        else:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
    return taus, ys, fs, {"rejected": rejected, "stopped_early": stopped_early}


def evolve(initial: EnsembleState, cfg: IntegratorConfig, params: PhysicalParams,
           grid: Grid, *, stop: Optional[Callable[[EnsembleState, int], bool]] = None
           ) -> SolutionRecord:
    """Integrate the equations of motion over ``cfg.t_span``.

    The forward pass runs to ``t_span[1]`` and, if ``t_span[0] < 0``, a
    separate backward pass runs from the same initial state to
    ``t_span[0]``.  ``stop(state, direction)`` can end either pass after any
    accepted step once all output times in that direction are reached.

    Raises
    ------
    StepSizeUnderflow
        If no acceptable step can be found (typically an instability).
    MetricDegeneracyError, LightConeViolation
        If the accepted solution leaves the physical domain.
    """
    if initial.tau_ens != 0.0:
        raise ConfigurationError("evolve starts from an initial state at T = 0")
    fun = _rhs_vector(grid, params)
    y0 = initial.as_vector()
    f0 = fun(0.0, y0)
    lo, hi = cfg.t_span
    fwd = _integrate_direction(fun, y0, f0, +1, hi, cfg.output_times, cfg, params, stop)
    bwd = _integrate_direction(fun, y0, f0, -1, lo, cfg.output_times, cfg, params, stop)
    taus = bwd[0][::-1] + [0.0] + fwd[0]
    Y = np.array(bwd[1][::-1] + [y0] + fwd[1])
    F = np.array(bwd[2][::-1] + [f0] + fwd[2])
    stats = {
        "forward_steps": len(fwd[0]),
        "backward_steps": len(bwd[0]),
        "rejected": fwd[3]["rejected"] + bwd[3]["rejected"],
        "stopped_early": {"forward": fwd[3]["stopped_early"], "backward": bwd[3]["stopped_early"]},
    }
    return SolutionRecord(np.array(taus), Y, F, params, grid.spec, cfg, 0.0, stats)


def _hermite(y0, y1, f0, f1, h, s):
    """Cubic Hermite interpolant on ``[0, h]`` at fraction ``s`` (broadcasts)."""
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _hermite_deriv(y0, y1, f0, f1, h, s):
    s2 = s * s
    d00 = (6 * s2 - 6 * s) / h
    d10 = 3 * s2 - 4 * s + 1
    d01 = (-6 * s2 + 6 * s) / h
    d11 = 3 * s2 - 2 * s
    return d00 * y0 + d10 * f0 + d01 * y1 + d11 * f1


def _locate(record: SolutionRecord, tau):
    lo, hi = record.span
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < lo) or np.any(tau > hi):
        raise SpanError(f"T={tau} outside integrated span [{lo:.6g}, {hi:.6g}]")
    if record.taus.size == 1:
        return np.zeros(tau.shape, dtype=np.intp)
    k = np.clip(np.searchsorted(record.taus, tau, side="right") - 1, 0, record.taus.size - 2)
    return k


def dense_eval(record: SolutionRecord, tau: float) -> EnsembleState:
    """State at ensemble time ``tau`` from the stored steps.

    Stored steps are returned exactly; elsewhere the cubic Hermite
    interpolant through the bracketing steps is used.
    """
    k = int(_locate(record, tau))
    if record.taus[k] == tau:
        return record.state(k)
    if record.taus[k + 1] == tau:
        return record.state(k + 1)
    h = record.taus[k + 1] - record.taus[k]
    s = (tau - record.taus[k]) / h
    y = _hermite(record.Y[k], record.Y[k + 1], record.F[k], record.F[k + 1], h, s)
    return EnsembleState(float(tau), *unpack(y))


def dense_eval_many(record: SolutionRecord, taus: Sequence[float]) -> np.ndarray:
    """Packed states at several ensemble times, shape ``(len(taus), 4n)``."""
    taus = np.asarray(taus, dtype=float)
    k = _locate(record, taus)
    if record.taus.size == 1:
        return np.repeat(record.Y[:1], taus.size, axis=0)
    h = record.taus[k + 1] - record.taus[k]
    s = ((taus - record.taus[k]) / h)[:, None]
    return _hermite(record.Y[k], record.Y[k + 1], record.F[k], record.F[k + 1], h[:, None], s)
