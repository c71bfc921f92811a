"""Lorentz boosts of trajectory ensembles and of the flux four-vector.

A boost to a frame moving with velocity ``v`` acts on ``(ct, x)`` as::

    L = g * [[1, -b], [-b, 1]],   b = v/c,  g = 1/sqrt(1 - b**2)

The natural coordinates (labels ``C`` and ensemble time ``T``) are frame
independent, so boosting a record is pure post-processing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .integrator import SolutionRecord
from .model import Grid, PhysicalParams
from .observables import ConservationReport, FluxSamples, conservation_report

__all__ = [
    "BoostParams",
    "boost_matrix",
    "boost_events",
    "boost_flux",
    "boosted_conservation",
    "BoostedConservation",
    "rest_frame_positions",
    "compose_velocities",
]


@dataclass(frozen=True)
class BoostParams:
    """Boost with velocity ``v`` for speed of light ``c``."""

    v: float
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigurationError(f"c must be > 0, got {self.c}")
        if not abs(self.v) < self.c:
            raise ConfigurationError(f"boost speed |v|={abs(self.v)} must be below c={self.c}")

    @classmethod
    def from_beta(cls, beta: float, c: float) -> "BoostParams":
        return cls(beta * c, c)

    @property
    def beta_boost(self) -> float:
        return self.v / self.c

    @property
    def gamma_boost(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.beta_boost**2)

    def inverse(self) -> "BoostParams":
        return BoostParams(-self.v, self.c)


def boost_matrix(boost: BoostParams) -> np.ndarray:
    g, b = boost.gamma_boost, boost.beta_boost
    return np.array([[g, -g * b], [-g * b, g]])


def _apply(boost, first, second):
    """Transform a pair ``(first, second)`` of time-like/space-like components."""
    g, b = boost.gamma_boost, boost.beta_boost
    return g * (first - b * second), g * (second - b * first)


def compose_velocities(v1: float, v2: float, c: float) -> float:
    return (v1 + v2) / (1.0 + v1 * v2 / c**2)


def boost_events(record: SolutionRecord, boost: BoostParams) -> SolutionRecord:
    """Express every stored event and velocity in the boosted frame.

    ``(ct, x)`` and the scaled four-velocity ``(c u0, u1)`` are both
    contravariant vectors, as are their ensemble-time derivatives, so the
    dense output of the boosted record is the boost of the original one.
    """
    if not math.isclose(boost.c, record.params.c, rel_tol=1e-15):
        raise ConfigurationError("boost and record use different speeds of light")
    c = boost.c
    n = record.n

    def transform(Z):
        if boost.v == 0.0:
            return Z.copy()
        t, x, u0, u1 = (Z[:, j * n:(j + 1) * n] for j in range(4))
        ct, xp = _apply(boost, c * t, x)
        cu0, u1p = _apply(boost, c * u0, u1)
        return np.hstack([ct / c, xp, cu0 / c, u1p])

    frame_v = compose_velocities(record.frame_v, boost.v, c)
    return replace(record, Y=transform(record.Y), F=transform(record.F), frame_v=frame_v,
                   stats=dict(record.stats))


def boost_flux(samples: FluxSamples, boost: BoostParams) -> FluxSamples:
    """Boost the events and the flux vectors of ``samples`` together."""
    ct, x = _apply(boost, samples.ct, samples.x)
    j0, j1 = _apply(boost, samples.j0, samples.j1)
    return FluxSamples(ct, x, j0, j1, samples.traj_index.copy(),
                       None if samples.tau is None else samples.tau.copy())


@dataclass
class BoostedConservation:
    """Slice integrals of the boosted density on constant-``t'`` slices.

    Two measures are reported for the same samples.  ``charge`` integrates
    ``j'0`` over the boosted position ``x'`` and is the Lorentz-invariant
    total probability.  ``integrals`` integrate ``j'0`` over the rest-frame
    position ``x`` of the same events; on a constant-``t'`` slice
    ``x = gamma_b x' + const``, so these equal ``gamma_b`` times the charge.
    """

    boost: BoostParams
    integrals: np.ndarray
    charge: ConservationReport

    @property
    def t_slices(self) -> np.ndarray:
        return self.charge.t_slices

    @property
    def mean(self) -> float:
        return float(self.integrals.mean()) if self.integrals.size else float("nan")

    @property
    def rms(self) -> float:
        if not self.integrals.size:
            return float("nan")
        return float(np.sqrt(np.mean((self.integrals - self.mean) ** 2)))

    @property
    def charge_mean(self) -> float:
        return self.charge.mean

    @property
    def slices(self) -> list:
        return self.charge.slices


def rest_frame_positions(samples: FluxSamples, boost: BoostParams) -> np.ndarray:
    """Position in the unboosted frame of events given in the boosted one."""
    _, x = _apply(boost.inverse(), samples.ct, samples.x)
    return x


def boosted_conservation(record: SolutionRecord, boost: BoostParams,
                         t_prime_slices: Sequence[float], params: PhysicalParams,
                         grid: Grid) -> BoostedConservation:
    """Slice integrals of the boosted density over constant-``t'`` slices.

    ``record`` is the stationary-frame run; it must cover every requested
    ``t'`` (see :func:`~reltraj.observables.slice_coverage_stop`).
    """
    boosted = boost_events(record, boost)
    charge = conservation_report(boosted, t_prime_slices, params, grid)
    integrals = []
    for s in charge.slices:
        x = rest_frame_positions(s.samples, boost)
        integrals.append(float(np.trapezoid(s.samples.j0, x)))
    return BoostedConservation(boost, np.array(integrals), charge)
