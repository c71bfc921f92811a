"""Problem parameters, the trajectory-label grid and derivative operators.

Trajectories are labelled by ``C``, their initial position.  Labels live on
a grid that is either uniform in ``C`` or uniform in an auxiliary coordinate
``q`` with ``C(q) = A * artanh(beta * q)``, which packs points near the
centre of the wavepacket.  Derivatives with respect to ``C`` are always
formed in ``q`` and converted with the analytic chain-rule factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = [
    "PhysicalParams",
    "GridSpec",
    "Grid",
    "build_grid",
    "fd_weights",
    "deriv1",
    "deriv2",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Constants of one free-particle wavepacket problem.

    Parameters
    ----------
    a : float
        Gaussian width parameter of the ensemble weight ``exp(-a C**2)``.
    hbar : float
        Reduced Planck constant.
    m : float
        Particle mass.
    c : float
        Speed of light.
    """

    a: float = 0.5
    hbar: float = 1.0
    m: float = 1.0
    c: float = 1.5

    def __post_init__(self):
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise ConfigurationError(f"a must be >= 0, got {self.a}")
        for name in ("hbar", "m", "c"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be > 0, got {value}")

    @property
    def mc2(self) -> float:
        return self.m * self.c**2


@dataclass(frozen=True)
class GridSpec:
    """Description of a trajectory-label grid.

    ``q_max`` and ``beta_grid`` only matter for ``kind == "tanh"``.
    ``order`` is the accuracy order of the finite-difference stencils.
    """

    kind: str = "tanh"
    n_points: int = 53
    c_max: float = 5.0
    q_max: float = 5.0
    beta_grid: float = 0.19
    order: int = 4

    def __post_init__(self):
        if self.kind not in ("uniform", "tanh"):
            raise ConfigurationError(f"unknown grid kind {self.kind!r}")
        if int(self.n_points) != self.n_points or self.n_points < 5 or self.n_points % 2 == 0:
            raise ConfigurationError(
                f"n_points must be an odd integer >= 5, got {self.n_points}"
            )
        if not self.c_max > 0:
            raise ConfigurationError(f"c_max must be > 0, got {self.c_max}")
        if self.order not in (2, 4, 6, 8):
            raise ConfigurationError(f"stencil order must be 2, 4, 6 or 8, got {self.order}")
        if self.n_points < self.order + 2:
            raise ConfigurationError(
                f"n_points={self.n_points} too small for order-{self.order} stencils"
            )
        if self.kind == "tanh":
            if not self.q_max > 0:
                raise ConfigurationError(f"q_max must be > 0, got {self.q_max}")
            if not 0 < self.beta_grid * self.q_max < 1:
                raise ConfigurationError(
                    "tanh grid needs 0 < beta_grid*q_max < 1, got "
                    f"{self.beta_grid * self.q_max}"
                )

    def scaled(self, eta: float) -> "GridSpec":
        """Same grid with every label multiplied by ``eta``."""
        return GridSpec(self.kind, self.n_points, self.c_max * eta, self.q_max,
                        self.beta_grid, self.order)

    def resized(self, n_points: int) -> "GridSpec":
        return GridSpec(self.kind, n_points, self.c_max, self.q_max,
                        self.beta_grid, self.order)


@dataclass(frozen=True, eq=False)
class Grid:
    """Discretised labels with the mapping derivatives and ensemble weight."""

    spec: GridSpec
    a: float
    q: np.ndarray
    C: np.ndarray
    dCdq: np.ndarray
    d2Cdq2: np.ndarray
    A: float
    f: np.ndarray
    h: float
    _d1: tuple = field(repr=False)
    _d2: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def mid(self) -> int:
        return self.q.size // 2


def build_grid(spec: GridSpec, a: float) -> Grid:
    """Construct the label grid described by ``spec``.

    ``a`` fixes the ensemble weight ``f = exp(-a C**2)``; it is stored on
    the grid because every observable needs it alongside the labels.
    """
    if a < 0:
        raise ConfigurationError(f"a must be >= 0, got {a}")
    n = spec.n_points
    mid = n // 2
    if spec.kind == "uniform":
        # integer offsets keep the grid exactly antisymmetric
        k = np.arange(n) - mid
        h = spec.c_max / mid
        q = k * h
        q[mid:] = -q[mid::-1]
        C = q.copy()
        dCdq = np.ones(n)
        d2Cdq2 = np.zeros(n)
        A = 1.0
    else:
        k = np.arange(n) - mid
        h = spec.q_max / mid
        q = k * h
        q[mid:] = -q[mid::-1]
        beta = spec.beta_grid
        A = spec.c_max / math.atanh(beta * spec.q_max)
        C = A * np.arctanh(beta * q)
        C[mid:] = -C[mid::-1]
        C[0], C[-1] = -spec.c_max, spec.c_max
        denom = 1.0 - (beta * q) ** 2
        dCdq = A * beta / denom
        d2Cdq2 = 2.0 * A * beta**3 * q / denom**2
    f = np.exp(-a * C**2)
    for arr in (q, C, dCdq, d2Cdq2, f):
        arr.setflags(write=False)
    return Grid(spec, float(a), q, C, dCdq, d2Cdq2, float(A), f, float(h),
                _stencil_table(n, spec.order, 1), _stencil_table(n, spec.order, 2))


def fd_weights(offsets, deriv: int) -> list[Fraction]:
    """Exact finite-difference weights for ``deriv`` on integer ``offsets``.

    Returns weights ``w`` such that ``sum(w[k] * F(x + offsets[k]))``
    approximates ``F^(deriv)(x)`` for unit spacing, exactly for polynomials
    of degree below ``len(offsets)``.
    """
    offsets = [Fraction(o) for o in offsets]
    npts = len(offsets)
    if deriv >= npts:
        raise ValueError("need more points than the derivative order")
    # moment conditions sum w_k o_k^p = p! * delta(p, deriv)
    rows = [[o**p for o in offsets] + [Fraction(math.factorial(deriv)) if p == deriv else Fraction(0)]
            for p in range(npts)]
    for col in range(npts):
        pivot = next(r for r in range(col, npts) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        piv = rows[col][col]
        rows[col] = [v / piv for v in rows[col]]
        for r in range(npts):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [v - factor * pv for v, pv in zip(rows[r], rows[col])]
    return [rows[k][npts] for k in range(npts)]


@lru_cache(maxsize=None)
def _stencil_table(n: int, order: int, deriv: int):
    """Index and weight arrays for the q-space stencil of every grid row.

    Interior rows use the central stencil of the requested order; rows too
    close to an edge use a one-sided window of the same order.
    """
    half = order // 2
    central = list(range(-half, half + 1))
    one_sided_width = order + deriv
    idx = np.zeros((n, max(len(central), one_sided_width)), dtype=np.intp)
    wts = np.zeros(idx.shape)
    for i in range(n):
        if half <= i <= n - 1 - half:
            offs = central
        elif i < half:
            offs = [j - i for j in range(one_sided_width)]
        else:
            offs = [j - i for j in range(n - one_sided_width, n)]
        w = fd_weights(offs, deriv)
        for k, (o, wk) in enumerate(zip(offs, w)):
            idx[i, k] = i + o
            wts[i, k] = float(wk)
        # unused slots point at the row itself with zero weight
        for k in range(len(offs), idx.shape[1]):
            idx[i, k] = i
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


def _apply(table, field: np.ndarray) -> np.ndarray:
    idx, wts = table
    # differences against the row value make constants vanish exactly
    diffs = field[..., idx] - field[..., :, None]
    return np.einsum("...ik,ik->...i", diffs, wts)


def _check(field, grid: Grid) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.shape[-1] != grid.n:
        raise ShapeError(f"field has {field.shape[-1]} points, grid has {grid.n}")
    return field


def deriv1(field, grid: Grid) -> np.ndarray:
    """First derivative with respect to ``C`` along the last axis."""
    F = _check(field, grid)
    Fq = _apply(grid._d1, F) / grid.h
    return Fq / grid.dCdq


def deriv2(field, grid: Grid) -> np.ndarray:
    """Second derivative with respect to ``C`` along the last axis."""
    F = _check(field, grid)
    Fq = _apply(grid._d1, F) / grid.h
    Fqq = _apply(grid._d2, F) / grid.h**2
    return (Fqq - Fq * grid.d2Cdq2 / grid.dCdq) / grid.dCdq**2
