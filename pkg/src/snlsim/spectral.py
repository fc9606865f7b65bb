"""Periodic grids, Fourier conventions, frequency projection and norms.

Every field lives on the torus ``[0, L)^d`` sampled at ``M`` points per axis.
Fourier coefficients are taken against the volume-normalised basis
``e_xi(x) = V**-0.5 * exp(i xi.x)``, so that Parseval holds without constants::

    sum_xi |c_xi|**2 == sum_x |u(x)|**2 * cell_volume

All array kernels accept leading batch axes; the spatial axes are always the
trailing ``d`` axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "SpectralGrid",
    "GridField",
    "StrichartzPair",
    "SpaceTimeSample",
    "make_grid",
    "project_PN",
    "smooth_cutoff",
    "lebesgue_norm",
    "sobolev_norm",
    "sobolev_lebesgue_norm",
    "space_time_norm",
    "strichartz_norm",
    "is_admissible",
    "scaling_critical_index",
    "rescale_field",
    "mass_critical_pair",
    "energy_critical_pair",
]

MAX_DIMENSION = 4


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Uniform periodic grid on ``[0, L)^d`` with ``M`` modes per axis."""

    dimension: int
    modes: int
    length: float
    workers: int | None = field(default=None, compare=False)

    def __post_init__(self):
        k = np.fft.fftfreq(self.modes, d=1.0 / self.modes).astype(int)
        # fftfreq puts the Nyquist index at -M/2, i.e. on the negative side.
        axes = np.meshgrid(*([k] * self.dimension), indexing="ij")
        object.__setattr__(self, "_k1d", k)
        object.__setattr__(self, "_index", np.stack(axes))
        xi = np.stack(axes) * (2.0 * np.pi / self.length)
        xi.setflags(write=False)
        object.__setattr__(self, "_xi", xi)
        xi2 = np.sum(xi**2, axis=0)
        xi2.setflags(write=False)
        object.__setattr__(self, "_xi2", xi2)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes,) * self.dimension

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dimension, 0))

    @property
    def size(self) -> int:
        return self.modes**self.dimension

    @property
    def spacing(self) -> float:
        return self.length / self.modes

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    @property
    def volume(self) -> float:
        return self.length**self.dimension

    @property
    def integer_wavenumbers(self) -> np.ndarray:
        """1-D integer frequency indices ``{-M/2, ..., M/2 - 1}`` (FFT order)."""
        return self._k1d

    @property
    def mode_index(self) -> np.ndarray:
        """Integer frequency index per axis, shape ``(d, M, ..., M)``."""
        return self._index

    @property
    def wavevector(self) -> np.ndarray:
        """Physical wavevector components, shape ``(d, M, ..., M)``."""
        return self._xi

    @property
    def xi_squared(self) -> np.ndarray:
        return self._xi2

    @property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self._xi2)

    @property
    def nyquist_frequency(self) -> float:
        return np.pi * self.modes / self.length

    @property
    def max_frequency(self) -> float:
        """Largest ``|xi|`` on the grid (the Nyquist corner)."""
        return float(np.sqrt(self.dimension)) * self.nyquist_frequency

    def japanese(self) -> np.ndarray:
        """``<xi> = (1 + |xi|^2)^(1/2)``."""
        return np.sqrt(1.0 + self._xi2)

    def nyquist_mask(self) -> np.ndarray:
        """True on modes with some axis index equal to ``-M/2``."""
        return np.any(self._index == -(self.modes // 2), axis=0)

    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every ``|k_a| <= M/3``."""
        return np.all(np.abs(self._index) <= self.modes // 3, axis=0)

    def coordinates(self) -> np.ndarray:
        x = np.arange(self.modes) * self.spacing
        return np.stack(np.meshgrid(*([x] * self.dimension), indexing="ij"))

    # Fourier transforms in the volume-normalised basis.
    def to_coefficients(self, values: np.ndarray) -> np.ndarray:
        scale = self.cell_volume / math.sqrt(self.volume)
        return sfft.fftn(values, axes=self.axes, workers=self.workers) * scale

    def from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        scale = self.size / math.sqrt(self.volume)
        return sfft.ifftn(coeffs, axes=self.axes, workers=self.workers) * scale

    def apply_multiplier(self, values: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        """Physical-space application of a Fourier multiplier."""
        spec = sfft.fftn(values, axes=self.axes, workers=self.workers)
        return sfft.ifftn(spec * symbol, axes=self.axes, workers=self.workers)

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Spectral gradient, stacked on a new axis placed before the spatial axes.

        The odd derivative symbol ``i xi_a`` is zeroed on the Nyquist plane of
        axis ``a`` so that real fields keep real derivatives.
        """
        spec = sfft.fftn(values, axes=self.axes, workers=self.workers)
        half = -(self.modes // 2)
        out = []
        for a in range(self.dimension):
            sym = 1j * self._xi[a] * (self._index[a] != half)
            out.append(sfft.ifftn(spec * sym, axes=self.axes, workers=self.workers))
        return np.stack(out, axis=-self.dimension - 1)

    def __repr__(self):
        return f"SpectralGrid(d={self.dimension}, M={self.modes}, L={self.length:g})"

    def same_as(self, other: "SpectralGrid") -> bool:
        return (
            self.dimension == other.dimension
            and self.modes == other.modes
            and self.length == other.length
        )


def make_grid(d: int, M: int, L: float, workers: int | None = None) -> SpectralGrid:
    """Build a periodic grid, validating dimension, resolution and length."""
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= MAX_DIMENSION:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIMENSION}], got {d!r}")
    if not isinstance(M, (int, np.integer)) or M < 8 or M & (M - 1):
        raise ValueError(f"modes per axis must be a power of two >= 8, got {M!r}")
    if not (L > 0 and math.isfinite(L)):
        raise ValueError(f"domain length must be positive and finite, got {L!r}")
    return SpectralGrid(int(d), int(M), float(L), workers)


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples of a function on a :class:`SpectralGrid`."""

    grid: SpectralGrid
    values: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if not self.diverged and not np.all(np.isfinite(vals)):
            raise ValueError("non-finite values in a field not flagged as diverged")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_coefficients(cls, grid: SpectralGrid, coeffs: np.ndarray) -> "GridField":
        return cls(grid, grid.from_coefficients(coeffs))

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "GridField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    def coefficients(self) -> np.ndarray:
        return self.grid.to_coefficients(self.values)

    def __add__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "GridField":
        return GridField(self.grid, self.values * scalar)

    __rmul__ = __mul__


def smooth_cutoff(rho: np.ndarray) -> np.ndarray:
    """``chi(rho)``: 1 on ``[0, 1]``, cos^2 taper on ``(1, 2)``, 0 from 2 on."""
    rho = np.asarray(rho, dtype=float)
    taper = np.cos(0.5 * np.pi * np.clip(rho - 1.0, 0.0, 1.0)) ** 2
    return np.where(rho <= 1.0, 1.0, np.where(rho >= 2.0, 0.0, taper))


def projection_symbol(grid: SpectralGrid, N: float) -> np.ndarray:
    if not N > 0:
        raise ValueError(f"truncation frequency must be positive, got {N!r}")
    return smooth_cutoff(grid.xi_abs / N)


def project_PN(field: GridField, N: float) -> GridField:
    """Smooth frequency projection onto ``|xi| <~ N``."""
    sym = projection_symbol(field.grid, N)
    return GridField(field.grid, field.grid.apply_multiplier(field.values, sym))


def _lebesgue(values: np.ndarray, r: float, cell_volume: float, axes) -> np.ndarray:
    a = np.abs(values)
    if math.isinf(r):
        return np.max(a, axis=axes)
    if r == 2:
        return np.sqrt(np.sum(a.real**2, axis=axes) * cell_volume)
    return (np.sum(a**r, axis=axes) * cell_volume) ** (1.0 / r)


def lebesgue_norm(field: GridField, r: float) -> float:
    """Discrete ``L^r`` norm by rectangle-rule quadrature (max for ``r = inf``)."""
    if not r >= 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {r!r}")
    g = field.grid
    return float(_lebesgue(field.values, float(r), g.cell_volume, g.axes))


def sobolev_weight(grid: SpectralGrid, s: float, homogeneous: bool = False) -> np.ndarray:
    """Squared Sobolev symbol: ``<xi>^{2s}`` or ``|xi|^{2s}``.

    For the homogeneous symbol the zero mode has weight 1 when ``s == 0``
    (``H-dot^0 = L^2``) and weight 0 otherwise.
    """
    if not homogeneous:
        return (1.0 + grid.xi_squared) ** s
    xi2 = grid.xi_squared
    w = np.zeros_like(xi2)
    nz = xi2 > 0
    w[nz] = xi2[nz] ** s
    if s == 0:
        w[~nz] = 1.0
    return w


def sobolev_norm(field: GridField, s: float, homogeneous: bool = False) -> float:
    """``H^s`` (or ``H-dot^s``) norm from Fourier coefficients."""
    c = field.coefficients()
    if homogeneous and s < 0:
        zero = (0,) * field.grid.dimension
        if abs(c[zero]) > 1e-12 * max(1.0, float(np.max(np.abs(c)))):
            raise ValueError("homogeneous Sobolev norm with s < 0 needs a mean-zero field")
    w = sobolev_weight(field.grid, s, homogeneous)
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2)))


def sobolev_lebesgue_norm(
    grid: SpectralGrid, values: np.ndarray, r: float, derivatives: float = 0
) -> np.ndarray:
    """``W^{s,r}`` norm of (batched) physical samples.

    ``derivatives == 0`` is plain ``L^r``; ``derivatives == 1`` is
    ``||u||_{L^r} + || |grad u| ||_{L^r}``; any other order uses the Bessel
    potential ``||<grad>^s u||_{L^r}``.
    """
    if derivatives == 0:
        return _lebesgue(values, r, grid.cell_volume, grid.axes)
    if derivatives == 1:
        grad = grid.gradient(values)
        gmod = np.sqrt(np.sum(np.abs(grad) ** 2, axis=-grid.dimension - 1))
        return _lebesgue(values, r, grid.cell_volume, grid.axes) + _lebesgue(
            gmod, r, grid.cell_volume, grid.axes
        )
    bessel = grid.apply_multiplier(values, grid.japanese() ** derivatives)
    return _lebesgue(bessel, r, grid.cell_volume, grid.axes)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    if times.size > 1:
        h = np.diff(times)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    return w


def time_norm(times: np.ndarray, spatial: np.ndarray, q: float) -> np.ndarray:
    """``L^q`` in time (trapezoid) of per-snapshot spatial norms along axis 0."""
    spatial = np.asarray(spatial, dtype=float)
    if math.isinf(q):
        return np.max(spatial, axis=0)
    w = trapezoid_weights(times).reshape((-1,) + (1,) * (spatial.ndim - 1))
    return np.sum(w * spatial**q, axis=0) ** (1.0 / q)


def space_time_norm(
    grid: SpectralGrid,
    times: np.ndarray,
    values: np.ndarray,
    q: float,
    r: float,
    derivatives: float = 0,
) -> float:
    """``L^q_t W^{s,r}_x`` norm of a time series with snapshots along axis 0."""
    spatial = sobolev_lebesgue_norm(grid, values, r, derivatives)
    return float(time_norm(times, spatial, q))


@dataclass(frozen=True)
class StrichartzPair:
    """Exponent pair ``(q, r)``; ``math.inf`` stands for the endpoint."""

    q: float | Fraction
    r: float | Fraction

    def as_floats(self) -> tuple[float, float]:
        return float(self.q), float(self.r)


def mass_critical_pair(d: int) -> StrichartzPair:
    e = Fraction(2 * (d + 2), d)
    return StrichartzPair(e, e)


def energy_critical_pair(d: int) -> StrichartzPair:
    """``(q_d, r_d) = (2d/(d-2), 2d^2/(d^2-2d+4))`` for ``d >= 3``."""
    if d < 3:
        raise ValueError("the energy-critical pair needs d >= 3")
    return StrichartzPair(Fraction(2 * d, d - 2), Fraction(2 * d * d, d * d - 2 * d + 4))


@dataclass(frozen=True, eq=False)
class SpaceTimeSample:
    """Snapshots of a field at increasing times, tagged with the norm to take."""

    grid: SpectralGrid
    times: np.ndarray
    values: np.ndarray
    pair: StrichartzPair
    derivatives: float = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("a space-time sample needs at least one snapshot time")
        if values.shape != times.shape + self.grid.shape:
            raise ValueError("snapshots and times must have matching lengths")
        if np.any(np.diff(times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_fields(cls, times: Sequence[float], fields: Sequence[GridField], pair, derivatives=0):
        if not fields:
            raise ValueError("empty space-time sample")
        grid = fields[0].grid
        return cls(grid, np.asarray(times), np.stack([f.values for f in fields]), pair, derivatives)


def strichartz_norm(sample: SpaceTimeSample) -> float:
    """Mixed ``L^q_t L^r_x`` norm with trapezoid quadrature in time."""
    q, r = sample.pair.as_floats()
    return space_time_norm(sample.grid, sample.times, sample.values, q, r, sample.derivatives)


def _as_fraction(x) -> Fraction | None:
    if x is None:
        return None
    if isinstance(x, float) and math.isinf(x):
        return None
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return None if x.strip().lower() in ("inf", "infinity") else Fraction(x)
    return Fraction(float(x)).limit_denominator(10**6)


def is_admissible(pair: StrichartzPair, d: int) -> bool:
    """Exact-rational test of ``2/q + d/r = d/2`` with ``(q, r, d) != (2, inf, 2)``.

    Floats are converted with a bounded denominator, so ``18/7`` may be given
    as ``Fraction(18, 7)``, the string ``"18/7"`` or a float.
    """
    q, r = _as_fraction(pair.q), _as_fraction(pair.r)
    for e in (q, r):
        if e is not None and e < 2:
            return False
    if q == 2 and r is None and d == 2:
        return False
    lhs = (Fraction(0) if q is None else 2 / q) + (Fraction(0) if r is None else d / r)
    return lhs == Fraction(d, 2)


def scaling_critical_index(d: int, p: float) -> float:
    """``s_crit = d/2 - 2/(p-1)``."""
    if not p > 1:
        raise ValueError(f"nonlinearity power must exceed 1, got {p!r}")
    return d / 2 - 2 / (p - 1)


def rescale_field(field: GridField, lam: float, p: float) -> GridField:
    """Spatial part of the dilation ``lam^{-2/(p-1)} u(lam^{-1} x)``.

    The samples are kept and the domain is stretched to ``lam * L``; ``lam`` must
    be an integer or the reciprocal of one.
    """
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    n = lam if lam >= 1 else 1.0 / lam
    if abs(n - round(n)) > 1e-12 * n:
        raise ValueError(f"dilation factor {lam!r} is not grid-representable")
    g = field.grid
    new_grid = SpectralGrid(g.dimension, g.modes, g.length * lam, g.workers)
    return GridField(new_grid, field.values * lam ** (-2.0 / (p - 1)))
