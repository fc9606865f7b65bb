"""Cylindrical Wiener noise, diagonal Hilbert-Schmidt operators, stochastic convolution.

The orthonormal basis is the volume-normalised Fourier basis, so the operator
``phi`` acts as a multiplier with weights ``sigma_xi`` and the convolution

    Psi(t) = -i sum_xi int_0^t S(t - t') sigma_xi e_xi dbeta_xi(t')

is advanced exactly in law, one Fourier mode at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .propagator import plan_for
from .spectral import (
    GridField,
    SpectralGrid,
    projection_symbol,
    sobolev_lebesgue_norm,
    sobolev_weight,
    time_norm,
)

__all__ = [
    "MultiplierOperator",
    "NoiseStream",
    "ConvolutionState",
    "ConvolutionPaths",
    "MomentEstimate",
    "hs_norm",
    "sample_increment",
    "advance_convolution",
    "simulate_convolution",
    "convolution_path_stats",
]

_U53 = 2.0**-53


@dataclass(frozen=True, eq=False)
class MultiplierOperator:
    """Diagonal operator ``phi e_xi = sigma_xi e_xi``."""

    grid: SpectralGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != self.grid.shape:
            raise ValueError("operator weights must match the grid shape")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("operator weights must be finite and nonnegative")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, grid: SpectralGrid) -> "MultiplierOperator":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def decay(
        cls, grid: SpectralGrid, amplitude: float, decay: float, zero_nyquist: bool = True
    ) -> "MultiplierOperator":
        """``sigma_xi = c <xi>^{-a}``; the Nyquist modes are left unforced by default."""
        w = amplitude * grid.japanese() ** (-decay)
        if zero_nyquist:
            w = np.where(grid.nyquist_mask(), 0.0, w)
        return cls(grid, w)

    @classmethod
    def explicit(
        cls, grid: SpectralGrid, table: Mapping[tuple[int, ...], float] | Iterable
    ) -> "MultiplierOperator":
        """Weights from ``{integer mode tuple: sigma}``; unlisted modes get 0."""
        items = table.items() if isinstance(table, Mapping) else table
        w = np.zeros(grid.shape)
        M = grid.modes
        for mode, sigma in items:
            mode = (mode,) if np.isscalar(mode) else tuple(mode)
            if len(mode) != grid.dimension:
                raise ValueError(f"mode {mode} has wrong dimension for {grid!r}")
            if any(not -M // 2 <= k < M // 2 for k in mode):
                raise ValueError(f"mode {mode} is outside the grid's frequency range")
            w[tuple(k % M for k in mode)] = sigma
        return cls(grid, w)

    def projected(self, N: float) -> "MultiplierOperator":
        """``P_N o phi``."""
        return MultiplierOperator(self.grid, self.weights * projection_symbol(self.grid, N))

    def scaled(self, c: float) -> "MultiplierOperator":
        return MultiplierOperator(self.grid, self.weights * c)

    def __add__(self, other: "MultiplierOperator") -> "MultiplierOperator":
        return MultiplierOperator(self.grid, self.weights + other.weights)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.weights)

    def pointwise_variance_density(self) -> float:
        """``sum_n |phi e_n(x)|^2``, constant in ``x`` for a diagonal operator."""
        return float(np.sum(self.weights**2)) / self.grid.volume


def hs_norm(op: MultiplierOperator, s: float = 0.0, homogeneous: bool = False) -> float:
    """``||phi||_{HS(L^2; H^s)}`` over the grid modes."""
    w = sobolev_weight(op.grid, s, homogeneous)
    return float(np.sqrt(np.sum(w * op.weights**2)))


class NoiseStream:
    """Counter-based source of complex Brownian increments for one trajectory.

    The Philox key is ``(seed, stream_id)``. Fine step ``n``, component ``c``
    (0 real, 1 imaginary) and flat mode ``m`` map to the 64-bit draw at
    position ``(2 n + c) * K + m`` with ``K`` the number of modes, so any step
    can be regenerated without replaying earlier ones. With ``aggregate > 1``
    each requested increment is the sum of that many consecutive fine
    increments, which couples runs at ``dt`` and ``dt / aggregate``.
    """

    def __init__(self, seed: int, stream_id: int, shape: Sequence[int], aggregate: int = 1, step: int = 0):
        if aggregate < 1:
            raise ValueError("aggregate must be >= 1")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id)
        self.shape = tuple(shape)
        self.aggregate = int(aggregate)
        self.modes = int(np.prod(self.shape))
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        self._position = 0
        self.step = 0
        if step:
            self.seek(step)

    def seek(self, step: int) -> None:
        """Position the stream at (coarse) increment index ``step``."""
        pos = 2 * self.modes * self.aggregate * int(step)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64))
        self._bitgen.advance(pos // 4)
        if pos % 4:
            self._bitgen.random_raw(pos % 4)
        self._position = pos
        self.step = int(step)

    def fork(self, step: int | None = None, aggregate: int | None = None) -> "NoiseStream":
        """Independent copy with the same key, positioned at ``step`` (default 0)."""
        agg = self.aggregate if aggregate is None else aggregate
        return NoiseStream(self.seed, self.stream_id, self.shape, agg, 0 if step is None else step)

    def _normals(self, count: int) -> np.ndarray:
        raw = self._bitgen.random_raw(count)
        self._position += count
        return ndtri(((raw >> np.uint64(11)).astype(float) + 0.5) * _U53)

    def standard_block(self, n_steps: int) -> np.ndarray:
        """``n_steps`` unit-variance complex increments (per component), summed over fine steps."""
        K, a = self.modes, self.aggregate
        g = self._normals(2 * K * a * n_steps).reshape(n_steps, a, 2, K)
        g = g.sum(axis=1)
        self.step += n_steps
        return (g[:, 0] + 1j * g[:, 1]).reshape((n_steps,) + self.shape)

    def increments(self, n_steps: int, delta: float) -> np.ndarray:
        """Brownian increments over ``n_steps`` consecutive steps of length ``delta``."""
        if not delta > 0:
            raise ValueError("increment length must be positive")
        return self.standard_block(n_steps) * np.sqrt(delta / self.aggregate)

    def __repr__(self):
        return (
            f"NoiseStream(seed={self.seed}, stream_id={self.stream_id}, "
            f"step={self.step}, aggregate={self.aggregate})"
        )


def sample_increment(stream: NoiseStream, delta: float) -> np.ndarray:
    """One increment per mode: ``(g1 + i g2) sqrt(delta)``."""
    return stream.increments(1, delta)[0]


@dataclass(frozen=True, eq=False)
class ConvolutionState:
    """``Psi(t)`` together with the noise source and operator driving it."""

    t: float
    field: GridField
    stream: NoiseStream
    operator: MultiplierOperator

    @classmethod
    def start(cls, operator: MultiplierOperator, stream: NoiseStream) -> "ConvolutionState":
        return cls(0.0, GridField.zeros(operator.grid), stream, operator)


def convolution_kick(coeffs: np.ndarray, sigma: np.ndarray, dW: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """``S(delta)(Psi - i sigma dW)`` in coefficient space."""
    return phase * (coeffs - 1j * sigma * dW)


def advance_convolution(state: ConvolutionState, delta: float) -> ConvolutionState:
    """Exact-in-law update ``Psi(t + delta) = S(delta)(Psi(t) - i phi dW)``."""
    if not delta > 0:
        raise ValueError("time step must be positive")
    grid = state.operator.grid
    dW = sample_increment(state.stream, delta)
    c = convolution_kick(
        grid.to_coefficients(state.field.values),
        state.operator.weights,
        dW,
        plan_for(grid).phase(delta),
    )
    return replace(state, t=state.t + delta, field=GridField.from_coefficients(grid, c))


@dataclass
class ConvolutionPaths:
    """Batch of sampled convolution paths: ``values[path, time, *grid]``."""

    grid: SpectralGrid
    times: np.ndarray
    values: np.ndarray
    operator: MultiplierOperator
    seed: int
    stream_ids: np.ndarray = field(repr=False)

    def __len__(self):
        return self.values.shape[0]


def simulate_convolution(
    operator: MultiplierOperator,
    seed: int,
    n_paths: int,
    dt: float,
    n_steps: int,
    stride: int = 1,
    first_stream: int = 0,
    aggregate: int = 1,
) -> ConvolutionPaths:
    """Sample ``n_paths`` independent paths on ``[0, n_steps * dt]``, kept every ``stride`` steps."""
    grid = operator.grid
    phase = plan_for(grid).phase(dt)
    ids = np.arange(first_stream, first_stream + n_paths)
    streams = [NoiseStream(seed, int(i), grid.shape, aggregate) for i in ids]
    keep = list(range(0, n_steps + 1, stride))
    if keep[-1] != n_steps:
        keep.append(n_steps)
    out = np.zeros((n_paths, len(keep)) + grid.shape, dtype=complex)
    c = np.zeros((n_paths,) + grid.shape, dtype=complex)
    slot = 1
    block = max(1, min(n_steps, (1 << 22) // max(1, grid.size * aggregate)))
    done = 0
    while done < n_steps:
        nb = min(block, n_steps - done)
        dW = np.stack([s.increments(nb, dt) for s in streams], axis=1)
        for j in range(nb):
            c = convolution_kick(c, operator.weights, dW[j], phase)
            step = done + j + 1
            if slot < len(keep) and keep[slot] == step:
                out[:, slot] = grid.from_coefficients(c)
                slot += 1
        done += nb
    return ConvolutionPaths(grid, np.asarray(keep) * dt, out, operator, seed, ids)


@dataclass
class MomentEstimate:
    """Monte Carlo moment with its standard error and the HS-normalised ratio."""

    mean: float
    se: float
    hs_reference: float

    @property
    def ratio(self) -> float:
        return self.mean / self.hs_reference if self.hs_reference > 0 else float("nan")


def convolution_path_stats(
    paths: ConvolutionPaths, s: float, q: float, r: float, p: float = 1.0
) -> dict[str, MomentEstimate]:
    """Estimates of ``E sup_t ||Psi||_{H^s}^p`` and ``E ||Psi||_{L^q_t W^{s,r}}^p``."""
    n = len(paths)
    if n == 0:
        raise ValueError("empty ensemble")
    grid = paths.grid
    d = grid.dimension
    if d >= 3 and r > 2 * d / (d - 2):
        raise ValueError("r must not exceed 2d/(d-2) when d >= 3")
    w = sobolev_weight(grid, s)
    coeffs = grid.to_coefficients(paths.values)
    hs = np.sqrt(np.sum(w * np.abs(coeffs) ** 2, axis=grid.axes))  # (path, time)
    sup = np.max(hs, axis=1) ** p
    spatial = sobolev_lebesgue_norm(grid, paths.values, r, s)  # (path, time)
    st = time_norm(paths.times, spatial.T, q) ** p
    ref = hs_norm(paths.operator, s) ** p

    def est(x):
        se = float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return MomentEstimate(float(np.mean(x)), se, ref)

    return {"sup_sobolev": est(sup), "strichartz": est(st)}
