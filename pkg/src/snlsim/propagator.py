"""Linear Schrödinger group ``S(t) = exp(i t Laplacian)`` and Duhamel integrals."""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

from .spectral import GridField, SpectralGrid

__all__ = ["PropagatorPlan", "apply_S", "duhamel_integral", "duhamel_series", "free_evolution"]


class PropagatorPlan:
    """Phase tables ``exp(-i t |xi|^2)`` for one grid, cached by ``t``."""

    def __init__(self, grid: SpectralGrid, max_cached: int = 64):
        self.grid = grid
        self._cache: dict[float, np.ndarray] = {}
        self._lock = threading.Lock()
        self._max = max_cached

    def phase(self, t: float) -> np.ndarray:
        t = float(t)
        table = self._cache.get(t)
        if table is None:
            table = np.exp(-1j * t * self.grid.xi_squared)
            table.setflags(write=False)
            with self._lock:
                if len(self._cache) >= self._max:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[t] = table
        return table

    def apply_coefficients(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        return coeffs * self.phase(t)

    def apply(self, values: np.ndarray, t: float) -> np.ndarray:
        """``S(t)`` on (batched) physical samples."""
        if t == 0:
            return np.array(values, dtype=complex)
        g = self.grid
        return g.from_coefficients(g.to_coefficients(values) * self.phase(t))


_plans: dict[int, PropagatorPlan] = {}
_plans_lock = threading.Lock()


def plan_for(grid: SpectralGrid) -> PropagatorPlan:
    key = id(grid)
    plan = _plans.get(key)
    if plan is None or plan.grid is not grid:
        plan = PropagatorPlan(grid)
        with _plans_lock:
            if len(_plans) > 32:
                _plans.clear()
            _plans[key] = plan
    return plan


def apply_S(field: GridField, t: float) -> GridField:
    """Exact linear flow on the grid."""
    return GridField(field.grid, plan_for(field.grid).apply(field.values, t))


def free_evolution(grid: SpectralGrid, u0: np.ndarray, times: np.ndarray, t0: float = 0.0) -> np.ndarray:
    """``S(t - t0) u0`` at each of ``times``, stacked along axis 0."""
    plan = plan_for(grid)
    c0 = grid.to_coefficients(u0)
    out = np.empty((len(times),) + np.shape(u0), dtype=complex)
    for n, t in enumerate(times):
        out[n] = grid.from_coefficients(c0 * plan.phase(t - t0))
    return out


def duhamel_series(grid: SpectralGrid, times: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Cumulative ``-i int_{t_0}^{t_n} S(t_n - t') F(t') dt'`` at every node.

    ``F`` holds the source at ``times`` along axis 0. Trapezoid rule in ``t'``
    with ``S`` applied exactly, via the recursion
    ``D_n = S(h) D_{n-1} - i h/2 (S(h) F_{n-1} + F_n)``.
    """
    times = np.asarray(times, dtype=float)
    plan = plan_for(grid)
    Fc = grid.to_coefficients(F)
    Dc = np.zeros_like(Fc)
    for n in range(1, len(times)):
        h = times[n] - times[n - 1]
        ph = plan.phase(h)
        Dc[n] = ph * (Dc[n - 1] - 0.5j * h * Fc[n - 1]) - 0.5j * h * Fc[n]
    return grid.from_coefficients(Dc)


def duhamel_integral(
    F: Callable[[float], np.ndarray | GridField],
    t: float,
    steps: int,
    grid: SpectralGrid | None = None,
) -> GridField:
    """``-i int_0^t S(t - t') F(t') dt'`` by the trapezoid rule on ``steps`` panels."""
    if steps < 1:
        raise ValueError("need at least one quadrature panel")
    nodes = np.linspace(0.0, t, steps + 1)
    samples = []
    for s in nodes:
        val = F(s)
        if isinstance(val, GridField):
            grid = val.grid
            val = val.values
        samples.append(np.asarray(val, dtype=complex))
    if grid is None:
        raise ValueError("grid must be given when the source returns raw arrays")
    plan = plan_for(grid)
    w = np.full(nodes.size, t / steps)
    w[0] = w[-1] = 0.5 * t / steps
    acc = np.zeros(grid.shape, dtype=complex)
    for s, wj, val in zip(nodes, w, samples):
        acc += wj * grid.to_coefficients(val) * plan.phase(t - s)
    return GridField(grid, -1j * grid.from_coefficients(acc))
