"""Duhamel fixed-point map, Picard iterates and local-theory threshold checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    NonlinearitySpec,
    SampledForcing,
    SolverConfig,
    _nonlinearity,
    solve_perturbed_v,
)
from .propagator import duhamel_series, free_evolution
from .spectral import (
    GridField,
    SpectralGrid,
    StrichartzPair,
    energy_critical_pair,
    mass_critical_pair,
    space_time_norm,
)

__all__ = [
    "ThresholdConfig",
    "IterateTrace",
    "LWPReport",
    "contraction_norm",
    "forcing_series",
    "gamma_map",
    "picard_iterates",
    "picard_fixed_point",
    "lwp_threshold_check",
    "estimate_eta0",
]


@dataclass(frozen=True)
class ThresholdConfig:
    eta: float
    eta0: float
    pair: StrichartzPair
    interval: tuple[float, float]
    derivatives: int = 0

    def __post_init__(self):
        if not 0 < self.eta <= self.eta0:
            raise ValueError("need 0 < eta <= eta0")


def contraction_norm(spec: NonlinearitySpec, weak: bool = False) -> tuple[StrichartzPair, int]:
    """Space for the smallness/contraction argument.

    Mass-critical (and explicit powers): ``L^{2(d+2)/d}_{t,x}``. Energy-critical:
    ``L^{q_d} W^{1, r_d}``, or the derivative-free ``L^{q_d} L^{r_d}`` metric
    when ``weak`` is set.
    """
    if spec.criticality == 1:
        return energy_critical_pair(spec.dimension), (0 if weak else 1)
    return mass_critical_pair(spec.dimension), 0


def _norm(grid, times, values, spec, weak=False) -> float:
    pair, deriv = contraction_norm(spec, weak)
    q, r = pair.as_floats()
    return space_time_norm(grid, times, values, q, r, deriv)


def forcing_series(f, grid: SpectralGrid, times: np.ndarray) -> np.ndarray:
    """Sample ``f`` (None, callable or array) on ``times``."""
    times = np.asarray(times, dtype=float)
    if f is None:
        return np.zeros((times.size,) + grid.shape, dtype=complex)
    if callable(f):
        return np.stack([np.broadcast_to(np.asarray(f(t), dtype=complex), grid.shape) for t in times])
    f = np.asarray(f, dtype=complex)
    if f.shape != (times.size,) + grid.shape:
        raise ValueError("forcing samples must match the time nodes")
    return f


def gamma_map(
    v: np.ndarray,
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    times: np.ndarray,
) -> np.ndarray:
    """``Gamma v(t) = S(t - t0) u0 - i int_{t0}^t S(t - t') N(v + f)(t') dt'`` on the nodes."""
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    fs = forcing_series(f, grid, times)
    out = free_evolution(grid, u0.values, times, times[0])
    if spec.enabled:
        out = out + duhamel_series(grid, times, _nonlinearity(v + fs, spec.p))
    return out


@dataclass
class IterateTrace:
    """Picard iterates ``P_1, P_2, ...`` (kept at ``stride``) and their successive distances."""

    times: np.ndarray
    iterates: list[np.ndarray]
    distances: np.ndarray
    stride: int = 1
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ratios(self) -> np.ndarray:
        d = self.distances
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]

    def consecutive_contractions(self, cap: float = 0.5, floor: float = 0.0) -> int:
        """Longest run of ratios ``<= cap`` among distances above ``floor``."""
        best = run = 0
        d = self.distances
        for j, r in enumerate(self.ratios):
            if d[j + 1] <= floor:
                break
            run = run + 1 if r <= cap else 0
            best = max(best, run)
        return best


def picard_iterates(
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    times: np.ndarray,
    J: int,
    stride: int = 1,
    weak: bool = False,
) -> IterateTrace:
    """``P_1 = S(t - t0) u0``, ``P_{j+1} = Gamma P_j`` for ``j < J``.

    Distances ``||P_{j+1} - P_j||`` are taken in the contraction norm on the
    stored (every ``stride``-th) nodes.
    """
    if J < 2:
        raise ValueError("need at least two iterates")
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    fs = forcing_series(f, grid, times)
    idx = np.arange(0, times.size, stride)
    if idx[-1] != times.size - 1:
        idx = np.append(idx, times.size - 1)
    P = free_evolution(grid, u0.values, times, times[0])
    kept, dist, norms = [P[idx]], [], [_norm(grid, times[idx], P[idx], spec, weak)]
    for _ in range(J - 1):
        P_next = gamma_map(P, u0, fs, spec, times)
        dist.append(_norm(grid, times[idx], P_next[idx] - P[idx], spec, weak))
        P = P_next
        kept.append(P[idx])
        norms.append(_norm(grid, times[idx], P[idx], spec, weak))
    return IterateTrace(times[idx], kept, np.asarray(dist), stride, np.asarray(norms))


def picard_fixed_point(
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    times: np.ndarray,
    tol: float,
    max_iter: int = 200,
    weak: bool = False,
) -> tuple[np.ndarray, IterateTrace]:
    """Iterate ``Gamma`` until successive distances drop below ``tol``.

    Raises ``RuntimeError`` if that does not happen within ``max_iter`` steps.
    """
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    fs = forcing_series(f, grid, times)
    P = free_evolution(grid, u0.values, times, times[0])
    dist = []
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            P_next = gamma_map(P, u0, fs, spec, times)
            dist.append(_norm(grid, times, P_next - P, spec, weak))
        P = P_next
        if dist[-1] < tol:
            return P, IterateTrace(times, [P], np.asarray(dist))
        if not np.isfinite(dist[-1]):
            break
    raise RuntimeError(f"Picard iteration did not reach tolerance {tol} (last distance {dist[-1]:.3g})")


@dataclass
class LWPReport:
    lhs: float
    free_norm: float
    forcing_norm: float
    eta: float
    passes: bool
    solution_norm: float | None
    bound: float
    bound_holds: bool | None


def _uniform_step(times: np.ndarray) -> float:
    h = np.diff(times)
    if h.size == 0 or np.ptp(h) > 1e-9 * h.mean():
        raise ValueError("the solver check needs uniformly spaced nodes")
    return float(h.mean())


def lwp_threshold_check(
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    times: np.ndarray,
    eta: float,
    tolerance: float = 0.05,
    weak: bool = False,
) -> LWPReport:
    """Local-theory smallness hypothesis and, when it holds, the ``2 eta`` conclusion.

    ``lhs = ||S(t - t0) u0|| + ||f||`` on the interval spanned by ``times``. If
    ``lhs <= eta`` the perturbed equation is solved on the same nodes and its
    norm is compared with ``2 eta (1 + tolerance)``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    fs = forcing_series(f, grid, times)
    free = free_evolution(grid, u0.values, times, times[0])
    free_norm = _norm(grid, times, free, spec, weak)
    forcing_norm = _norm(grid, times, fs, spec, weak)
    lhs = free_norm + forcing_norm
    passes = lhs <= eta
    sol_norm = holds = None
    if passes:
        dt = _uniform_step(times)
        cfg = SolverConfig(dt, times[-1] - times[0])
        forcing = SampledForcing(times - times[0], fs)
        rec = solve_perturbed_v(u0, forcing, spec, cfg)
        sol_norm = _norm(grid, rec.times, rec.v, spec, weak)
        holds = bool(sol_norm <= 2 * eta * (1 + tolerance))
    return LWPReport(lhs, free_norm, forcing_norm, eta, passes, sol_norm, 2 * eta, holds)


def estimate_eta0(
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    times: np.ndarray,
    scales: Sequence[float],
    J: int = 8,
    cap: float = 0.5,
    weak: bool = False,
) -> tuple[float, list[dict]]:
    """Empirical smallness threshold over the family ``(s u0, s f)``.

    Returns the largest hypothesis value ``lhs(s)`` such that every member with
    ``s' <= s`` contracts with all measured ratios ``<= cap``, plus the scan
    table. ``0.0`` means no member of the family contracted.
    """
    grid = u0.grid
    times = np.asarray(times, dtype=float)
    fs = forcing_series(f, grid, times)
    free = free_evolution(grid, u0.values, times, times[0])
    free_norm = _norm(grid, times, free, spec, weak)
    forcing_norm = _norm(grid, times, fs, spec, weak)
    table = []
    eta0 = 0.0
    ok = True
    for s in sorted(scales):
        with np.errstate(over="ignore", invalid="ignore"):
            trace = picard_iterates(u0 * s, fs * s, spec, times, J, weak=weak)
        d = trace.distances
        live = d > 1e-13 * max(1e-300, float(np.max(trace.norms)))
        ratios = trace.ratios[live[1:]] if live.size > 1 else np.zeros(0)
        worst = float(np.max(ratios)) if ratios.size else 0.0
        if not np.all(np.isfinite(d)) or np.isnan(worst):
            worst = np.inf
        lhs = s * (free_norm + forcing_norm)
        table.append({"scale": s, "lhs": lhs, "max_ratio": worst})
        ok = ok and worst <= cap
        if ok:
            eta0 = lhs
    return eta0, table
