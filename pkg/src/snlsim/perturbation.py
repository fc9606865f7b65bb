"""Smallness partitions, error-term norms and the interval-by-interval existence ledger."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dynamics import (
    NonlinearitySpec,
    SolverConfig,
    _nonlinearity,
    solve_deterministic,
    solve_perturbed_v,
)
from .io import write_csv
from .picard import contraction_norm, forcing_series
from .propagator import free_evolution
from .spectral import (
    GridField,
    SpectralGrid,
    StrichartzPair,
    mass_critical_pair,
    sobolev_lebesgue_norm,
    sobolev_weight,
    time_norm,
)

__all__ = [
    "IntervalPartition",
    "HolderBound",
    "HolderReport",
    "ClosenessLedger",
    "CjResult",
    "AssemblyReport",
    "dual_pair",
    "partition_by_smallness",
    "linear_smallness_check",
    "error_term",
    "dual_norm_of_error",
    "compare_to_reference",
    "cj_recursion",
    "holder_smallness_check",
    "long_time_assembly",
    "write_ledger_csv",
]


def _cumulative(times: np.ndarray, spatial: np.ndarray, q: float) -> np.ndarray:
    """Running trapezoid integral of ``spatial**q``; interval norms are differences."""
    s = np.asarray(spatial, dtype=float) ** q
    out = np.zeros(len(times))
    out[1:] = np.cumsum(0.5 * np.diff(times) * (s[1:] + s[:-1]))
    return out


def _segment_norm(cum: np.ndarray, a: int, b: int, q: float) -> float:
    return max(cum[b] - cum[a], 0.0) ** (1.0 / q)


def _series(obj, attr: str = "u") -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obj, tuple):
        return np.asarray(obj[0], dtype=float), np.asarray(obj[1])
    return np.asarray(obj.times, dtype=float), getattr(obj, attr)


def dual_pair(pair: StrichartzPair) -> StrichartzPair:
    """Hölder conjugates ``(q', r')``."""
    conj = lambda e: Fraction(e) / (Fraction(e) - 1) if not isinstance(e, float) else e / (e - 1)
    return StrichartzPair(conj(pair.q), conj(pair.r))


@dataclass
class IntervalPartition:
    """Breakpoints ``t_0 < ... < t_J`` (as node indices and times) with per-interval norms."""

    times: np.ndarray
    indices: np.ndarray
    norms: np.ndarray
    eta: float
    pair: StrichartzPair
    derivatives: int = 0

    @property
    def breakpoints(self) -> np.ndarray:
        return self.times[self.indices]

    @property
    def J(self) -> int:
        return len(self.indices) - 1

    def intervals(self):
        for j in range(self.J):
            yield int(self.indices[j]), int(self.indices[j + 1])


def partition_by_smallness(
    w,
    eta: float,
    pair: StrichartzPair | None = None,
    derivatives: int = 0,
    grid: SpectralGrid | None = None,
) -> IntervalPartition:
    """Greedy left-to-right partition with every interval norm ``<= eta``.

    ``w`` is a trajectory record (or ``(times, values)`` with ``grid``). Each
    breakpoint is the last snapshot keeping the running norm within ``eta``.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    times, values = _series(w)
    grid = grid or w.grid
    if pair is None:
        pair = mass_critical_pair(grid.dimension)
    if not np.all(np.isfinite(values)):
        raise ValueError("reference solution is not finite on the interval")
    q, r = pair.as_floats()
    cum = _cumulative(times, sobolev_lebesgue_norm(grid, values, r, derivatives), q)
    return _greedy(times, [(cum, q, eta)], pair, derivatives)


def _greedy(times, budgets, pair, derivatives) -> IntervalPartition:
    """Breakpoints for several simultaneous budgets ``(cum, q, bound)``; the first is reported."""
    n = len(times)
    idx, norms = [0], []
    a = 0
    slack = 1 + 1e-12
    while a < n - 1:
        limit = n - 1
        for cum, q, bound in budgets:
            target = cum[a] + bound**q * slack
            limit = min(limit, int(np.searchsorted(cum, target, side="right")) - 1)
        if limit <= a:
            raise ValueError("eta too small for time resolution")
        cum0, q0, _ = budgets[0]
        norms.append(_segment_norm(cum0, a, limit, q0))
        idx.append(limit)
        a = limit
    return IntervalPartition(times, np.asarray(idx), np.asarray(norms), budgets[0][2], pair, derivatives)


def linear_smallness_check(
    w, partition: IntervalPartition, eta: float | None = None, tolerance: float = 0.05, grid=None
) -> list[dict]:
    """Norm of ``S(t - t_j) w(t_j)`` on each interval against ``2 eta (1 + tolerance)``."""
    times, values = _series(w)
    grid = grid or w.grid
    eta = partition.eta if eta is None else eta
    q, r = partition.pair.as_floats()
    out = []
    for j, (a, b) in enumerate(partition.intervals()):
        lin = free_evolution(grid, values[a], times[a : b + 1], times[a])
        nrm = float(time_norm(times[a : b + 1], sobolev_lebesgue_norm(grid, lin, r, partition.derivatives), q))
        out.append({"interval": j, "t_start": times[a], "t_end": times[b], "norm": nrm,
                    "passes": nrm <= 2 * eta * (1 + tolerance)})
    return out


def error_term(v, f, spec: NonlinearitySpec, grid: SpectralGrid | None = None) -> np.ndarray:
    """``e = N(v + f) - N(v)`` at the nodes of ``v``."""
    if isinstance(v, tuple) or getattr(v, "v", None) is None:
        times, values = _series(v)
    else:
        times, values = _series(v, "v")
    grid = grid or v.grid
    fs = forcing_series(f, grid, times)
    if not spec.enabled:
        return np.zeros_like(values)
    return _nonlinearity(values + fs, spec.p) - _nonlinearity(values, spec.p)


def _dual(spec: NonlinearitySpec) -> tuple[StrichartzPair, int]:
    pair, deriv = contraction_norm(spec)
    return dual_pair(pair), deriv


def dual_norm_of_error(
    e: np.ndarray,
    times: np.ndarray,
    grid: SpectralGrid,
    spec: NonlinearitySpec,
    interval: tuple[float, float] | None = None,
) -> float:
    """``L^{2(d+2)/(d+4)}_{t,x}`` (mass-critical) or ``L^{q_d'} W^{1, r_d'}`` (energy-critical)."""
    times = np.asarray(times, dtype=float)
    if interval is not None:
        tol = 1e-9 * max(1.0, abs(interval[1]))
        keep = (times >= interval[0] - tol) & (times <= interval[1] + tol)
        times, e = times[keep], e[keep]
    pair, deriv = _dual(spec)
    q, r = pair.as_floats()
    return float(time_norm(times, sobolev_lebesgue_norm(grid, e, r, deriv), q))


def _sup_distance(grid, diff, k):
    s = 1.0 if k == 1 else 0.0
    c = grid.to_coefficients(diff)
    return float(np.max(np.sqrt(np.sum(sobolev_weight(grid, s) * np.abs(c) ** 2, axis=grid.axes))))


def compare_to_reference(v, w, spec: NonlinearitySpec, interval: tuple[float, float] | None = None, grid=None) -> dict:
    """``sup_t ||v - w||`` in ``L^2`` (or ``H^1``) and the space-time distance."""
    tv, xv = _series(v)
    tw, xw = _series(w)
    grid = grid or v.grid
    if tv.shape != tw.shape or np.max(np.abs(tv - tw), initial=0.0) > 1e-9 * max(1.0, float(np.max(np.abs(tv)))):
        raise ValueError("trajectories are sampled on different time nodes")
    if interval is not None:
        tol = 1e-9 * max(1.0, abs(interval[1]))
        keep = (tv >= interval[0] - tol) & (tv <= interval[1] + tol)
        tv, xv, xw = tv[keep], xv[keep], xw[keep]
    diff = xv - xw
    pair, deriv = contraction_norm(spec)
    q, r = pair.as_floats()
    k = 1 if spec.criticality == 1 else 0
    return {
        "sup": _sup_distance(grid, diff, k),
        "spacetime": float(time_norm(tv, sobolev_lebesgue_norm(grid, diff, r, deriv), q)),
    }


@dataclass
class CjResult:
    """``C_j = C_1 (C_{j-1} + 1)`` and the smallness requirements it induces on ``eps``."""

    values: list
    eps_bound_eta: list | None = None
    eps_bound_eps0: list | None = None

    @property
    def eps_max(self):
        bounds = [b for group in (self.eps_bound_eta, self.eps_bound_eps0) if group for b in group]
        return min(bounds) if bounds else None


def cj_recursion(C1, J: int, C0=None, eta=None, eps0=None) -> CjResult:
    """Closeness constants ``C_1, ..., C_J``.

    Exact when ``C1`` is an ``int`` or ``Fraction``. With ``C0`` and ``eta``
    the bounds ``eps <= eta / (C0 C_j)`` are returned; with ``eps0`` the bounds
    ``eps < eps0 / (C_j + 1)``.
    """
    if not C1 > 0:
        raise ValueError("C1 must be positive")
    if J < 1:
        raise ValueError("J must be >= 1")
    vals = [C1]
    for _ in range(J - 1):
        vals.append(C1 * (vals[-1] + 1))
    by_eta = [eta / (C0 * c) for c in vals] if C0 is not None and eta is not None else None
    by_eps0 = [eps0 / (c + 1) for c in vals] if eps0 is not None else None
    return CjResult(vals, by_eta, by_eps0)


@dataclass
class ClosenessLedger:
    R: float
    eps: float
    C: list
    distances: list


@dataclass(frozen=True)
class HolderBound:
    C: float
    theta: float
    q: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("Hölder exponent must be positive")


@dataclass
class HolderReport:
    bounds: list[HolderBound]
    worst_ratio: float
    worst_per_path: np.ndarray
    tolerance: float

    @property
    def passes(self) -> bool:
        return bool(self.worst_ratio <= 1 + self.tolerance)


def holder_smallness_check(
    paths: np.ndarray,
    times: np.ndarray,
    grid: SpectralGrid,
    q: float,
    pair: StrichartzPair | None = None,
    levels: int | None = None,
    tolerance: float = 0.05,
) -> HolderReport:
    """Check ``||f||_{L^{q_p}_t L^r_x(I)} <= C |I|^theta`` on dyadic ``I``.

    ``C = ||f||_{L^q_t L^r_x([0, T])}`` per path, ``theta = 1/q_p - 1/q``.
    Dyadic subintervals are node aligned, so ``len(times) - 1`` must be
    divisible by ``2**levels``.
    """
    pair = pair or mass_critical_pair(grid.dimension)
    qp, r = pair.as_floats()
    if not q > qp:
        raise ValueError("q must exceed the time exponent of the pair")
    theta = 1 / qp - 1 / q
    times = np.asarray(times, dtype=float)
    paths = np.asarray(paths)
    if paths.ndim == grid.dimension + 1:
        paths = paths[None]
    n_panels = times.size - 1
    max_level = (n_panels & -n_panels).bit_length() - 1
    levels = max_level if levels is None else levels
    if levels > max_level:
        raise ValueError("time nodes do not support that many dyadic levels")
    bounds, worst = [], []
    for path in paths:
        spatial = sobolev_lebesgue_norm(grid, path, r)
        C = float(time_norm(times, spatial, q))
        bounds.append(HolderBound(C, theta, q))
        cum = _cumulative(times, spatial, qp)
        ratio = 0.0
        for lev in range(levels + 1):
            step = n_panels >> lev
            for a in range(0, n_panels, step):
                b = a + step
                nrm = _segment_norm(cum, a, b, qp)
                ref = C * (times[b] - times[a]) ** theta
                if ref > 0:
                    ratio = max(ratio, nrm / ref)
                elif nrm > 0:
                    ratio = math.inf
        worst.append(ratio)
    worst = np.asarray(worst)
    return HolderReport(bounds, float(np.max(worst)), worst, tolerance)


LEDGER_FIELDS = (
    "interval",
    "t_j",
    "t_next",
    "w_norm",
    "linear_norm",
    "lwp_lhs",
    "v_norm",
    "error_dual_norm",
    "closeness_norm",
    "distance",
    "partition_ok",
    "linear_ok",
    "lwp_ok",
    "error_ok",
    "closeness_ok",
    "passes",
)


@dataclass
class AssemblyReport:
    rows: list[dict]
    final_time: float
    T: float
    reached: bool
    failure: str | None
    failed_interval: int | None
    closeness: ClosenessLedger | None = None
    windows: list[tuple[float, float]] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return self.reached and all(r["passes"] for r in self.rows)


def write_ledger_csv(rows: Sequence[dict], path: str | os.PathLike) -> None:
    """Atomic CSV write of the per-interval ledger."""
    write_csv(rows, LEDGER_FIELDS, path)


def long_time_assembly(
    u0: GridField,
    f,
    spec: NonlinearitySpec,
    T: float,
    eta: float,
    eps: float,
    dt: float,
    tolerance: float = 0.05,
    lwp_cap: float | None = None,
    ledger_path: str | os.PathLike | None = None,
) -> AssemblyReport:
    """Run the interval-by-interval existence argument as a computation.

    ``v`` solves ``i v_t + Lap v = N(v + f)`` on ``[0, T]``. Starting from
    ``t_start`` a window is chosen where ``||f|| <= eta`` and the dual norm of
    ``e = N(v + f) - N(v)`` is ``<= eps``. On it ``w`` solves the unforced
    equation from ``w(t_start) = v(t_start)`` and is partitioned into intervals
    with ``||w|| <= eta``. Each interval is checked for: the partition bound,
    ``||S(t - t_j) w(t_j)|| <= 2 eta``, the local hypothesis
    ``||S(t - t_j) v(t_j)|| + ||f|| <= lwp_cap`` (default ``4 eta``) with
    ``||v|| <= 2 lhs``, ``||e||' <= eps`` and
    ``||S(t - t_j)(v(t_j) - w(t_j))|| <= eta``. The first failing interval
    stops the run and is reported; nothing is raised.
    """
    grid = u0.grid
    k = 1 if spec.criticality == 1 else 0
    pair, deriv = contraction_norm(spec)
    q, r = pair.as_floats()
    dpair, dderiv = _dual(spec)
    dq, dr = dpair.as_floats()
    cap = 4 * eta if lwp_cap is None else lwp_cap
    loose = 1 + tolerance

    cfg = SolverConfig(dt, T)
    forcing = f if (f is None or callable(f)) else None
    if f is not None and forcing is None:
        raise TypeError("forcing must be a callable of t (e.g. SampledForcing)")
    vrec = solve_perturbed_v(u0, forcing, spec, cfg)
    times = vrec.times
    rows: list[dict] = []
    windows: list[tuple[float, float]] = []

    def report(final, failure=None, failed=None):
        R = float(np.nanmax(np.sqrt(vrec.mass)))
        dists = [row["distance"] for row in rows]
        c1 = max(1.0, max((dd / eps for dd in dists), default=1.0)) if eps > 0 else 1.0
        ledger = ClosenessLedger(R, eps, cj_recursion(c1, max(1, len(rows))).values, dists)
        rep = AssemblyReport(rows, final, T, failure is None, failure, failed, ledger, windows)
        if ledger_path is not None:
            write_ledger_csv(rows, ledger_path)
        return rep

    if vrec.diverged:
        return report(0.0, f"v diverged at t={vrec.diverged_time:.6g}", 0)

    vs = vrec.u
    fs = forcing_series(forcing, grid, times)
    e = error_term((times, vs), fs, spec, grid)
    f_cum = _cumulative(times, sobolev_lebesgue_norm(grid, fs, r, deriv), q)
    v_cum = _cumulative(times, sobolev_lebesgue_norm(grid, vs, r, deriv), q)
    e_cum = _cumulative(times, sobolev_lebesgue_norm(grid, e, dr, dderiv), dq)

    def st_norm(t, x):
        return float(time_norm(t, sobolev_lebesgue_norm(grid, x, r, deriv), q))

    n = len(times)
    a = 0
    j = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while a < n - 1:
            try:
                win = _greedy(times[a:], [(f_cum[a:], q, eta), (e_cum[a:], dq, eps)], pair, deriv)
            except ValueError:
                return report(float(times[a]), f"forcing or error term exceeds its budget at t={times[a]:.6g}", j)
            b = a + int(win.indices[1])
            windows.append((float(times[a]), float(times[b])))
            wcfg = SolverConfig(dt, times[b] - times[a])
            wrec = solve_deterministic(GridField(grid, vs[a]), spec, wcfg)
            if wrec.diverged or wrec.u.shape[0] != b - a + 1:
                return report(float(times[a]), "reference solution failed on window", j)
            ws = wrec.u
            wt = times[a : b + 1]
            try:
                part = partition_by_smallness((wt, ws), eta, pair, deriv, grid)
            except ValueError as exc:
                return report(float(times[a]), str(exc), j)
            for la, lb in part.intervals():
                ga, gb = a + la, a + lb
                tt = times[ga : gb + 1]
                w_norm = _segment_norm(_cumulative(wt[la : lb + 1], sobolev_lebesgue_norm(grid, ws[la : lb + 1], r, deriv), q), 0, lb - la, q)
                lin = st_norm(tt, free_evolution(grid, ws[la], tt, tt[0]))
                f_norm = _segment_norm(f_cum, ga, gb, q)
                lhs = st_norm(tt, free_evolution(grid, vs[ga], tt, tt[0])) + f_norm
                v_norm = _segment_norm(v_cum, ga, gb, q)
                e_norm = _segment_norm(e_cum, ga, gb, dq)
                close = st_norm(tt, free_evolution(grid, vs[ga] - ws[la], tt, tt[0]))
                dist = _sup_distance(grid, vs[ga : gb + 1] - ws[la : lb + 1], k)
                row = {
                    "interval": j,
                    "t_j": float(tt[0]),
                    "t_next": float(tt[-1]),
                    "w_norm": w_norm,
                    "linear_norm": lin,
                    "lwp_lhs": lhs,
                    "v_norm": v_norm,
                    "error_dual_norm": e_norm,
                    "closeness_norm": close,
                    "distance": dist,
                    "partition_ok": w_norm <= eta * (1 + 1e-9),
                    "linear_ok": lin <= 2 * eta * loose,
                    "lwp_ok": lhs <= cap * loose and v_norm <= 2 * lhs * loose,
                    "error_ok": e_norm <= eps * (1 + 1e-9),
                    "closeness_ok": close <= eta * loose,
                }
                row = {key: (bool(val) if isinstance(val, (bool, np.bool_)) else val) for key, val in row.items()}
                row = {key: (float(val) if isinstance(val, np.floating) else val) for key, val in row.items()}
                row["passes"] = all(row[key] for key in LEDGER_FIELDS if key.endswith("_ok"))
                rows.append(row)
                if not row["passes"]:
                    bad = [key[:-3] for key in LEDGER_FIELDS if key.endswith("_ok") and not row[key]]
                    return report(float(tt[0]), f"interval {j} failed: {', '.join(bad)}", j)
                j += 1
            a = b
    return report(float(times[-1]))
