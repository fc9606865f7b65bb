"""Monte Carlo ensembles and the expectation identities for mass and energy."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    NonlinearitySpec,
    SolverConfig,
    _energy,
    _mass,
    integrate,
)
from .io import write_csv
from .noise import MultiplierOperator, NoiseStream
from .spectral import GridField, SpectralGrid, projection_symbol

__all__ = [
    "EnsembleConfig",
    "EnsembleStats",
    "BalanceReport",
    "TruncationReport",
    "run_ensemble",
    "control_config",
    "mass_balance_test",
    "energy_balance_test",
    "sup_moment_estimate",
    "truncation_convergence_test",
    "write_csv",
    "MAX_DIVERGED_FRACTION",
]

MAX_DIVERGED_FRACTION = 0.01
STATS_COLUMNS = ("t", "mean_mass", "se_mass", "predicted_mass", "mean_energy", "se_energy", "predicted_energy_rhs")
TRAJECTORY_COLUMNS = (
    "stream_id",
    "final_mass",
    "sup_mass",
    "final_energy",
    "sup_energy",
    "diverged",
    "diverged_time",
    "stopped",
    "stop_time",
)


@dataclass(frozen=True)
class EnsembleConfig:
    """One Monte Carlo experiment: ``n`` trajectories with stream ids ``0 .. n-1``.

    ``r_max`` is the norm-cap stopping rule (``inf`` means fixed horizon).
    Chunks of ``chunk_size`` trajectories are integrated as one batch; the
    chunking, not ``threads``, fixes the arithmetic, so results do not depend
    on the thread count.
    """

    grid: SpectralGrid
    spec: NonlinearitySpec
    operator: MultiplierOperator
    solver: SolverConfig
    u0: GridField
    n: int
    seed: int = 0
    r_max: float = math.inf
    truncation: float | None = None
    aggregate: int = 1
    threads: int = 1
    chunk_size: int = 256

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an ensemble needs at least two trajectories")
        if not self.solver.t_final > 0:
            raise ValueError("horizon must be positive")
        if self.chunk_size < 1 or self.threads < 1:
            raise ValueError("chunk size and thread count must be positive")
        if not self.u0.grid.same_as(self.grid) or not self.operator.grid.same_as(self.grid):
            raise ValueError("initial data and operator must live on the ensemble grid")

    @property
    def effective_weights(self) -> np.ndarray:
        w = self.operator.weights
        if self.truncation is not None:
            w = w * projection_symbol(self.grid, self.truncation)
        return w


def control_config(cfg: EnsembleConfig, factor: int = 2) -> EnsembleConfig:
    """Same ensemble at ``dt / factor`` on coupled noise (sums of fine increments)."""
    s = cfg.solver
    solver = replace(s, dt=s.dt / factor, snapshot_stride=s.snapshot_stride * factor)
    return replace(cfg, solver=solver, aggregate=cfg.aggregate * factor)


@dataclass
class EnsembleStats:
    """Per-trajectory series (axis 0) and their Monte Carlo summaries."""

    config: EnsembleConfig
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray | None
    potential_integral: np.ndarray | None
    sup_mass: np.ndarray
    sup_energy: np.ndarray | None
    diverged: np.ndarray
    diverged_time: np.ndarray
    stopped: np.ndarray
    stop_time: np.ndarray

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return ~self.diverged

    @property
    def n_diverged(self) -> int:
        return int(self.diverged.sum())

    @property
    def n_stopped(self) -> int:
        return int(self.stopped.sum())

    @property
    def diverged_fraction(self) -> float:
        return self.n_diverged / self.n

    def mean_se(self, series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and standard error over non-diverged trajectories, ignoring NaN (stopped) entries."""
        x = series[self.valid]
        cnt = np.sum(np.isfinite(x), axis=0)
        mean = np.nanmean(x, axis=0)
        sd = np.nanstd(x, axis=0, ddof=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return mean, sd / np.sqrt(cnt)

    @property
    def hs2(self) -> float:
        return float(np.sum(self.config.effective_weights**2))

    @property
    def hs2_dot1(self) -> float:
        return float(np.sum(self.config.grid.xi_squared * self.config.effective_weights**2))

    def predicted_mass(self) -> np.ndarray:
        return _mass(self.config.grid, self._initial()[None])[0] + 2 * self.times * self.hs2

    def energy_residuals(self) -> np.ndarray:
        """``E(u(t)) - E(u0) - (d/(d-2)) D int int |u|^{4/(d-2)} - t ||phi||^2_{HS(L^2; H-dot^1)}``."""
        if self.energy is None:
            raise ValueError("energy series needs d >= 3")
        d = self.config.grid.dimension
        density = self.hs2 / self.config.grid.volume
        e0 = _energy(self.config.grid, self._initial()[None])[0]
        return self.energy - e0 - d / (d - 2) * density * self.potential_integral - self.times * self.hs2_dot1

    def predicted_energy_rhs(self) -> np.ndarray | None:
        if self.energy is None:
            return None
        d = self.config.grid.dimension
        density = self.hs2 / self.config.grid.volume
        e0 = _energy(self.config.grid, self._initial()[None])[0]
        q_mean, _ = self.mean_se(self.potential_integral)
        return e0 + d / (d - 2) * density * q_mean + self.times * self.hs2_dot1

    def _initial(self) -> np.ndarray:
        g, v = self.config.grid, self.config.u0.values
        if self.config.truncation is not None:
            v = g.apply_multiplier(v, projection_symbol(g, self.config.truncation))
        return v

    def stats_rows(self) -> list[dict]:
        mm, sm = self.mean_se(self.mass)
        pm = self.predicted_mass()
        if self.energy is not None:
            me, se = self.mean_se(self.energy)
            pe = self.predicted_energy_rhs()
        else:
            me = se = pe = np.full_like(mm, np.nan)
        return [
            dict(zip(STATS_COLUMNS, map(float, row)))
            for row in zip(self.times, mm, sm, pm, me, se, pe)
        ]

    def trajectory_rows(self) -> list[dict]:
        rows = []
        for i in range(self.n):
            fin = lambda a: float(a[i, -1]) if a is not None else float("nan")
            rows.append(
                {
                    "stream_id": i,
                    "final_mass": fin(self.mass),
                    "sup_mass": float(self.sup_mass[i]),
                    "final_energy": fin(self.energy),
                    "sup_energy": float(self.sup_energy[i]) if self.sup_energy is not None else float("nan"),
                    "diverged": bool(self.diverged[i]),
                    "diverged_time": float(self.diverged_time[i]),
                    "stopped": bool(self.stopped[i]),
                    "stop_time": float(self.stop_time[i]),
                }
            )
        return rows


def _run_chunk(cfg: EnsembleConfig, start: int, stop: int):
    g = cfg.grid
    streams = [NoiseStream(cfg.seed, i, g.shape, cfg.aggregate) for i in range(start, stop)]
    u0 = np.broadcast_to(cfg.u0.values, (stop - start,) + g.shape)
    return integrate(
        g,
        u0,
        cfg.spec,
        cfg.solver,
        operator=cfg.operator,
        streams=streams,
        truncation=cfg.truncation,
        r_max=cfg.r_max,
        store_fields=False,
        track_monitor=math.isfinite(cfg.r_max),
    )


def run_ensemble(cfg: EnsembleConfig, out_dir: str | os.PathLike | None = None) -> EnsembleStats:
    """Integrate all trajectories and, if ``out_dir`` is given, persist the CSVs.

    Raises ``RuntimeError`` when every trajectory diverged.
    """
    bounds = [(a, min(a + cfg.chunk_size, cfg.n)) for a in range(0, cfg.n, cfg.chunk_size)]
    if cfg.threads == 1 or len(bounds) == 1:
        recs = [_run_chunk(cfg, a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            recs = list(pool.map(lambda ab: _run_chunk(cfg, *ab), bounds))
    cat = lambda name: None if getattr(recs[0], name) is None else np.concatenate([getattr(r, name) for r in recs])
    stats = EnsembleStats(
        config=cfg,
        times=recs[0].times,
        mass=cat("mass"),
        energy=cat("energy"),
        potential_integral=cat("potential_integral"),
        sup_mass=cat("sup_mass"),
        sup_energy=cat("sup_energy"),
        diverged=cat("diverged"),
        diverged_time=cat("diverged_time"),
        stopped=cat("stopped"),
        stop_time=cat("stop_time"),
    )
    if stats.n_diverged == stats.n:
        raise RuntimeError("all trajectories diverged")
    if out_dir is not None:
        write_csv(stats.stats_rows(), STATS_COLUMNS, os.path.join(out_dir, "stats.csv"))
        write_csv(stats.trajectory_rows(), TRAJECTORY_COLUMNS, os.path.join(out_dir, "trajectories.csv"))
    return stats


@dataclass
class BalanceReport:
    """Deviation of an ensemble mean from its predicted value at each output time."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    predicted: np.ndarray
    budget: np.ndarray
    allowed: np.ndarray
    diverged_fraction: float
    k_se: float = 4.0
    checked: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.mean - self.predicted)

    @property
    def max_relative_deviation(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = self.deviation / np.abs(self.predicted)
        rel = rel[self.checked & np.isfinite(rel)]
        return float(np.max(rel)) if rel.size else 0.0

    @property
    def worst_ratio(self) -> float:
        """Largest ``deviation / allowed`` over the checked times; ``<= 1`` means pass."""
        r = self.deviation[self.checked] / self.allowed[self.checked]
        return float(np.max(r)) if r.size else 0.0

    @property
    def passes(self) -> bool:
        ok = np.all(self.deviation[self.checked] <= self.allowed[self.checked])
        return bool(ok) and self.diverged_fraction <= MAX_DIVERGED_FRACTION

    def metrics(self) -> dict:
        return {
            "max_relative_deviation": self.max_relative_deviation,
            "worst_deviation_over_allowed": self.worst_ratio,
            "diverged_fraction": self.diverged_fraction,
            "output_times": int(self.checked.sum()),
        }


def _budget(stats: EnsembleStats, control: EnsembleStats | None, series_fn) -> np.ndarray:
    if control is None:
        return np.zeros(stats.times.size)
    if control.times.shape != stats.times.shape or np.max(np.abs(control.times - stats.times)) > 1e-9:
        raise ValueError("control run must share the output times")
    m1, _ = stats.mean_se(series_fn(stats))
    m2, _ = control.mean_se(series_fn(control))
    return 2 * np.abs(m1 - m2)


def _roundoff_floor(predicted: np.ndarray) -> np.ndarray:
    return 1e-10 * np.maximum(1.0, np.abs(predicted))


def mass_balance_test(stats: EnsembleStats, control: EnsembleStats | None = None, k_se: float = 4.0) -> BalanceReport:
    """``E M(u(t)) = M(u0) + 2 t ||phi||_HS^2`` at every output time.

    Allowed deviation: ``k_se * SE + 2 |mean(dt) - mean(dt/2)|`` plus a
    ``1e-10`` relative round-off floor.
    """
    mean, se = stats.mean_se(stats.mass)
    pred = stats.predicted_mass()
    budget = _budget(stats, control, lambda s: s.mass)
    allowed = k_se * np.nan_to_num(se) + budget + _roundoff_floor(pred)
    checked = np.isfinite(mean)
    return BalanceReport(stats.times, mean, se, pred, budget, allowed, stats.diverged_fraction, k_se, checked)


def energy_balance_test(stats: EnsembleStats, control: EnsembleStats | None = None, k_se: float = 4.0) -> BalanceReport:
    """Per-trajectory energy residual has mean zero at every output time.

    The residual subtracts from ``E(u(t))`` the initial energy, the
    ``(d/(d-2)) sum|phi e_n|^2 int int |u|^{4/(d-2)}`` correction computed on
    the same trajectory and ``t ||phi||^2_{HS(L^2; H-dot^1)}``.
    """
    cfg = stats.config
    if cfg.spec.criticality != 1 or not 3 <= cfg.grid.dimension <= 6:
        raise ValueError("the energy identity needs an energy-critical run with 3 <= d <= 6")
    res = stats.energy_residuals()
    mean, se = stats.mean_se(res)
    pred = np.zeros_like(mean)
    budget = _budget(stats, control, lambda s: s.energy_residuals())
    scale = np.abs(stats.predicted_energy_rhs())
    allowed = k_se * np.nan_to_num(se) + budget + _roundoff_floor(scale)
    checked = np.isfinite(mean)
    return BalanceReport(stats.times, mean, se, pred, budget, allowed, stats.diverged_fraction, k_se, checked)


def sup_moment_estimate(
    stats: EnsembleStats,
    p: float = 2.0,
    quantity: str = "mass",
    n_boot: int = 2000,
    level: float = 0.95,
    seed: int = 0,
) -> dict:
    """``E[sup_t M(u)^{p/2}]`` (or ``E[sup_t E(u)^{p/2}]``) with a percentile bootstrap interval."""
    if quantity == "mass":
        x = stats.sup_mass[stats.valid]
    elif quantity == "energy":
        if stats.sup_energy is None:
            raise ValueError("energy needs d >= 3")
        x = stats.sup_energy[stats.valid]
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    x = np.maximum(x, 0.0) ** (p / 2)
    rng = np.random.default_rng(seed)
    boot = x[rng.integers(0, x.size, size=(n_boot, x.size))].mean(axis=1)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    return {
        "mean": float(x.mean()),
        "se": float(x.std(ddof=1) / np.sqrt(x.size)),
        "ci_low": float(lo),
        "ci_high": float(hi),
        "n": int(x.size),
    }


@dataclass
class TruncationReport:
    N: np.ndarray
    distances: np.ndarray  # (path, N)
    floor: float = 1e-10

    def path_monotone(self) -> np.ndarray:
        """Strict decrease along ``N`` until the distance reaches the floor."""
        out = []
        for row in self.distances:
            ok = True
            for a, b in zip(row[:-1], row[1:]):
                if a <= self.floor:
                    ok = ok and b <= self.floor
                else:
                    ok = ok and b < a
            out.append(ok)
        return np.asarray(out)

    @property
    def final_ok(self) -> np.ndarray:
        return self.distances[:, -1] <= self.floor

    @property
    def passes(self) -> bool:
        return bool(np.all(self.path_monotone()) and np.all(self.final_ok))


def truncation_convergence_test(
    u0: GridField,
    operator: MultiplierOperator,
    spec: NonlinearitySpec,
    solver: SolverConfig,
    N_list,
    n_paths: int,
    seed: int = 0,
    project_nonlinearity: bool | None = None,
) -> TruncationReport:
    """``sup_t ||u - u_N||_{L^2}`` per coupled path and cutoff ``N``.

    Every cutoff reuses the same noise streams, so the differences measure the
    truncation alone.
    """
    g = u0.grid
    batch = np.broadcast_to(u0.values, (n_paths,) + g.shape)

    def run(N):
        streams = [NoiseStream(seed, i, g.shape) for i in range(n_paths)]
        return integrate(
            g, batch, spec, solver, operator=operator, streams=streams, truncation=N,
            project_nonlinearity=project_nonlinearity,
        )

    ref = run(None)
    dist = np.zeros((n_paths, len(N_list)))
    for j, N in enumerate(N_list):
        rec = run(N)
        diff = rec.u - ref.u
        l2 = np.sqrt(np.sum(np.abs(diff) ** 2, axis=tuple(range(2, diff.ndim))) * g.cell_volume)
        dist[:, j] = np.max(l2, axis=1)
    return TruncationReport(np.asarray(N_list, dtype=float), dist)
