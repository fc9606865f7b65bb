"""Experiment runners behind the command line; each returns a verdict dictionary."""

from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np

from .config import ExperimentConfig
from .dynamics import (
    NonlinearitySpec,
    SampledForcing,
    SolverConfig,
    initial_random_sobolev,
    initial_zero,
    solve_deterministic,
    solve_perturbed_v,
)
from .ensemble import (
    EnsembleConfig,
    control_config,
    energy_balance_test,
    mass_balance_test,
    run_ensemble,
    sup_moment_estimate,
    truncation_convergence_test,
)
from .io import write_csv
from .noise import simulate_convolution
from .perturbation import compare_to_reference, long_time_assembly
from .picard import estimate_eta0, lwp_threshold_check, picard_fixed_point, picard_iterates
from .propagator import free_evolution
from .spectral import mass_critical_pair, space_time_norm

__all__ = ["run_kind", "RUNNERS", "noise_forcing", "loglog_slope", "default_cutoffs", "strichartz_ratios"]


def _verdict(passed: bool, metrics: dict, tolerances: dict, failures: list | None = None) -> dict:
    return {"pass": bool(passed), "metrics": metrics, "tolerances": tolerances, "failures": failures or []}


def noise_forcing(cfg: ExperimentConfig, seed: int, stream: int = 0, scale: float = 1.0) -> SampledForcing:
    """One stochastic-convolution path on the solver's step nodes, as a forcing."""
    g = cfg.grid()
    s = cfg.solver_config()
    paths = simulate_convolution(cfg.operator_for(g), seed, 1, s.dt, s.n_steps, first_stream=stream)
    return SampledForcing(paths.times, paths.values[0] * scale)


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def _ensemble_config(cfg: ExperimentConfig, seed: int, threads: int | None, spec=None, u0=None) -> EnsembleConfig:
    g = cfg.grid()
    e = cfg.ensemble
    return EnsembleConfig(
        grid=g,
        spec=spec or cfg.spec(),
        operator=cfg.operator_for(g),
        solver=cfg.solver_config(),
        u0=u0 if u0 is not None else cfg.initial_for(g),
        n=e.n,
        seed=seed,
        r_max=math.inf if e.r_max is None else e.r_max,
        threads=threads or e.threads,
        chunk_size=e.chunk_size,
    )


def deterministic_conservation(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    u0 = cfg.initial_for(g)
    base = cfg.solver_config()
    rows = []
    for level in range(3):
        dt = base.dt / 2**level
        sc = SolverConfig(dt, base.t_final, snapshot_stride=base.snapshot_stride * 2**level, dealias=base.dealias)
        rec = solve_deterministic(u0, spec, sc, store_fields=False, track_monitor=False)
        m0 = rec.mass[0]
        drift = float(np.nanmax(np.abs(rec.mass - m0)) / m0) if m0 > 0 else float(np.nanmax(np.abs(rec.mass)))
        e_drift = float(abs(rec.energy[-1] - rec.energy[0])) if rec.energy is not None else float("nan")
        rows.append({"dt": dt, "mass_drift": drift, "energy_drift": e_drift, "diverged": rec.diverged})
    write_csv(rows, ("dt", "mass_drift", "energy_drift", "diverged"), os.path.join(out, "conservation.csv"))
    failures = []
    max_drift = max(r["mass_drift"] for r in rows)
    if max_drift > x.mass_drift_tol:
        failures.append({"check": "mass_drift", "value": max_drift})
    ratios = []
    if rows[0]["energy_drift"] == rows[0]["energy_drift"]:
        ratios = [rows[i]["energy_drift"] / rows[i + 1]["energy_drift"] for i in range(2)]
        lo, hi = x.ratio_range
        for i, r in enumerate(ratios):
            if not lo <= r <= hi:
                failures.append({"check": "energy_ratio", "level": i, "value": r})
    if any(r["diverged"] for r in rows):
        failures.append({"check": "diverged"})
    metrics = {"max_mass_drift": max_drift, "energy_ratios": ratios}
    tol = {"mass_drift": x.mass_drift_tol, "energy_ratio_range": list(x.ratio_range)}
    return _verdict(not failures, metrics, tol, failures)


def _balance_verdict(report, x_kse, n_times_min=None):
    failures = []
    bad = np.nonzero(report.checked & (report.deviation > report.allowed))[0]
    for i in bad:
        failures.append({"t": float(report.times[i]), "deviation": float(report.deviation[i]),
                         "allowed": float(report.allowed[i])})
    if report.diverged_fraction > 0.01:
        failures.append({"check": "diverged_fraction", "value": report.diverged_fraction})
    if n_times_min is not None and report.checked.sum() < n_times_min:
        failures.append({"check": "output_times", "value": int(report.checked.sum())})
    tol = {"k_se": x_kse, "max_diverged_fraction": 0.01}
    return _verdict(not failures, report.metrics(), tol, failures)


def noise_isometry(cfg, seed, out, threads):
    g = cfg.grid()
    spec = replace(cfg.spec(), enabled=False)
    ec = _ensemble_config(cfg, seed, threads, spec=spec, u0=initial_zero(g))
    stats = run_ensemble(ec, out)
    return _balance_verdict(mass_balance_test(stats, None, cfg.experiment.k_se), cfg.experiment.k_se)


def mass_balance(cfg, seed, out, threads):
    ec = _ensemble_config(cfg, seed, threads)
    stats = run_ensemble(ec, out)
    control = run_ensemble(control_config(ec)) if cfg.ensemble.control else None
    x = cfg.experiment
    return _balance_verdict(mass_balance_test(stats, control, x.k_se), x.k_se, x.min_output_times)


def energy_balance(cfg, seed, out, threads):
    ec = _ensemble_config(cfg, seed, threads)
    stats = run_ensemble(ec, out)
    control = run_ensemble(control_config(ec)) if cfg.ensemble.control else None
    x = cfg.experiment
    return _balance_verdict(energy_balance_test(stats, control, x.k_se), x.k_se)


def lwp_threshold(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    f = noise_forcing(cfg, seed)
    rep = lwp_threshold_check(cfg.initial_for(g), f.values, spec, f.times, x.eta, x.tolerance)
    metrics = {"lhs": rep.lhs, "free_norm": rep.free_norm, "forcing_norm": rep.forcing_norm,
               "hypothesis_met": rep.passes, "solution_norm": rep.solution_norm}
    ok = rep.bound_holds if rep.passes else True
    failures = [] if ok else [{"check": "solution_norm", "value": rep.solution_norm, "bound": rep.bound}]
    return _verdict(ok, metrics, {"eta": x.eta, "bound": rep.bound, "tolerance": x.tolerance}, failures)


def picard_contraction(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    u0 = cfg.initial_for(g)
    f = noise_forcing(cfg, seed)
    times = f.times
    eta0, table = estimate_eta0(u0, f.values, spec, times, x.scales, J=x.iterates, cap=x.ratio_cap)
    write_csv(table, ("scale", "lhs", "max_ratio"), os.path.join(out, "eta0_scan.csv"))
    failures = []
    # strictly inside the measured threshold when the scan allows it
    passing = [row for row in table if row["lhs"] <= eta0 and eta0 > 0]
    inside = [row for row in passing if row["lhs"] < eta0] or passing
    if not inside:
        failures.append({"check": "eta0", "value": eta0})
        return _verdict(False, {"eta0": eta0}, {"ratio_cap": x.ratio_cap}, failures)
    passing = inside
    s = passing[-1]["scale"]
    u0s, fs = u0 * s, f.values * s
    trace = picard_iterates(u0s, fs, spec, times, x.iterates)
    floor = 1e-13 * float(np.max(trace.norms))
    run = trace.consecutive_contractions(x.ratio_cap, floor)
    if run < x.min_consecutive:
        failures.append({"check": "consecutive_contractions", "value": run})
    fixed, _ = picard_fixed_point(u0s, fs, spec, times, x.tol)
    sc = SolverConfig(times[1] - times[0], times[-1])
    rec = solve_perturbed_v(u0s, SampledForcing(times, fs), spec, sc)
    diff = compare_to_reference((times, fixed), (rec.times, rec.v), spec, grid=g)["sup"]
    if not diff <= 10 * x.tol:
        failures.append({"check": "fixed_point_vs_solver", "value": diff})
    metrics = {"eta0": eta0, "scale": s, "lhs": passing[-1]["lhs"], "ratios": trace.ratios.tolist(),
               "consecutive_contractions": run, "fixed_point_distance": diff}
    tol = {"ratio_cap": x.ratio_cap, "min_consecutive": x.min_consecutive, "fixed_point": 10 * x.tol}
    return _verdict(not failures, metrics, tol, failures)


def perturbation_sweep(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    u0 = cfg.initial_for(g)
    sc = cfg.solver_config()
    f = noise_forcing(cfg, seed)
    w = solve_deterministic(u0, spec, sc, track_monitor=False)
    rows = []
    for a in x.amplitudes:
        v = solve_perturbed_v(u0, f.scaled(a), spec, sc, track_monitor=False)
        d = compare_to_reference(v, w, spec)
        rows.append({"amplitude": a, "sup_distance": d["sup"], "spacetime_distance": d["spacetime"]})
    write_csv(rows, ("amplitude", "sup_distance", "spacetime_distance"), os.path.join(out, "sweep.csv"))
    slope = loglog_slope([r["amplitude"] for r in rows], [r["sup_distance"] for r in rows])
    lo, hi = x.slope_range
    ok = lo <= slope <= hi
    failures = [] if ok else [{"check": "slope", "value": slope}]
    return _verdict(ok, {"slope": slope, "distances": [r["sup_distance"] for r in rows]},
                    {"slope_range": [lo, hi]}, failures)


def long_time_assembly_runner(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    u0 = cfg.initial_for(g)
    sc = cfg.solver_config()
    failures, reached = [], []
    for i in range(x.seeds):
        f = noise_forcing(cfg, seed, stream=i, scale=x.forcing_scale)
        rep = long_time_assembly(u0, f, spec, sc.t_final, x.eta, x.eps, sc.dt,
                                 ledger_path=os.path.join(out, f"ledger_stream{i}.csv"))
        reached.append(rep.final_time)
        if not rep.all_passed:
            failures.append({"stream": i, "interval": rep.failed_interval, "t": rep.final_time,
                             "reason": rep.failure})
    metrics = {"final_times": reached, "streams_reaching_T": x.seeds - len(failures)}
    return _verdict(not failures, metrics, {"eta": x.eta, "eps": x.eps, "T": sc.t_final}, failures)


def default_cutoffs(grid) -> list[float]:
    """Physical cutoffs for mode counts ``M/8, M/4, M/2`` and the full band."""
    nyq = grid.nyquist_frequency
    return [nyq / 4, nyq / 2, nyq, grid.max_frequency]


def truncation_convergence(cfg, seed, out, threads):
    x = cfg.experiment
    g, spec = cfg.grid(), cfg.spec()
    cutoffs = x.cutoffs or default_cutoffs(g)
    rep = truncation_convergence_test(cfg.initial_for(g), cfg.operator_for(g), spec, cfg.solver_config(),
                                      cutoffs, x.paths, seed)
    rep.floor = x.floor
    rows = [{"path": i, **{f"N={N:.6g}": float(d) for N, d in zip(cutoffs, row)}} for i, row in enumerate(rep.distances)]
    write_csv(rows, ["path"] + [f"N={N:.6g}" for N in cutoffs], os.path.join(out, "truncation.csv"))
    failures = [{"path": i} for i, ok in enumerate(rep.path_monotone() & rep.final_ok) if not ok]
    metrics = {"cutoffs": list(map(float, cutoffs)), "final_max": float(rep.distances[:, -1].max()),
               "monotone_paths": int(rep.path_monotone().sum())}
    return _verdict(rep.passes, metrics, {"floor": x.floor}, failures)


def strichartz_ratios(grid, samples: int, seed: int, dt: float, T: float = 1.0) -> np.ndarray:
    """``||S(t) f||_{L^q_t L^r_x([0, T])} / ||f||_{L^2}`` over random data, mass-critical pair."""
    q, r = mass_critical_pair(grid.dimension).as_floats()
    n = int(round(T / dt))
    times = np.arange(n + 1) * dt
    rng = np.random.default_rng(seed)
    out = np.empty(samples)
    for i in range(samples):
        s = float(rng.uniform(0.0, 1.0))
        f = initial_random_sobolev(grid, s, 1.0, int(rng.integers(2**63)))
        l2 = math.sqrt(float(np.sum(np.abs(f.values) ** 2) * grid.cell_volume))
        out[i] = space_time_norm(grid, times, free_evolution(grid, f.values, times), q, r) / l2
    return out


def strichartz_spotcheck(cfg, seed, out, threads):
    x = cfg.experiment
    g = cfg.grid()
    sc = cfg.solver_config()
    ratios = strichartz_ratios(g, x.samples, seed, sc.dt, sc.t_final)
    write_csv([{"sample": i, "ratio": float(v)} for i, v in enumerate(ratios)], ("sample", "ratio"),
              os.path.join(out, "strichartz.csv"))
    med = float(np.median(ratios))
    ok = bool(np.max(ratios) <= x.spread_cap * med)
    metrics = {"median": med, "max": float(ratios.max()), "min": float(ratios.min()),
               "spread": float(ratios.max() / ratios.min())}
    failures = [] if ok else [{"check": "spread", "value": float(ratios.max() / med)}]
    return _verdict(ok, metrics, {"max_over_median": x.spread_cap}, failures)


def moment_bounds(cfg, seed, out, threads):
    x = cfg.experiment
    stats = run_ensemble(_ensemble_config(cfg, seed, threads), out)
    est = sup_moment_estimate(stats, x.p, n_boot=x.bootstrap, seed=seed)
    end = np.maximum(stats.mass[stats.valid, -1], 0) ** (x.p / 2)
    end_mean = float(np.nanmean(end))
    ok = math.isfinite(est["mean"]) and est["mean"] >= end_mean and stats.diverged_fraction <= 0.01
    metrics = {**est, "endpoint_mean": end_mean, "diverged_fraction": stats.diverged_fraction}
    failures = [] if ok else [{"check": "sup_moment", "value": est["mean"]}]
    return _verdict(ok, metrics, {"max_diverged_fraction": 0.01}, failures)


RUNNERS = {
    "deterministic-conservation": deterministic_conservation,
    "noise-isometry": noise_isometry,
    "mass-balance": mass_balance,
    "energy-balance": energy_balance,
    "lwp-threshold": lwp_threshold,
    "picard-contraction": picard_contraction,
    "perturbation-sweep": perturbation_sweep,
    "long-time-assembly": long_time_assembly_runner,
    "truncation-convergence": truncation_convergence,
    "strichartz-spotcheck": strichartz_spotcheck,
    "moment-bounds": moment_bounds,
}


def run_kind(cfg: ExperimentConfig, seed: int, out: str, threads: int | None = None) -> dict:
    return RUNNERS[cfg.kind](cfg, seed, out, threads)
