"""Nonlinearities, mass/energy functionals and the split-step solvers.

All solvers share one batched integrator. One step of size ``h`` is

    v <- R_{h/2}(v; f(t)),  v <- S(h) v,  Psi <- S(h)(Psi - i phi dW),
    v <- R_{h/2}(v; f(t + h))

where ``R_h(v; f)`` is the exact flow of ``i dv/dt = N(v + f)`` with ``f``
frozen, i.e. ``w -> w exp(-i h |w|^{p-1})`` applied to ``w = v + f``. For
the noisy problem ``f = Psi`` and the solution is ``u = v + Psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .noise import MultiplierOperator, NoiseStream, convolution_kick
from .propagator import plan_for
from .spectral import (
    GridField,
    SpectralGrid,
    StrichartzPair,
    energy_critical_pair,
    mass_critical_pair,
    projection_symbol,
    sobolev_lebesgue_norm,
    sobolev_weight,
)

__all__ = [
    "NonlinearitySpec",
    "SolverConfig",
    "TrajectoryRecord",
    "BatchRecord",
    "MonitorReport",
    "Forcing",
    "SampledForcing",
    "nonlinearity_eval",
    "modulus_power",
    "mass",
    "energy",
    "step_deterministic",
    "integrate",
    "solve_deterministic",
    "solve_perturbed_v",
    "solve_snls",
    "solve_truncated",
    "blowup_monitor",
    "initial_zero",
    "initial_plane_wave",
    "initial_gaussian",
    "initial_random_sobolev",
]

Forcing = Callable[[float], np.ndarray]

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class NonlinearitySpec:
    """Defocusing power nonlinearity ``|u|^{p-1} u``.

    Give either ``criticality`` (0 mass-critical, 1 energy-critical) or an
    explicit ``power``. ``enabled=False`` switches the nonlinearity off, which
    turns every solver into the linear flow.
    """

    dimension: int
    criticality: int | None = None
    power: float | None = None
    enabled: bool = True

    def __post_init__(self):
        d, k = self.dimension, self.criticality
        if k is None and self.power is None:
            raise ValueError("give a criticality index or an explicit power")
        if k is not None:
            if k not in (0, 1):
                raise ValueError("criticality must be 0 (mass) or 1 (energy)")
            if k == 1 and not 3 <= d <= 6:
                raise ValueError("energy-critical requires 3 <= d <= 6")
            p = 1 + 4 / d if k == 0 else 1 + 4 / (d - 2)
            if self.power is not None and not math.isclose(self.power, p):
                raise ValueError(f"power {self.power} inconsistent with criticality {k} in d={d}")
            object.__setattr__(self, "power", p)
        elif not self.power > 1:
            raise ValueError("nonlinearity power must exceed 1")

    @property
    def p(self) -> float:
        return float(self.power)

    def monitor_norm(self) -> tuple[StrichartzPair, int]:
        """Pair and derivative order of the blowup-alternative norm."""
        if self.criticality == 1:
            return energy_critical_pair(self.dimension), 1
        return mass_critical_pair(self.dimension), 0


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_final: float
    scheme: str = "strang"
    truncation: float | None = None
    snapshot_stride: int = 1
    dealias: bool = False

    def __post_init__(self):
        if self.scheme != "strang":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise ValueError("dt must not exceed t_final")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        n = self.t_final / self.dt
        if abs(n - round(n)) > 1e-8 * n:
            raise ValueError("t_final must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


def modulus_power(u: np.ndarray, a: float) -> np.ndarray:
    """``|u|^a`` with ``0 -> 0``; even integer ``a`` avoids the square root."""
    m2 = u.real**2 + u.imag**2
    half = a / 2
    if half == int(half):
        return m2 ** int(half)
    out = np.zeros_like(m2)
    nz = m2 > 0
    out[nz] = np.exp(half * np.log(m2[nz]))
    return out


def _nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    return modulus_power(u, p - 1) * u


def nonlinearity_eval(field: GridField, spec: NonlinearitySpec) -> GridField:
    """Pointwise ``|u|^{p-1} u`` (zero when the nonlinearity is switched off)."""
    if not spec.enabled:
        return GridField.zeros(field.grid)
    return GridField(field.grid, _nonlinearity(field.values, spec.p))


def _mass(grid: SpectralGrid, values: np.ndarray) -> np.ndarray:
    return np.sum(values.real**2 + values.imag**2, axis=grid.axes) * grid.cell_volume


def _energy(grid: SpectralGrid, values: np.ndarray, coeffs: np.ndarray | None = None) -> np.ndarray:
    d = grid.dimension
    if d < 3:
        raise ValueError("the energy functional needs d >= 3")
    if coeffs is None:
        coeffs = grid.to_coefficients(values)
    kinetic = 0.5 * np.sum(grid.xi_squared * (coeffs.real**2 + coeffs.imag**2), axis=grid.axes)
    pot = np.sum(modulus_power(values, 2 * d / (d - 2)), axis=grid.axes) * grid.cell_volume
    return kinetic + (d - 2) / (2 * d) * pot


def mass(field: GridField) -> float:
    """``int |u|^2``."""
    return float(_mass(field.grid, field.values))


def energy(field: GridField, d: int | None = None) -> float:
    """``1/2 int |grad u|^2 + (d-2)/(2d) int |u|^{2d/(d-2)}``."""
    if d is not None and d != field.grid.dimension:
        raise ValueError("dimension does not match the field's grid")
    return float(_energy(field.grid, field.values))


class SampledForcing:
    """Forcing known at sample times; linear interpolation in between."""

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values)
        if self.values.shape[0] != self.times.size:
            raise ValueError("one forcing sample per time is required")

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        j = int(np.searchsorted(ts, t))
        tol = 1e-9 * max(1.0, abs(t))
        if j < ts.size and abs(ts[j] - t) <= tol:
            return self.values[j]
        if j > 0 and abs(ts[j - 1] - t) <= tol:
            return self.values[j - 1]
        if j == 0 or j == ts.size:
            raise ValueError(f"time {t} outside the forcing samples")
        a = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return (1 - a) * self.values[j - 1] + a * self.values[j]

    def scaled(self, c: float) -> "SampledForcing":
        return SampledForcing(self.times, self.values * c)

    def restricted(self, t0: float, t1: float) -> "SampledForcing":
        tol = 1e-9 * max(1.0, abs(t1))
        keep = (self.times >= t0 - tol) & (self.times <= t1 + tol)
        return SampledForcing(self.times[keep], self.values[keep])


def _rotate(w: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """``w * exp(-i theta)`` for real ``theta`` without a complex exponential."""
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(w)
    out.real = w.real * c + w.imag * s
    out.imag = w.imag * c - w.real * s
    return out


class SplitStep:
    """Batched Strang stepper for one grid/nonlinearity/step size."""

    def __init__(
        self,
        grid: SpectralGrid,
        spec: NonlinearitySpec,
        dt: float,
        dealias: bool = True,
        projector: np.ndarray | None = None,
    ):
        self.grid, self.spec, self.dt = grid, spec, dt
        self.phase = plan_for(grid).phase(dt)
        self.dealias = grid.dealias_mask() if dealias else None
        self.projector = projector

    def potential(self, w: np.ndarray) -> np.ndarray:
        V = modulus_power(w, self.spec.p - 1)
        if self.dealias is not None:
            V = self.grid.apply_multiplier(V, self.dealias).real
        return V

    def projected_nonlinearity(self, w: np.ndarray) -> np.ndarray:
        sym = self.projector if self.dealias is None else self.projector * self.dealias
        return self.grid.apply_multiplier(_nonlinearity(w, self.spec.p), sym)

    def nonlinear(self, v: np.ndarray, f: np.ndarray | None, h: float) -> np.ndarray:
        if not self.spec.enabled:
            return v
        w = v if f is None else v + f
        if self.projector is None:
            w = _rotate(w, h * self.potential(w))
        else:
            # i w' = P_N N(w) has no closed form; classical RK4.
            F = self.projected_nonlinearity
            k1 = -1j * F(w)
            k2 = -1j * F(w + 0.5 * h * k1)
            k3 = -1j * F(w + 0.5 * h * k2)
            k4 = -1j * F(w + h * k3)
            w = w + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return w if f is None else w - f

    def linear(self, v: np.ndarray) -> np.ndarray:
        g = self.grid
        return g.from_coefficients(g.to_coefficients(v) * self.phase)


def step_deterministic(field: GridField, spec: NonlinearitySpec, dt: float, dealias: bool = False) -> GridField:
    """One Strang step: half phase rotation, exact ``S(dt)``, half phase rotation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    st = SplitStep(field.grid, spec, dt, dealias)
    with np.errstate(over="ignore", invalid="ignore"):
        v = st.nonlinear(field.values, None, dt / 2)
        v = st.linear(v)
        v = st.nonlinear(v, None, dt / 2)
    ok = bool(np.all(np.isfinite(v)))
    return GridField(field.grid, v, diverged=not ok)


@dataclass
class BatchRecord:
    """Arrays from one batched integration; axis 0 is the trajectory."""

    grid: SpectralGrid
    spec: NonlinearitySpec
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray | None
    monitor: np.ndarray
    potential_integral: np.ndarray | None
    sup_mass: np.ndarray
    diverged: np.ndarray
    diverged_time: np.ndarray
    stopped: np.ndarray
    stop_time: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    psi: np.ndarray | None = None
    sup_energy: np.ndarray | None = None

    def __len__(self):
        return self.mass.shape[0]

    def trajectory(self, i: int) -> "TrajectoryRecord":
        pick = lambda a: None if a is None else a[i]
        return TrajectoryRecord(
            grid=self.grid,
            spec=self.spec,
            times=self.times,
            mass=self.mass[i],
            energy=pick(self.energy),
            monitor=self.monitor[i],
            potential_integral=pick(self.potential_integral),
            sup_mass=float(self.sup_mass[i]),
            diverged=bool(self.diverged[i]),
            diverged_time=float(self.diverged_time[i]),
            stopped=bool(self.stopped[i]),
            stop_time=float(self.stop_time[i]),
            u=pick(self.u),
            v=pick(self.v),
            psi=pick(self.psi),
        )


@dataclass
class TrajectoryRecord:
    """One solved trajectory sampled at the snapshot times.

    ``u``, ``v`` and ``psi`` have shape ``(n_times, *grid.shape)``; ``u = v + psi``
    holds exactly. Series entries after divergence or a norm-cap stop are NaN.
    """

    grid: SpectralGrid
    spec: NonlinearitySpec
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray | None
    monitor: np.ndarray
    potential_integral: np.ndarray | None
    sup_mass: float
    diverged: bool
    diverged_time: float
    stopped: bool = False
    stop_time: float = math.inf
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    psi: np.ndarray | None = None

    def snapshot(self, n: int) -> GridField:
        return GridField(self.grid, self.u[n], diverged=self.diverged)

    @property
    def snapshots(self) -> list[GridField]:
        return [self.snapshot(n) for n in range(len(self.times))]

    @property
    def final(self) -> GridField:
        return self.snapshot(-1)


def _broadcast_forcing(forcing: Forcing | None, t: float, batch_shape) -> np.ndarray | None:
    if forcing is None:
        return None
    return np.broadcast_to(np.asarray(forcing(t), dtype=complex), batch_shape)


def integrate(
    grid: SpectralGrid,
    u0: np.ndarray,
    spec: NonlinearitySpec,
    config: SolverConfig,
    forcing: Forcing | None = None,
    operator: MultiplierOperator | None = None,
    streams: Sequence[NoiseStream] | None = None,
    truncation: float | None = None,
    project_nonlinearity: bool | None = None,
    r_max: float = math.inf,
    store_fields: bool = True,
    noise_block: int | None = None,
    track_monitor: bool = True,
) -> BatchRecord:
    """Batched split-step integration on ``[0, config.t_final]``.

    ``u0`` has shape ``(B, *grid.shape)``. ``forcing`` gives a deterministic
    ``f(t)``; ``operator`` with one stream per trajectory adds the stochastic
    convolution instead. ``truncation`` replaces ``u0`` by ``P_N u0`` and
    ``phi`` by ``P_N phi``; with ``project_nonlinearity`` (default: energy-critical
    only) the nonlinearity becomes ``P_N N(u)``. Trajectories whose running
    blowup-norm reaches ``r_max`` are stopped and frozen there. With
    ``track_monitor=False`` (only allowed without a cap) the monitor series is
    left as NaN, which saves the per-step gradient transforms.
    """
    u0 = np.asarray(u0, dtype=complex)
    B = u0.shape[0]
    if u0.shape[1:] != grid.shape:
        raise ValueError("initial data shape does not match the grid")
    if forcing is not None and operator is not None:
        raise ValueError("give either a deterministic forcing or a noise operator, not both")
    if operator is not None and (streams is None or len(streams) != B):
        raise ValueError("one noise stream per trajectory is required")
    dt, n_steps = config.dt, config.n_steps
    d = grid.dimension
    if truncation is None:
        truncation = config.truncation

    projector = None
    sigma = None if operator is None else operator.weights
    v = u0.copy()
    if truncation is not None:
        chi = projection_symbol(grid, truncation)
        v = grid.apply_multiplier(v, chi)
        if sigma is not None:
            sigma = sigma * chi
        if project_nonlinearity is None:
            project_nonlinearity = spec.criticality == 1
        if project_nonlinearity and np.any(chi < 1):
            projector = chi
    stepper = SplitStep(grid, spec, dt, config.dealias, projector)
    kick_phase = stepper.phase

    pair, deriv = spec.monitor_norm()
    q_mon, r_mon = pair.as_floats()
    weight_power = 4 / (d - 2) if d >= 3 else None

    def monitor_density(u):
        return sobolev_lebesgue_norm(grid, u, r_mon, deriv) ** q_mon

    psi_c = np.zeros_like(v) if operator is not None else None
    psi = np.zeros_like(v) if operator is not None else None

    keep = list(range(0, n_steps + 1, config.snapshot_stride))
    if keep[-1] != n_steps:
        keep.append(n_steps)
    n_keep = len(keep)
    times = np.asarray(keep, dtype=float) * dt
    mass_s = np.full((B, n_keep), np.nan)
    energy_s = np.full((B, n_keep), np.nan) if d >= 3 else None
    mon_s = np.full((B, n_keep), np.nan)
    pot_s = np.full((B, n_keep), np.nan) if weight_power is not None else None
    fields = {}
    if store_fields:
        fields = {k: np.full((B, n_keep) + grid.shape, np.nan + 0j) for k in ("u", "v", "psi")}

    alive = np.ones(B, dtype=bool)
    diverged = np.zeros(B, dtype=bool)
    stopped = np.zeros(B, dtype=bool)
    div_time = np.full(B, np.inf)
    stop_time = np.full(B, np.inf)
    mon_acc = np.zeros(B)
    pot_acc = np.zeros(B)

    u = v if psi is None else v + psi
    m0 = _mass(grid, u)
    sup_mass = m0.copy()
    hs2 = 0.0 if operator is None else float(np.sum(sigma**2))
    if math.isfinite(r_max) and not track_monitor:
        raise ValueError("a norm cap needs the monitor accumulator")
    mon_prev = monitor_density(u) if track_monitor else None
    pot_prev = (
        np.sum(modulus_power(u, weight_power), axis=grid.axes) * grid.cell_volume
        if weight_power is not None
        else None
    )
    sup_energy = np.full(B, -np.inf) if d >= 3 else None

    def record(slot, u):
        a = alive
        mass_s[a, slot] = _mass(grid, u[a])
        if energy_s is not None:
            e = _energy(grid, u[a])
            energy_s[a, slot] = e
            sup_energy[a] = np.maximum(sup_energy[a], e)
        if track_monitor:
            mon_s[a, slot] = mon_acc[a] ** (1 / q_mon)
        if pot_s is not None:
            pot_s[a, slot] = pot_acc[a]
        if store_fields:
            fields["u"][a, slot] = u[a]
            fields["v"][a, slot] = v[a]
            fields["psi"][a, slot] = 0 if psi is None else psi[a]

    record(0, u)
    slot = 1
    block = noise_block or max(1, min(n_steps, (1 << 22) // max(1, B * grid.size)))
    dW_block, block_start = None, 0

    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            t = n * dt
            if operator is not None and (dW_block is None or n - block_start >= dW_block.shape[0]):
                nb = min(block, n_steps - n)
                dW_block = np.stack([s.increments(nb, dt) for s in streams], axis=1)
                block_start = n
            f_now = psi if operator is not None else _broadcast_forcing(forcing, t, v.shape)
            v_new = stepper.nonlinear(v, f_now, dt / 2)
            v_new = stepper.linear(v_new)
            if operator is not None:
                psi_c_new = convolution_kick(psi_c, sigma, dW_block[n - block_start], kick_phase)
                psi_new = grid.from_coefficients(psi_c_new)
                f_next = psi_new
            else:
                f_next = _broadcast_forcing(forcing, t + dt, v.shape)
            v_new = stepper.nonlinear(v_new, f_next, dt / 2)
            u_new = v_new if operator is None else v_new + psi_new

            # frozen trajectories keep their last state
            if alive.all():
                v = v_new
                if operator is not None:
                    psi_c, psi = psi_c_new, psi_new
            else:
                v = np.where(_expand(alive, v), v_new, v)
                if operator is not None:
                    psi_c = np.where(_expand(alive, v), psi_c_new, psi_c)
                    psi = np.where(_expand(alive, v), psi_new, psi)
            u = v if operator is None else v + psi

            m = _mass(grid, u)
            ref = DIVERGENCE_FACTOR * (m0 + 2 * (t + dt) * hs2)
            bad = alive & (~np.all(np.isfinite(u), axis=grid.axes) | (m > np.maximum(ref, 1e-300)) & (m > 0))
            if bad.any():
                diverged |= bad
                div_time[bad] = t + dt
                alive &= ~bad
                v = np.where(_expand(bad, v), 0, v)
                if operator is not None:
                    psi_c = np.where(_expand(bad, v), 0, psi_c)
                    psi = np.where(_expand(bad, v), 0, psi)
                u = v if operator is None else v + psi
            sup_mass = np.where(alive, np.maximum(sup_mass, m), sup_mass)

            if track_monitor:
                dens = monitor_density(u)
                mon_acc = np.where(alive, mon_acc + 0.5 * dt * (mon_prev + dens), mon_acc)
                mon_prev = dens
            if pot_prev is not None:
                pot = np.sum(modulus_power(u, weight_power), axis=grid.axes) * grid.cell_volume
                pot_acc = np.where(alive, pot_acc + 0.5 * dt * (pot_prev + pot), pot_acc)
                pot_prev = pot
            if math.isfinite(r_max):
                cap = alive & (mon_acc ** (1 / q_mon) >= r_max)
                if cap.any():
                    stopped |= cap
                    stop_time[cap] = t + dt
            if slot < n_keep and keep[slot] == n + 1:
                record(slot, u)
                slot += 1
            if math.isfinite(r_max):
                alive &= ~stopped
            if not alive.any():
                break

    return BatchRecord(
        grid=grid,
        spec=spec,
        times=times,
        mass=mass_s,
        energy=energy_s,
        monitor=mon_s,
        potential_integral=pot_s,
        sup_mass=sup_mass,
        diverged=diverged,
        diverged_time=div_time,
        stopped=stopped,
        stop_time=stop_time,
        u=fields.get("u"),
        v=fields.get("v"),
        psi=fields.get("psi"),
        sup_energy=sup_energy,
    )


def _expand(mask: np.ndarray, like: np.ndarray) -> np.ndarray:
    return mask.reshape(mask.shape + (1,) * (like.ndim - 1))


def _single(field: GridField, **kw) -> TrajectoryRecord:
    rec = integrate(field.grid, field.values[None], **kw)
    return rec.trajectory(0)


def solve_deterministic(u0: GridField, spec: NonlinearitySpec, config: SolverConfig, **kw) -> TrajectoryRecord:
    """Defocusing NLS ``i u_t + Lap u = |u|^{p-1} u``."""
    return _single(u0, spec=spec, config=config, **kw)


def solve_perturbed_v(
    u0: GridField, f: Forcing | None, spec: NonlinearitySpec, config: SolverConfig, **kw
) -> TrajectoryRecord:
    """``i v_t + Lap v = N(v + f)`` with ``v(0) = u0``; ``f`` is a callable of ``t``."""
    return _single(u0, spec=spec, config=config, forcing=f, **kw)


def solve_snls(
    u0: GridField,
    op: MultiplierOperator,
    stream: NoiseStream,
    spec: NonlinearitySpec,
    config: SolverConfig,
    **kw,
) -> TrajectoryRecord:
    """Additive-noise SNLS via ``u = v + Psi`` with ``Psi`` advanced exactly in law."""
    return _single(u0, spec=spec, config=config, operator=op, streams=[stream], **kw)


def solve_truncated(
    u0: GridField,
    op: MultiplierOperator,
    stream: NoiseStream,
    N: float,
    spec: NonlinearitySpec,
    config: SolverConfig,
    project_nonlinearity: bool | None = None,
    **kw,
) -> TrajectoryRecord:
    """Frequency-truncated SNLS: data ``P_N u0``, noise ``P_N phi``.

    The energy-critical variant also projects the nonlinearity, which keeps
    the solution inside ``|xi| < 2N``.
    """
    return _single(
        u0,
        spec=spec,
        config=config,
        operator=op,
        streams=[stream],
        truncation=N,
        project_nonlinearity=project_nonlinearity,
        **kw,
    )


@dataclass
class MonitorReport:
    times: np.ndarray
    values: np.ndarray
    r_max: float
    crossed: bool
    crossing_time: float


def blowup_monitor(record: TrajectoryRecord, spec: NonlinearitySpec | None = None, r_max: float = math.inf) -> MonitorReport:
    """Running blowup-alternative norm on ``[0, t]`` and its first crossing of ``r_max``."""
    vals = np.asarray(record.monitor, dtype=float)
    if record.diverged:
        vals = np.where(record.times >= record.diverged_time, np.inf, vals)
    finite = np.where(np.isnan(vals), -np.inf, vals)
    hit = np.nonzero(finite >= r_max)[0]
    crossed = hit.size > 0
    return MonitorReport(record.times, vals, r_max, crossed, float(record.times[hit[0]]) if crossed else math.inf)


# Initial-data library.

def initial_zero(grid: SpectralGrid) -> GridField:
    return GridField.zeros(grid)


def initial_plane_wave(grid: SpectralGrid, k: Sequence[int] | int, amplitude: complex) -> GridField:
    """``A exp(i xi_k . x)`` with ``k`` an integer mode index per axis."""
    k = np.atleast_1d(k)
    if k.size != grid.dimension:
        raise ValueError("mode index needs one entry per dimension")
    x = grid.coordinates()
    phase = sum(2 * np.pi * k[a] / grid.length * x[a] for a in range(grid.dimension))
    return GridField(grid, amplitude * np.exp(1j * phase))


def initial_gaussian(
    grid: SpectralGrid,
    amplitude: complex = 1.0,
    width: float = 1.0,
    center: Sequence[float] | float | None = None,
) -> GridField:
    """``A exp(-|x - c|^2 / (2 width^2))`` with periodic distance to the centre."""
    L = grid.length
    c = np.full(grid.dimension, L / 2) if center is None else np.broadcast_to(center, (grid.dimension,))
    x = grid.coordinates()
    r2 = 0.0
    for a in range(grid.dimension):
        dx = (x[a] - c[a] + L / 2) % L - L / 2
        r2 = r2 + dx**2
    return GridField(grid, amplitude * np.exp(-r2 / (2 * width**2)))


def initial_random_sobolev(grid: SpectralGrid, s: float, amplitude: float, seed: int) -> GridField:
    """Random field with coefficients ``~ <xi>^{-(s + d/2 + 1/2)}``, normalised to ``||u||_{H^s} = amplitude``."""
    rng = np.random.Generator(np.random.Philox(key=np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, 0xA5A5], dtype=np.uint64)))
    g = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c = g * grid.japanese() ** (-(s + grid.dimension / 2 + 0.5))
    c = np.where(grid.nyquist_mask(), 0, c)
    norm = np.sqrt(np.sum(sobolev_weight(grid, s) * np.abs(c) ** 2))
    return GridField.from_coefficients(grid, c * (amplitude / norm))
