import numpy as np
import pytest
from scipy.integrate import solve_ivp

from snlsim.dynamics import (
    NonlinearitySpec,
    SampledForcing,
    SolverConfig,
    blowup_monitor,
    energy,
    initial_gaussian,
    initial_plane_wave,
    initial_random_sobolev,
    initial_zero,
    mass,
    modulus_power,
    nonlinearity_eval,
    solve_deterministic,
    solve_perturbed_v,
    solve_snls,
    solve_truncated,
)
from snlsim.noise import MultiplierOperator, NoiseStream
from snlsim.spectral import GridField, make_grid, sobolev_norm


def test_spec_validation():
    assert NonlinearitySpec(1, 0).p == 5
    assert NonlinearitySpec(2, 0).p == 3
    assert NonlinearitySpec(3, 1).p == 5
    assert NonlinearitySpec(4, 1).p == 3
    with pytest.raises(ValueError):
        NonlinearitySpec(2, 1)
    with pytest.raises(ValueError):
        NonlinearitySpec(1)
    with pytest.raises(ValueError):
        NonlinearitySpec(1, 0, power=3)


def test_nonlinearity_values():
    g1 = make_grid(1, 16, 1.0)
    assert np.all(nonlinearity_eval(initial_zero(g1), NonlinearitySpec(1, 0)).values == 0)
    one = GridField(g1, np.ones(g1.shape, complex))
    assert np.allclose(nonlinearity_eval(one, NonlinearitySpec(1, 0)).values, 1.0)
    g3 = make_grid(3, 8, 1.0)
    u = GridField(g3, np.full(g3.shape, 2j))
    assert np.allclose(nonlinearity_eval(u, NonlinearitySpec(3, 1)).values, 32j)
    assert np.allclose(modulus_power(np.array([3.0 + 4j]), 0.5), np.sqrt(5))


def test_mass_and_energy_closed_forms():
    g = make_grid(2, 16, 3.0)
    assert mass(GridField(g, np.full(g.shape, 1 - 1j))) == pytest.approx(2 * g.volume)
    assert mass(initial_plane_wave(g, [1, 2], 0.5)) == pytest.approx(0.25 * g.volume)
    g4 = make_grid(4, 8, 2 * np.pi)
    A = 0.7
    pw = initial_plane_wave(g4, [1, 1, 0, 0], A)
    expect = 0.5 * 2 * A**2 * g4.volume + A**4 * g4.volume / 4
    assert energy(pw) == pytest.approx(expect, rel=1e-12)
    assert energy(initial_zero(make_grid(3, 8, 1.0))) == 0
    with pytest.raises(ValueError):
        energy(initial_zero(g))


def test_mass_gaussian_refinement():
    a = mass(initial_gaussian(make_grid(1, 64, 8 * np.pi)))
    b = mass(initial_gaussian(make_grid(1, 256, 8 * np.pi)))
    assert abs(a - b) < 1e-8
    assert b == pytest.approx(np.sqrt(np.pi), rel=1e-10)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(0.3, 1.0)
    with pytest.raises(ValueError):
        SolverConfig(0.1, 1.0, scheme="euler")
    assert SolverConfig(0.1, 1.0).n_steps == 10


def test_zero_solution_and_monitor():
    g = make_grid(1, 32, 2 * np.pi)
    rec = solve_deterministic(initial_zero(g), NonlinearitySpec(1, 0), SolverConfig(0.1, 1.0))
    assert np.all(rec.u == 0) and np.all(rec.monitor == 0)
    assert not blowup_monitor(rec, r_max=1.0).crossed


def test_constant_data_constant_modulus():
    g = make_grid(1, 32, 2 * np.pi)
    c = 0.8 + 0.3j
    rec = solve_deterministic(GridField(g, np.full(g.shape, c)), NonlinearitySpec(1, 0), SolverConfig(0.01, 1.0))
    t = rec.times[-1]
    exact = c * np.exp(-1j * abs(c) ** 4 * t)
    assert np.allclose(np.abs(rec.u), abs(c), atol=1e-13)
    assert np.allclose(rec.u[-1], exact, atol=1e-12)


def test_plane_wave_exact():
    g = make_grid(2, 16, 2 * np.pi)
    A, k = 0.6, np.array([1, 2])
    rec = solve_deterministic(initial_plane_wave(g, k, A), NonlinearitySpec(2, 0), SolverConfig(0.01, 0.5))
    omega = np.sum(k**2) + A**2
    exact = initial_plane_wave(g, k, A).values * np.exp(-1j * omega * 0.5)
    assert np.max(np.abs(rec.u[-1] - exact)) < 1e-10


def test_conservation_second_order():
    g = make_grid(1, 64, 8 * np.pi)
    spec = NonlinearitySpec(1, power=3)
    u0 = initial_gaussian(g, 1.0, 1.0)
    ref = solve_deterministic(u0, spec, SolverConfig(0.05 / 8, 1.0)).u[-1]
    errs = []
    for dt in (0.05, 0.025):
        u = solve_deterministic(u0, spec, SolverConfig(dt, 1.0)).u[-1]
        errs.append(np.linalg.norm(u - ref))
    assert 3.5 < errs[0] / errs[1] < 4.5
    rec = solve_deterministic(u0, spec, SolverConfig(0.05, 1.0))
    assert np.max(np.abs(rec.mass - rec.mass[0])) <= 1e-12 * rec.mass[0]


def test_zero_forcing_matches_deterministic():
    g = make_grid(1, 64, 8 * np.pi)
    spec = NonlinearitySpec(1, 0)
    cfg = SolverConfig(0.01, 0.5)
    u0 = initial_gaussian(g)
    a = solve_deterministic(u0, spec, cfg)
    b = solve_perturbed_v(u0, lambda t: np.zeros(g.shape), spec, cfg)
    assert np.max(np.abs(a.u - b.v)) < 1e-12


def test_constant_forcing_ode_oracle():
    g = make_grid(1, 16, 2 * np.pi)
    spec = NonlinearitySpec(1, power=3)
    c0, fval = 0.5 + 0.2j, 0.3 - 0.1j
    T = 1.0
    rec = solve_perturbed_v(GridField(g, np.full(g.shape, c0)), lambda t: np.full(g.shape, fval), spec, SolverConfig(1e-3, T))

    def rhs(t, y):
        v = y[0] + 1j * y[1]
        w = v + fval
        dv = -1j * abs(w) ** 2 * w
        return [dv.real, dv.imag]

    sol = solve_ivp(rhs, (0, T), [c0.real, c0.imag], rtol=1e-12, atol=1e-13)
    exact = sol.y[0, -1] + 1j * sol.y[1, -1]
    assert abs(rec.v[-1, 0] - exact) < 1e-8
    assert np.ptp(np.abs(rec.v[-1])) < 1e-13


def test_sampled_forcing_interpolates():
    g = make_grid(1, 8, 1.0)
    times = np.linspace(0, 1, 3)
    vals = np.stack([np.full(g.shape, t) for t in times]).astype(complex)
    f = SampledForcing(times, vals)
    assert np.allclose(f(0.25), 0.25)
    assert np.allclose(f.scaled(2)(0.5), 1.0)


def test_zero_noise_reduces_to_deterministic():
    g = make_grid(1, 64, 8 * np.pi)
    spec = NonlinearitySpec(1, 0)
    cfg = SolverConfig(0.01, 0.5)
    u0 = initial_gaussian(g)
    a = solve_deterministic(u0, spec, cfg)
    b = solve_snls(u0, MultiplierOperator.zero(g), NoiseStream(1, 0, g.shape), spec, cfg)
    assert np.max(np.abs(a.u - b.u)) < 1e-12
    assert np.all(b.psi == 0)


def test_snls_decomposition_and_mass():
    g = make_grid(1, 64, 8 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    rec = solve_snls(initial_gaussian(g), op, NoiseStream(3, 1, g.shape), NonlinearitySpec(1, 0), SolverConfig(0.01, 0.5))
    assert np.array_equal(rec.u, rec.v + rec.psi)
    assert rec.sup_mass >= rec.mass[0]


def test_truncation_full_band_matches():
    g = make_grid(1, 64, 8 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    spec = NonlinearitySpec(1, 0)
    cfg = SolverConfig(0.01, 0.5)
    u0 = initial_gaussian(g)
    a = solve_snls(u0, op, NoiseStream(4, 0, g.shape), spec, cfg)
    b = solve_truncated(u0, op, NoiseStream(4, 0, g.shape), g.max_frequency, spec, cfg)
    assert np.max(np.abs(a.u - b.u)) < 1e-10


def test_truncated_energy_critical_band_limited():
    g = make_grid(3, 16, 4 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.5)
    N = g.nyquist_frequency / 4
    rec = solve_truncated(initial_gaussian(g, 0.5, 1.5), op, NoiseStream(2, 0, g.shape), N, NonlinearitySpec(3, 1), SolverConfig(0.01, 0.1))
    c = g.to_coefficients(rec.u[-1])
    outside = np.sum(np.abs(c[g.xi_abs >= 2 * N]) ** 2)
    assert outside <= 1e-20 * np.sum(np.abs(c) ** 2)


def test_norm_cap_stops():
    g = make_grid(1, 64, 8 * np.pi)
    spec = NonlinearitySpec(1, 0)
    rec = solve_deterministic(initial_gaussian(g, 1.0), spec, SolverConfig(0.01, 1.0), r_max=0.5)
    rep = blowup_monitor(rec, r_max=0.5)
    assert rec.stopped and rep.crossed and rep.crossing_time <= rec.stop_time + 1e-12


def test_random_sobolev_normalised():
    g = make_grid(2, 16, 2 * np.pi)
    u = initial_random_sobolev(g, 0.7, 1.3, seed=5)
    assert sobolev_norm(u, 0.7) == pytest.approx(1.3, rel=1e-12)
    assert np.array_equal(u.values, initial_random_sobolev(g, 0.7, 1.3, seed=5).values)
