import numpy as np
import pytest

from snlsim.dynamics import initial_gaussian, initial_plane_wave
from snlsim.propagator import apply_S, duhamel_integral, duhamel_series, free_evolution, plan_for
from snlsim.spectral import GridField, lebesgue_norm, sobolev_norm

from conftest import random_field


def test_phase_unimodular(grid2):
    ph = plan_for(grid2).phase(0.37)
    assert np.allclose(np.abs(ph), 1.0, atol=1e-15)
    assert not ph.flags.writeable


def test_identity_and_plane_wave(grid2):
    f = initial_plane_wave(grid2, [2, -1], 0.5)
    assert np.array_equal(apply_S(f, 0.0).values, f.values)
    t = 0.8
    k2 = (2 * np.pi / grid2.length) ** 2 * 5
    assert np.allclose(apply_S(f, t).values, np.exp(-1j * k2 * t) * f.values, atol=1e-13)


def test_group_law_and_unitarity(grid3, rng):
    f = random_field(grid3, rng)
    a = apply_S(apply_S(f, 0.3), 0.45)
    b = apply_S(f, 0.75)
    assert np.max(np.abs(a.values - b.values)) < 1e-12
    for s in (0.0, 1.0, 2.0):
        assert sobolev_norm(a, s) == pytest.approx(sobolev_norm(f, s), rel=1e-12)
    assert apply_S(f, -2.0).values.shape == f.values.shape


def test_duhamel_zero_source(grid1):
    out = duhamel_integral(lambda t: np.zeros(grid1.shape), 1.0, 10, grid=grid1)
    assert np.all(out.values == 0)


def test_duhamel_free_source_closed_form(grid1):
    g = initial_gaussian(grid1, 1.0, 1.0)
    t = 0.7
    out = duhamel_integral(lambda s: apply_S(g, s), t, 7)
    expect = -1j * t * apply_S(g, t).values
    assert np.max(np.abs(out.values - expect)) < 1e-12


def test_duhamel_second_order(grid1):
    g = initial_gaussian(grid1, 1.0, 1.0)
    F = lambda s: GridField(grid1, np.cos(3 * s) * g.values)
    ref = duhamel_integral(F, 1.0, 640).values
    e1 = lebesgue_norm(GridField(grid1, duhamel_integral(F, 1.0, 40).values - ref), 2)
    e2 = lebesgue_norm(GridField(grid1, duhamel_integral(F, 1.0, 80).values - ref), 2)
    assert 3.5 < e1 / e2 < 4.5


def test_duhamel_series_matches_integral(grid1):
    g = initial_gaussian(grid1, 1.0, 1.0)
    times = np.linspace(0, 1, 21)
    F = np.stack([np.sin(2 * s) * g.values for s in times])
    series = duhamel_series(grid1, times, F)
    direct = duhamel_integral(lambda s: np.sin(2 * s) * g.values, 1.0, 20, grid=grid1).values
    assert np.max(np.abs(series[-1] - direct)) < 1e-13
    assert np.all(series[0] == 0)


def test_free_evolution_matches_apply_S(grid2, rng):
    f = random_field(grid2, rng)
    times = np.array([0.0, 0.25, 1.0])
    out = free_evolution(grid2, f.values, times)
    for n, t in enumerate(times):
        assert np.max(np.abs(out[n] - apply_S(f, t).values)) < 1e-13


def test_duhamel_continuity(grid1):
    g = initial_gaussian(grid1, 1.0, 1.0)
    jumps = []
    for n in (50, 100, 200):
        times = np.linspace(0, 1, n + 1)
        F = np.stack([g.values] * (n + 1))
        D = duhamel_series(grid1, times, F)
        jumps.append(np.max(np.sqrt(np.sum(np.abs(np.diff(D, axis=0)) ** 2, axis=1))))
    assert jumps[0] > jumps[1] > jumps[2]
