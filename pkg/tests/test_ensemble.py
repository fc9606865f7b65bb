import numpy as np
import pytest

from snlsim.dynamics import NonlinearitySpec, SolverConfig, initial_gaussian, initial_zero, solve_deterministic
from snlsim.ensemble import (
    EnsembleConfig,
    control_config,
    energy_balance_test,
    mass_balance_test,
    run_ensemble,
    sup_moment_estimate,
    truncation_convergence_test,
)
from snlsim.noise import MultiplierOperator, hs_norm
from snlsim.spectral import make_grid


def _cfg(g, op, u0=None, n=64, spec=None, T=0.5, dt=0.01, stride=5, **kw):
    spec = spec or NonlinearitySpec(g.dimension, 0)
    u0 = initial_gaussian(g) if u0 is None else u0
    return EnsembleConfig(g, spec, op, SolverConfig(dt, T, snapshot_stride=stride), u0, n, **kw)


@pytest.fixture
def g():
    return make_grid(1, 32, 8 * np.pi)


def test_config_validation(g):
    with pytest.raises(ValueError):
        _cfg(g, MultiplierOperator.zero(g), n=1)
    with pytest.raises(ValueError):
        _cfg(g, MultiplierOperator.zero(make_grid(1, 16, 1.0)))


def test_zero_noise_matches_deterministic(g):
    cfg = _cfg(g, MultiplierOperator.zero(g), n=2)
    stats = run_ensemble(cfg)
    det = solve_deterministic(cfg.u0, cfg.spec, cfg.solver)
    assert np.allclose(stats.mass, det.mass[None], rtol=1e-13, atol=0)
    rep = mass_balance_test(stats)
    assert rep.passes and np.max(np.abs(rep.deviation)) <= 1e-10 * stats.mass[0, 0]
    sup = sup_moment_estimate(stats, 2.0, n_boot=50)
    assert sup["mean"] == pytest.approx(det.mass[0], rel=1e-12)


def test_reproducible_and_thread_independent(g, tmp_path):
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    a = run_ensemble(_cfg(g, op, seed=7, chunk_size=16), tmp_path / "a")
    b = run_ensemble(_cfg(g, op, seed=7, chunk_size=16, threads=3), tmp_path / "b")
    assert np.array_equal(a.mass, b.mass)
    for name in ("stats.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = run_ensemble(_cfg(g, op, seed=8, chunk_size=16))
    assert not np.array_equal(a.mass, c.mass)


def test_isometry_linear_flow(g):
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    spec = NonlinearitySpec(1, 0, enabled=False)
    stats = run_ensemble(_cfg(g, op, u0=initial_zero(g), n=512, spec=spec, chunk_size=128))
    mean, se = stats.mean_se(stats.mass)
    pred = 2 * stats.times * hs_norm(op) ** 2
    assert np.all(np.abs(mean - pred) <= 4 * np.nan_to_num(se) + 1e-14)


def test_mass_balance_with_control(g):
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    cfg = _cfg(g, op, n=256, seed=3, chunk_size=128)
    stats = run_ensemble(cfg)
    ctrl = run_ensemble(control_config(cfg))
    assert np.allclose(ctrl.times, stats.times)
    rep = mass_balance_test(stats, ctrl)
    assert rep.passes, rep.metrics()


def test_energy_balance_small_time():
    g = make_grid(3, 8, 4 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.5)
    cfg = _cfg(g, op, u0=initial_zero(g), n=64, spec=NonlinearitySpec(3, 1), T=0.02, dt=0.005, stride=1, chunk_size=64)
    stats = run_ensemble(cfg)
    rep = energy_balance_test(stats)
    assert rep.passes, rep.metrics()
    with pytest.raises(ValueError):
        energy_balance_test(run_ensemble(_cfg(make_grid(1, 16, 1.0), MultiplierOperator.zero(make_grid(1, 16, 1.0)), n=2)))


def test_truncation_convergence(g):
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    cfg = SolverConfig(0.01, 0.2)
    nyq = g.nyquist_frequency
    rep = truncation_convergence_test(initial_gaussian(g), op, NonlinearitySpec(1, 0), cfg, [nyq / 4, nyq / 2, nyq], 3, seed=1)
    assert rep.passes
    assert np.all(rep.distances[:, 0] > rep.distances[:, 1])
