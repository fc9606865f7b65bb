import numpy as np
import pytest

from snlsim.dynamics import NonlinearitySpec, SolverConfig, initial_gaussian, initial_zero, solve_perturbed_v
from snlsim.picard import (
    ThresholdConfig,
    contraction_norm,
    estimate_eta0,
    gamma_map,
    lwp_threshold_check,
    picard_fixed_point,
    picard_iterates,
)
from snlsim.propagator import free_evolution
from snlsim.spectral import energy_critical_pair, make_grid, mass_critical_pair


@pytest.fixture
def setup():
    g = make_grid(1, 64, 8 * np.pi)
    return g, NonlinearitySpec(1, 0), np.linspace(0, 1, 201)


def test_contraction_norm_choice():
    assert contraction_norm(NonlinearitySpec(2, 0)) == (mass_critical_pair(2), 0)
    assert contraction_norm(NonlinearitySpec(3, 1)) == (energy_critical_pair(3), 1)
    assert contraction_norm(NonlinearitySpec(3, 1), weak=True)[1] == 0


def test_threshold_config_validation():
    with pytest.raises(ValueError):
        ThresholdConfig(0.6, 0.5, mass_critical_pair(1), (0, 1))


def test_gamma_zero_integrand(setup):
    g, spec, t = setup
    u0 = initial_gaussian(g, 0.5)
    f = np.stack([initial_gaussian(g, 0.1, 2.0).values * np.cos(s) for s in t])
    out = gamma_map(-f, u0, f, spec, t)
    assert np.allclose(out, free_evolution(g, u0.values, t), atol=1e-14)


def test_zero_fixed_point(setup):
    g, spec, t = setup
    z = np.zeros((t.size,) + g.shape, complex)
    assert np.all(gamma_map(z, initial_zero(g), None, spec, t) == 0)
    tr = picard_iterates(initial_zero(g), None, spec, t, 4)
    assert all(np.all(P == 0) for P in tr.iterates)


def test_small_data_contracts(setup):
    g, spec, t = setup
    tr = picard_iterates(initial_gaussian(g, 0.5), None, spec, t, 10)
    assert tr.consecutive_contractions(0.5) >= 5
    assert np.all(np.diff(np.log(tr.distances[:6])) < 0)


def test_fixed_point_matches_solver(setup):
    g, spec, t = setup
    u0 = initial_gaussian(g, 0.5)
    P, _ = picard_fixed_point(u0, None, spec, t, 1e-12)
    rec = solve_perturbed_v(u0, None, spec, SolverConfig(t[1] - t[0], 1.0))
    assert np.max(np.abs(P - rec.v)) < 1e-5


def test_fixed_point_failure(setup):
    g, spec, t = setup
    with pytest.raises(RuntimeError):
        picard_fixed_point(initial_gaussian(g, 3.0), None, spec, t, 1e-12, max_iter=5)


def test_lwp_zero_and_linearity(setup):
    g, spec, t = setup
    rep = lwp_threshold_check(initial_zero(g), None, spec, t, 0.3)
    assert rep.lhs == 0 and rep.solution_norm == 0 and rep.bound_holds
    a = lwp_threshold_check(initial_gaussian(g, 0.2), None, spec, t, 0.3)
    b = lwp_threshold_check(initial_gaussian(g, 0.4), None, spec, t, 0.3)
    assert b.lhs == pytest.approx(2 * a.lhs, rel=1e-12)
    assert a.passes and a.bound_holds
    assert not b.passes and b.solution_norm is None


def test_eta0_scan(setup):
    g, spec, t = setup
    eta0, table = estimate_eta0(initial_gaussian(g, 1.0), None, spec, t, [0.25, 0.5, 4.0], J=6)
    assert [row["scale"] for row in table] == [0.25, 0.5, 4.0]
    assert eta0 == pytest.approx(table[1]["lhs"])
    assert table[2]["max_ratio"] > 0.5
