import numpy as np
import pytest

from snlsim.noise import (
    ConvolutionState,
    MultiplierOperator,
    NoiseStream,
    advance_convolution,
    convolution_path_stats,
    hs_norm,
    sample_increment,
    simulate_convolution,
)
from snlsim.spectral import make_grid, sobolev_norm


@pytest.fixture
def g64():
    return make_grid(1, 64, 2 * np.pi)


def test_hs_single_mode(g64):
    op = MultiplierOperator.explicit(g64, {(0,): 1.0})
    assert hs_norm(op, 0.0) == pytest.approx(1.0)
    op = MultiplierOperator.explicit(g64, {(5,): 0.3})
    assert hs_norm(op, 1.0) == pytest.approx(0.3 * np.sqrt(26))


def test_hs_decay_direct_sum(g64):
    op = MultiplierOperator.decay(g64, 1.0, 1.0, zero_nyquist=False)
    k = np.arange(-32, 32)
    assert hs_norm(op, 0.0) ** 2 == pytest.approx(np.sum(1.0 / (1 + k**2)), rel=1e-13)
    op0 = MultiplierOperator.decay(g64, 1.0, 1.0)
    assert hs_norm(op0, 0.0) ** 2 == pytest.approx(np.sum(1.0 / (1 + k**2)) - 1 / (1 + 32**2), rel=1e-13)


def test_operator_validation(g64):
    with pytest.raises(ValueError):
        MultiplierOperator(g64, -np.ones(g64.shape))
    with pytest.raises(ValueError):
        MultiplierOperator.explicit(g64, {(32,): 1.0})
    with pytest.raises(ValueError):
        MultiplierOperator.explicit(g64, {(1, 2): 1.0})


def test_increment_moments(g64):
    s = NoiseStream(7, 3, g64.shape)
    dW = s.increments(100_000 // 64 + 1, 1.0).reshape(-1, 64)
    x = np.abs(dW.ravel()[:100_000]) ** 2
    se = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(x.mean() - 2.0) <= 3 * se
    a, b = dW[:, 1], dW[:, 2]
    prod = (a * np.conj(b)).real
    assert abs(prod.mean()) <= 3 * prod.std(ddof=1) / np.sqrt(prod.size)


def test_stream_determinism_and_seek(g64):
    a = NoiseStream(11, 2, g64.shape).increments(10, 0.1)
    b = NoiseStream(11, 2, g64.shape).increments(10, 0.1)
    assert np.array_equal(a, b)
    c = NoiseStream(11, 2, g64.shape, step=6).increments(4, 0.1)
    assert np.array_equal(a[6:], c)
    other = NoiseStream(11, 3, g64.shape).increments(10, 0.1)
    assert not np.allclose(a, other)


def test_aggregate_couples_fine_steps(g64):
    fine = NoiseStream(5, 0, g64.shape).increments(8, 0.05)
    coarse = NoiseStream(5, 0, g64.shape, aggregate=2).increments(4, 0.1)
    assert np.allclose(coarse, fine[0::2] + fine[1::2], atol=1e-14)


def test_increment_bad_delta(g64):
    with pytest.raises(ValueError):
        sample_increment(NoiseStream(0, 0, g64.shape), 0.0)


def test_zero_operator_gives_zero(g64):
    paths = simulate_convolution(MultiplierOperator.zero(g64), 1, 3, 0.01, 20)
    assert np.all(paths.values == 0)
    st = convolution_path_stats(paths, 0.0, 6, 6)
    assert st["sup_sobolev"].mean == 0 and st["strichartz"].mean == 0


def test_state_update_matches_batch(g64):
    op = MultiplierOperator.decay(g64, 0.5, 1.0)
    state = ConvolutionState.start(op, NoiseStream(9, 4, g64.shape))
    for _ in range(10):
        state = advance_convolution(state, 0.01)
    paths = simulate_convolution(op, 9, 1, 0.01, 10, stride=10, first_stream=4)
    assert np.allclose(paths.values[0, -1], state.field.values, atol=1e-13)
    assert state.t == pytest.approx(0.1)


def test_adaptedness_prefix(g64):
    op = MultiplierOperator.decay(g64, 0.5, 1.0)
    short = simulate_convolution(op, 3, 2, 0.01, 10)
    long = simulate_convolution(op, 3, 2, 0.01, 30)
    assert np.array_equal(short.values, long.values[:, :11])


def test_ito_isometry():
    g = make_grid(1, 32, 2 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    t = 0.5
    paths = simulate_convolution(op, 123, 2000, 0.05, 10, stride=10)
    m = np.array([sobolev_norm(paths_field, 0.0) ** 2 for paths_field in _fields(paths, -1)])
    se = m.std(ddof=1) / np.sqrt(m.size)
    assert abs(m.mean() - 2 * t * hs_norm(op) ** 2) <= 4 * se


def test_linear_in_operator():
    g = make_grid(1, 32, 2 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    a = simulate_convolution(op, 8, 2, 0.01, 5)
    b = simulate_convolution(op.scaled(2.0), 8, 2, 0.01, 5)
    assert np.allclose(b.values, 2 * a.values, atol=1e-14)


def test_variance_scales_quartic():
    g = make_grid(1, 16, 2 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.0)
    a = simulate_convolution(op, 8, 400, 0.1, 5, stride=5)
    b = simulate_convolution(op.scaled(2.0), 8, 400, 0.1, 5, stride=5)
    ma = np.sum(np.abs(a.values[:, -1]) ** 2, axis=-1)
    mb = np.sum(np.abs(b.values[:, -1]) ** 2, axis=-1)
    assert mb.var() / ma.var() == pytest.approx(16.0, rel=1e-10)


def test_moment_estimate_regularity():
    g = make_grid(1, 64, 2 * np.pi)
    op = MultiplierOperator.decay(g, 0.5, 1.5)
    paths = simulate_convolution(op, 2, 200, 0.01, 50, stride=5)
    st = convolution_path_stats(paths, 0.5, 6, 6, p=2)
    assert np.isfinite(st["sup_sobolev"].mean) and st["sup_sobolev"].se > 0
    assert np.isfinite(st["strichartz"].ratio)
    with pytest.raises(ValueError):
        convolution_path_stats(simulate_convolution(MultiplierOperator.zero(make_grid(3, 8, 1.0)), 0, 2, 0.1, 1), 0, 6, 7)


def _fields(paths, n):
    from snlsim.spectral import GridField

    return [GridField(paths.grid, v) for v in paths.values[:, n]]
