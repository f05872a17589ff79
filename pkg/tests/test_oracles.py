"""The fast oracle operators against the loop oracles they stand in for."""

import numpy as np

import oracles


def test_fast_convolutions_match_loops():
    rng = np.random.default_rng(11)
    for n, m in ((1, 1), (5, 3), (9, 12)):
        a, b = rng.standard_normal(n), rng.standard_normal(m)
        assert np.allclose(oracles.cheb_conv_fast(a, b), oracles.cheb_conv(a, b), atol=1e-13)
    u = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    v = rng.standard_normal((4, 4))
    assert np.allclose(oracles.taylor_conv_fast(u, v), oracles.taylor_conv(u, v), atol=1e-13)


def test_chart_value_is_the_double_series():
    rng = np.random.default_rng(12)
    a = rng.standard_normal((4, 3, 3)) + 1j * rng.standard_normal((4, 3, 3))
    th = 0.7 * np.exp(0.4j)
    ref = sum(a[:, i, j] * th ** i * np.conj(th) ** j for i in range(3) for j in range(3)).real
    assert np.allclose(oracles.chart_value(a, 0.7, 0.4), ref)


def test_bvp_F_matches_pointwise_field_values():
    """Rows k >= 1 equal 2k x_k + L (g_{k+1} - g_{k-1}) with g fitted from point values."""
    rng = np.random.default_rng(13)
    x = rng.standard_normal((4, 6)) * 0.3 ** np.arange(6)
    L, beta = 0.8, 1.1
    eta, F = oracles.bvp_F(beta, L, 0.0, x, np.zeros(4))
    t = np.cos(np.pi * (np.arange(40) + 0.5) / 40)
    g = np.array([oracles.field(beta)(0.0, oracles.cheb_series(x, s)) for s in t]).T
    gc = np.array([np.polynomial.chebyshev.chebfit(t, g[i], 30) for i in range(4)])
    gc[:, 1:] *= 0.5
    for k in range(1, 8):
        ref = 2 * k * (x[:, k] if k < 6 else 0.0) + L * (gc[:, k + 1] - gc[:, k - 1])
        assert np.allclose(F[:, k], ref, atol=1e-10)
    assert np.allclose(eta, [oracles.cheb_series(x[1], -1.0), oracles.cheb_series(x[3], -1.0)])
