import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from bridgeorbit.interval_core import Interval
from bridgeorbit.seq_space import (cauchy2, cheb_weights, conv1, conv1_matrix, norm_cheb,
                                   norm_dual, norm_taylor, opnorm_block_cheb, opnorm_block_taylor,
                                   qk_all, shift_diff, triangle)

coef = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_triangle_ordering_is_by_degree():
    t = triangle(4)
    assert t.size == 10
    assert list(zip(t.alpha1[:6], t.alpha2[:6])) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert np.all(np.diff(t.degree) >= 0)


def test_cheb_weights():
    w = cheb_weights(4, 1.5)
    assert np.allclose(w.mid, [1.0, 3.0, 4.5, 6.75])


def test_shift_diff_small_case():
    x = np.array([1.0, 4.0, 9.0, 16.0, 25.0])
    assert np.array_equal(shift_diff(x), [0.0, 8.0, 12.0, 16.0, -16.0, -25.0])
    assert np.array_equal(shift_diff(x, 3), [0.0, 8.0, 12.0])


@given(arrays(float, 7, elements=coef), arrays(float, 5, elements=coef))
def test_conv1_matches_loops(a, b):
    assert np.allclose(conv1(a, b), oracles.cheb_conv(a, b), atol=1e-9)


def test_conv1_is_pointwise_product():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(6), rng.standard_normal(4)
    t = np.linspace(-1, 1, 9)
    c = conv1(a, b)
    lhs = np.array([oracles.cheb_series(c, s) for s in t])
    rhs = np.array([oracles.cheb_series(a, s) * oracles.cheb_series(b, s) for s in t])
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_conv1_interval_encloses_float():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(6), rng.standard_normal(6)
    c = conv1(Interval(a), Interval(b))
    ref = conv1(a, b)
    assert np.all(c.lo <= ref) and np.all(ref <= c.hi)


def test_conv1_matrix_acts_as_convolution():
    rng = np.random.default_rng(2)
    b, v = rng.standard_normal(5), rng.standard_normal(6)
    M = conv1_matrix(b, 10, 6)
    assert np.allclose(M @ v, conv1(b, v)[:10])


def test_cauchy2_matches_loops():
    rng = np.random.default_rng(4)
    u = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    v = rng.standard_normal((3, 3))
    assert np.allclose(cauchy2(u, v), oracles.taylor_conv(u, v))


@given(arrays(float, 6, elements=coef), st.floats(1.0, 1.3))
def test_norm_cheb_matches_definition(a, nu):
    n = norm_cheb(Interval(a), nu)
    ref = oracles.cheb_norm(a, nu)
    assert float(n.lo) <= ref * (1 + 1e-13) + 1e-300 and ref <= float(n.hi) * (1 + 1e-13) + 1e-300


def test_norm_taylor_matches_definition():
    rng = np.random.default_rng(5)
    u = rng.standard_normal((4, 4))
    n = norm_taylor(Interval(u), 1.1)
    assert np.isclose(float(n.mid), oracles.taylor_norm(u, 1.1))


@given(arrays(float, 6, elements=coef), arrays(float, 6, elements=coef), st.floats(1.0, 1.2))
def test_dual_pairing_bound(c, a, nu):
    """|sum c_k a_k| <= ||c||_dual ||a||_{1,nu}."""
    lhs = abs(float(np.dot(c, a)))
    rhs = float(norm_dual(Interval(c), nu).hi) * oracles.cheb_norm(a, nu)
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@given(arrays(float, 6, elements=coef), arrays(float, 6, elements=coef), st.floats(1.0, 1.3))
def test_banach_algebra_cheb(a, b, nu):
    lhs = oracles.cheb_norm(oracles.cheb_conv(a, b), nu)
    assert lhs <= oracles.cheb_norm(a, nu) * oracles.cheb_norm(b, nu) * (1 + 1e-12) + 1e-300


def test_opnorm_cheb_matches_brute_force():
    rng = np.random.default_rng(6)
    G = rng.standard_normal((9, 9))
    w = oracles.cheb_weights(9, 1.05)
    assert np.isclose(opnorm_block_cheb(G, 1.05), oracles.brute_opnorm(G, w), rtol=1e-12)
    assert opnorm_block_cheb(np.zeros((3, 3)), 1.05, tail=0.25) == 0.25


def test_opnorm_taylor_matches_brute_force():
    N = 4
    rng = np.random.default_rng(7)
    M = triangle(N).size
    G = rng.standard_normal((M, M))
    w = oracles.taylor_weights(N, 1.2)
    assert np.isclose(opnorm_block_taylor(G, 1.2, N), oracles.brute_opnorm(G, w), rtol=1e-12)


def test_qk_dominates_basis_vectors():
    rng = np.random.default_rng(8)
    a = rng.standard_normal(8) * 0.5 ** np.arange(8)
    nu, m = 1.05, 6
    Q, Qhat = qk_all(a, nu, m, k_max=10)
    for j in range(30):
        v = np.zeros(30)
        v[j] = 1.0 / oracles.cheb_weights(30, nu)[j]
        c = oracles.cheb_conv(a, v)
        assert np.all(np.abs(c[:11]) <= Q * (1 + 1e-12))
        if j >= m:
            assert np.all(np.abs(c[:11]) <= Qhat * (1 + 1e-12))


def test_qk_validation_of_arguments():
    Q, Qhat = qk_all(np.array([1.0]), 1.1, 3, k_max=2)
    assert Q.shape == (3,) and np.all(Qhat >= 0)


@pytest.mark.parametrize("length", [None, 4])
def test_shift_diff_on_intervals_encloses_float(length):
    x = np.array([0.5, -1.0, 2.0, 0.25])
    y = shift_diff(Interval(x), length)
    ref = shift_diff(x, length)
    assert np.all(y.lo <= ref) and np.all(ref <= y.hi)
