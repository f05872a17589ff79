"""Weighted l1 sequence spaces, convolutions and operator norms.

Two index structures are used:

* two-index Taylor coefficients a_alpha, alpha = (alpha1, alpha2), stored as
  dense square grids ``[..., alpha1, alpha2]`` that vanish for |alpha| >= N;
* one-index Chebyshev coefficients x_k with the symmetric convention
  x(t) = x_0 + 2 sum_k x_k T_k(t), stored as plain arrays.

Functions accept float arrays as well as :class:`Interval` / :class:`CInterval`
arrays; interval inputs give rigorous enclosures.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import convolve2d

from .interval_core import (
    CInterval, Interval, _down, _up, as_interval, gamma_n, rigorous_bilinear,
)


# -- triangular index set -----------------------------------------------------

class TriangleIndex:
    """Bijection between {alpha : |alpha| < N} and 0..N(N+1)/2-1.

    Ordering is by degree, then by increasing alpha2 within a degree.
    """

    def __init__(self, N):
        self.N = N
        a1, a2 = [], []
        for d in range(N):
            for j in range(d + 1):
                a1.append(d - j)
                a2.append(j)
        self.alpha1 = np.array(a1, dtype=int)
        self.alpha2 = np.array(a2, dtype=int)
        self.degree = self.alpha1 + self.alpha2
        self.size = len(a1)

    def offset(self, alpha1, alpha2):
        d = alpha1 + alpha2
        return d * (d + 1) // 2 + alpha2

    def flatten(self, grid):
        """Grid [..., N', N'] -> vector [..., size] (entries outside dropped)."""
        return grid[..., self.alpha1, self.alpha2]

    def unflatten(self, vec, size=None):
        size = self.N if size is None else size
        vec = np.asarray(vec)
        out = np.zeros(vec.shape[:-1] + (size, size), dtype=vec.dtype)
        out[..., self.alpha1, self.alpha2] = vec
        return out


@lru_cache(maxsize=None)
def triangle(N):
    return TriangleIndex(N)


def degree_grid(K):
    i = np.arange(K)
    return i[:, None] + i[None, :]


def truncate_taylor(grid, N):
    """Zero every entry with |alpha| >= N and crop to an N x N grid."""
    grid = grid[..., :N, :N]
    mask = degree_grid(N) < N
    if isinstance(grid, np.ndarray):
        return np.where(mask, grid, 0)
    if isinstance(grid, CInterval):
        return CInterval(truncate_taylor(grid.re, N), truncate_taylor(grid.im, N))
    return Interval(np.where(mask, grid.lo, 0.0), np.where(mask, grid.hi, 0.0))


# -- powers of weights --------------------------------------------------------

def powers(nu, n):
    """Interval enclosure of nu**k for k = 0..n-1 (nu an exact float)."""
    nu = float(nu)
    k = np.arange(n)
    p = np.cumprod(np.concatenate(([1.0], np.full(max(n - 1, 0), nu))))[:n]
    g = np.array([gamma_n(j + 1) for j in range(n)]) if n else np.zeros(0)
    lo = _down(p * _down(1.0 - g))
    hi = _up(p * _up(1.0 + g))
    lo[0] = hi[0] = 1.0
    if nu == 1.0:
        lo[:] = hi[:] = 1.0
    return Interval(lo, hi)


def cheb_weights(m, nu):
    """omega_0 = 1, omega_k = 2 nu^k."""
    w = powers(nu, m) * 2.0
    w.lo[0] = w.hi[0] = 1.0
    return w


# -- convolutions -------------------------------------------------------------

def _is_interval(x):
    return isinstance(x, (Interval, CInterval))


def _parts(x):
    if isinstance(x, CInterval):
        return x.re, x.im
    if isinstance(x, Interval):
        return x, None
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x.real, x.imag
    return x, None


def _bilinear_any(f, n_terms, u, v):
    """Apply a real bilinear float routine to real/complex, float/interval data."""
    if not _is_interval(u) and not _is_interval(v):
        return f(np.asarray(u), np.asarray(v))
    ur, ui = _parts(u)
    vr, vi = _parts(v)

    def one(x, y):
        xm, xr = (x.midrad() if isinstance(x, Interval) else (np.asarray(x, float), None))
        ym, yr = (y.midrad() if isinstance(y, Interval) else (np.asarray(y, float), None))
        return rigorous_bilinear(f, n_terms, xm, xr, ym, yr)

    re = one(ur, vr)
    if ui is None and vi is None:
        return re
    im = None
    if ui is not None and vi is not None:
        re = re - one(ui, vi)
    if vi is not None:
        im = one(ur, vi)
    if ui is not None:
        t = one(ui, vr)
        im = t if im is None else im + t
    return CInterval(re, im)


def _conv2_float(u, v):
    u = np.asarray(u)
    v = np.asarray(v)
    if u.ndim == 2:
        return convolve2d(u, v, mode="full")
    lead = np.broadcast_shapes(u.shape[:-2], v.shape[:-2])
    u = np.broadcast_to(u, lead + u.shape[-2:])
    v = np.broadcast_to(v, lead + v.shape[-2:])
    out = np.empty(lead + (u.shape[-2] + v.shape[-2] - 1, u.shape[-1] + v.shape[-1] - 1))
    for idx in np.ndindex(*lead):
        out[idx] = convolve2d(u[idx], v[idx], mode="full")
    return out


def cauchy2(u, v):
    """Cauchy product (u*v)_alpha = sum_{sigma <= alpha} u_sigma v_{alpha - sigma}.

    Inputs are K x K grids (leading axes broadcast); the result has full size
    (K_u + K_v - 1) so no term is lost.
    """
    n_terms = min(u.shape[-1] * u.shape[-2], v.shape[-1] * v.shape[-2])
    return _bilinear_any(_conv2_float, n_terms, u, v)


def _sym_extend(a):
    return np.concatenate((a[..., :0:-1], a), axis=-1)


def _conv1_float(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    la, lb = a.shape[-1], b.shape[-1]
    full = np.convolve(_sym_extend(a), _sym_extend(b))
    start = la + lb - 2
    return full[start:start + la + lb - 1]


def conv1(a, b):
    """Chebyshev convolution (a*b)_k = sum_{k1+k2=k} a_|k1| b_|k2|, k >= 0.

    Output length is len(a) + len(b) - 1.
    """
    n_terms = min(2 * a.shape[-1] - 1, 2 * b.shape[-1] - 1)
    return _bilinear_any(_conv1_float, n_terms, a, b)


def conv1_matrix(b, n_rows, n_cols):
    """Float matrix C with (a*b)_k = sum_j C[k, j] a_j for a of length n_cols."""
    b = np.asarray(b, dtype=float)
    lb = len(b)

    def coeff(idx):
        idx = np.abs(idx)
        out = np.zeros(idx.shape)
        ok = idx < lb
        out[ok] = b[idx[ok]]
        return out

    k = np.arange(n_rows)[:, None]
    j = np.arange(n_cols)[None, :]
    C = coeff(k - j) + coeff(k + j)
    C[:, 0] = coeff(np.arange(n_rows))
    return C


def shift_diff(x, length=None):
    """Sequence y_k = x_{k+1} - x_{k-1} for k >= 1 (y_0 = 0), x_{-1} = x_1.

    Returned with length ``length`` (default len(x) + 1), zero padded.
    """
    n = x.shape[-1]
    length = n + 1 if length is None else length

    def pad(v, size):
        if isinstance(v, np.ndarray):
            out = np.zeros(v.shape[:-1] + (size,), dtype=v.dtype)
            k = min(size, v.shape[-1])
            out[..., :k] = v[..., :k]
            return out
        if isinstance(v, CInterval):
            return CInterval(pad(v.re, size), pad(v.im, size))
        return Interval(pad(v.lo, size), pad(v.hi, size))

    xp = pad(x, length + 1)
    return _prepend_zero(xp[..., 2:length + 1] - xp[..., 0:length - 1])


def _prepend_zero(y):
    if isinstance(y, np.ndarray):
        return np.concatenate((np.zeros(y.shape[:-1] + (1,), dtype=y.dtype), y), axis=-1)
    if isinstance(y, CInterval):
        return CInterval(_prepend_zero(y.re), _prepend_zero(y.im))
    return Interval(_prepend_zero(y.lo), _prepend_zero(y.hi))


# -- norms --------------------------------------------------------------------

def _absval(a):
    if isinstance(a, CInterval):
        return abs(a)
    if isinstance(a, Interval):
        return abs(a)
    return as_interval(np.abs(np.asarray(a)))


def norm_cheb(a, nu):
    """Enclosure of |a_0| + 2 sum_{k>=1} |a_k| nu^k along the last axis."""
    w = cheb_weights(a.shape[-1], nu)
    return (_absval(a) * w).sum(axis=-1)


def norm_taylor(a, nu):
    """Enclosure of sum_alpha |a_alpha| nu^{|alpha|} over the last two axes."""
    K = a.shape[-1]
    pw = powers(nu, 2 * K)
    d = degree_grid(K)
    w = Interval(pw.lo[d], pw.hi[d])
    s = (_absval(a) * w).sum(axis=-1)
    return s.sum(axis=-1)


def norm_l1nu(a, nu, kind="cheb"):
    return norm_taylor(a, nu) if kind == "taylor" else norm_cheb(a, nu)


def norm_dual(c, nu):
    """max(|c_0|, 1/2 sup_k |c_k| nu^{-k}) along the last axis (upper bound)."""
    n = c.shape[-1]
    inv = as_interval(1.0) / powers(nu, n)
    t = _absval(c) * inv * 0.5
    hi = t.hi
    hi[..., 0] = _absval(c).hi[..., 0]
    lo = t.lo
    lo[..., 0] = _absval(c).lo[..., 0]
    return Interval(np.max(lo, axis=-1), np.max(hi, axis=-1))


def _upper_abs(G):
    if isinstance(G, (Interval, CInterval)):
        return _absval(G).hi
    return np.abs(np.asarray(G))


def _upper_weighted_colsum(absG, w_rows_hi, w_cols_lo):
    """Upper bound of max_j (1/w_j) sum_i |G_ij| w_i for nonnegative data."""
    n = absG.shape[0]
    g = gamma_n(n + 2)
    s = _up((absG.T @ w_rows_hi) * (1.0 + g) + n * 1e-300)
    ratio = _up(s / w_cols_lo)
    return ratio


def opnorm_block_taylor(G, nu, N, tail=None):
    """Operator norm on l1_nu for a finite block over |alpha| < N plus diagonal tail.

    ``G`` is indexed by the triangular ordering of :class:`TriangleIndex`.
    ``tail`` is an upper bound of sup_{|alpha| >= N} |tail_alpha| (or None).
    Returns an upper bound (float).
    """
    tri = triangle(N)
    pw = powers(nu, N)
    w = Interval(pw.lo[tri.degree], pw.hi[tri.degree])
    absG = _upper_abs(G)
    cols = _upper_weighted_colsum(absG, w.hi, w.lo)
    val = float(np.max(cols)) if cols.size else 0.0
    if tail is not None:
        val = max(val, float(tail))
    return val


def opnorm_columns_taylor(G, nu, N):
    """Weighted column sums nu^{-|alpha|} sum |G| nu^{|alpha'|} per column (upper)."""
    tri = triangle(N)
    pw = powers(nu, N)
    w = Interval(pw.lo[tri.degree], pw.hi[tri.degree])
    return _upper_weighted_colsum(_upper_abs(G), w.hi, w.lo)


def opnorm_block_cheb(G, nu, tail=None):
    """sup_j omega_j^{-1} sum_i |G_ij| omega_i, with optional diagonal tail bound."""
    absG = _upper_abs(G)
    w = cheb_weights(max(absG.shape), nu)
    cols = _upper_weighted_colsum(absG, w.hi[:absG.shape[0]], w.lo[:absG.shape[1]])
    val = float(np.max(cols)) if cols.size else 0.0
    if tail is not None:
        val = max(val, float(tail))
    return val


# -- convolution estimates ----------------------------------------------------

def qk_all(a, nu, m, k_max=None):
    """Upper bounds Q_k(a) and Qhat_k(a) for k = 0..k_max.

    Q_k(a) = max(|a_k|, sup_{k'>=1} (|a_|k-k'|| + |a_{k+k'}|) / (2 nu^{k'}));
    Qhat_k takes the sup over k' >= m only.  If a has support of length n,
    both indices exceed n - 1 once k' >= k + n, so the quotient vanishes and
    the sup is a finite maximum over 1 <= k' < k + n.
    """
    absa = _upper_abs(a)
    n = len(absa)
    k_max = (m if k_max is None else k_max)
    ks = np.arange(k_max + 1)
    kp_max = k_max + n + 1
    kp = np.arange(1, kp_max + 1)

    def get(idx):
        out = np.zeros(idx.shape)
        ok = idx < n
        out[ok] = absa[idx[ok]]
        return out

    num = _up(get(np.abs(ks[:, None] - kp[None, :])) + get(ks[:, None] + kp[None, :]))
    den = (powers(nu, kp_max + 1) * 2.0).lo[1:]
    quot = _up(num / den[None, :])
    main = np.max(quot, axis=1) if quot.size else np.zeros(len(ks))
    Q = np.maximum(get(ks), main)
    hat_mask = kp[None, :] >= m
    Qhat = np.max(np.where(hat_mask, quot, 0.0), axis=1)
    return Q, Qhat


def qk_estimates(a, k, nu, m):
    Q, Qhat = qk_all(a, nu, m, k_max=k)
    return Interval(0.0, Q[k]), Interval(0.0, Qhat[k])
