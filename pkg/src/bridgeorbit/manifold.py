"""Parameterization of the two-dimensional stable manifold of the origin.

The vector field is Psi(v) = (v2 + v1 v2, v3, v4, -beta v3 - v1) with
v1 = exp(u) - 1.  The manifold chart is P(theta) = sum_alpha a_alpha
theta1^alpha1 theta2^alpha2 with a_alpha in C^4.  Coefficients are stored as
grids of shape (4, K, K) indexed [component, alpha1, alpha2]; vectors for
linear algebra use component-major order with the triangular ordering of
:class:`~bridgeorbit.seq_space.TriangleIndex` inside each component.

Bounds are evaluated for a range of parameters beta_s = beta0 + s (beta1 - beta0)
with coefficients a(s) = a0 + s (a1 - a0), s in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .interval_core import (
    PI, CInterval, Interval, _up, as_cinterval, as_interval, gamma_n, imatmul,
)
from .seq_space import (
    cauchy2, degree_grid, norm_taylor, powers, triangle,
)


class BetaOutOfRange(ValueError):
    pass


class NewtonDiverged(RuntimeError):
    pass


class SingularJacobian(RuntimeError):
    pass


class NoValidRadius(RuntimeError):
    def __init__(self, msg, component=None):
        super().__init__(msg)
        self.component = component


class NoValidGamma(RuntimeError):
    pass


class RhoNotLessThanNu(ValueError):
    pass


# -- eigen data -----------------------------------------------------------------

def lam_float(beta):
    return complex(-0.5 * math.sqrt(2.0 - beta), 0.5 * math.sqrt(2.0 + beta))


def eigvec_float(beta):
    lam = lam_float(beta)
    return np.array([1.0, lam, lam ** 2, lam ** 3])


@dataclass
class EigenData:
    beta: Interval
    lam: CInterval
    V: CInterval
    dlam: CInterval
    d2lam_abs: Interval
    dlam_abs2: Interval


def eigen_data(beta):
    """Enclosures of lambda(beta), V(beta) = (1, l, l^2, l^3) and beta-derivatives."""
    beta = as_interval(beta)
    if (beta.lo < 0).any() or (beta.hi >= 2).any():
        raise BetaOutOfRange(f"beta must lie in [0, 2), got [{beta.lo}, {beta.hi}]")
    sm = (2.0 - beta).sqrt()
    sp_ = (2.0 + beta).sqrt()
    lam = CInterval(-0.5 * sm, 0.5 * sp_)
    lam2 = lam * lam
    V = CInterval(
        Interval([1.0, 0, 0, 0]), Interval(np.zeros(4))
    )
    V.re[1], V.im[1] = lam.re, lam.im
    V.re[2], V.im[2] = lam2.re, lam2.im
    lam3 = lam2 * lam
    V.re[3], V.im[3] = lam3.re, lam3.im
    dlam = CInterval(0.25 / sm, 0.25 / sp_)
    # |lambda''|^2 = (4 + 3 beta^2) / (16 (2-beta)^3 (2+beta)^3), |lambda'|^2 = 1 / (4 (4 - beta^2))
    d2 = ((4.0 + 3.0 * beta.sqr()) / (((2.0 - beta) ** 3) * ((2.0 + beta) ** 3))).sqrt() * 0.25
    dl2 = 1.0 / (4.0 * (4.0 - beta.sqr()))
    return EigenData(beta, lam, V, dlam, d2, dl2)


def linear_part(beta):
    """D Psi_beta(0) as a float matrix (beta exact)."""
    return np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [-1, 0, -beta, 0]], dtype=float)


# -- grids ----------------------------------------------------------------------

def pad_grid(a, K):
    """Zero-pad the last two axes of a grid to K x K."""
    if isinstance(a, CInterval):
        return CInterval(pad_grid(a.re, K), pad_grid(a.im, K))
    if isinstance(a, Interval):
        return Interval(pad_grid(a.lo, K), pad_grid(a.hi, K))
    out = np.zeros(a.shape[:-2] + (K, K), dtype=a.dtype)
    k = min(K, a.shape[-1])
    out[..., :k, :k] = a[..., :k, :k]
    return out


def conj_swap(a):
    """a_{(alpha2, alpha1)} conjugated: the conjugate-symmetric partner."""
    return np.conj(np.swapaxes(a, -1, -2))


def symmetrize(a):
    return 0.5 * (a + conj_swap(a))


def rescale(a, gamma):
    """Coefficients of theta -> P(gamma theta): a_alpha gamma^{|alpha|}."""
    K = a.shape[-1]
    g = float(gamma) ** degree_grid(K)
    return a * g


def _eig_factor(lam, K):
    """(alpha1 lam + alpha2 conj(lam)) on a K x K grid."""
    i = np.arange(K)
    s = (i[:, None] + i[None, :]).astype(float)
    d = (i[:, None] - i[None, :]).astype(float)
    if isinstance(lam, CInterval):
        return CInterval(lam.re * s, lam.im * d)
    return lam.real * s + 1j * lam.imag * d


# -- the zero finding map -------------------------------------------------------

def F_manifold(beta, a, gamma=1.0, full=True):
    """Zero finding map for the invariance equation.

    ``a`` has shape (4, N, N) (float complex or CInterval).  With ``full`` the
    result covers |alpha| <= 2N-2 on a (4, 2N-1, 2N-1) grid, otherwise it is
    truncated to the N x N grid.  ``gamma`` scales the eigenvectors (rescaled
    charts have a_10 = gamma V).
    """
    N = a.shape[-1]
    K = 2 * N - 1 if full else N
    interval = isinstance(a, (CInterval, Interval)) or isinstance(beta, Interval)
    if interval:
        a = as_cinterval(a)
        eig = eigen_data(beta)
        lam, V = eig.lam, eig.V
        beta_i = as_interval(beta)
    else:
        lam = lam_float(beta)
        V = eigvec_float(beta)
        beta_i = beta
    ap = pad_grid(a, K)
    prod = cauchy2(a[0], a[1])
    prod = pad_grid(prod, K) if prod.shape[-1] < K else prod[..., :K, :K]
    fac = _eig_factor(lam, K)
    psi0 = ap[1] + prod
    psi1 = ap[2]
    psi2 = ap[3]
    psi3 = -ap[0] - ap[2] * beta_i
    if interval:
        out = CInterval(Interval.zeros((4, K, K)), Interval.zeros((4, K, K)))
        for j, psi in enumerate((psi0, psi1, psi2, psi3)):
            out[j] = ap[j] * fac - psi
        gV = V * gamma
        out[:, 0, 0] = ap[:, 0, 0]
        out[:, 1, 0] = ap[:, 1, 0] - gV
        out[:, 0, 1] = ap[:, 0, 1] - gV.conj()
    else:
        out = np.stack([ap[j] * fac - psi for j, psi in enumerate((psi0, psi1, psi2, psi3))])
        out[:, 0, 0] = ap[:, 0, 0]
        out[:, 1, 0] = ap[:, 1, 0] - gamma * V
        out[:, 0, 1] = ap[:, 0, 1] - gamma * np.conj(V)
    if not full:
        return _mask(out, N)
    return _mask(out, 2 * N - 1)


def _mask(grid, N):
    mask = degree_grid(grid.shape[-1]) < N
    if isinstance(grid, CInterval):
        return CInterval(_mask(grid.re, N), _mask(grid.im, N))
    if isinstance(grid, Interval):
        return Interval(np.where(mask, grid.lo, 0.0), np.where(mask, grid.hi, 0.0))
    return np.where(mask, grid, 0)


# -- Jacobian -----------------------------------------------------------------

class _Pairs:
    """Index pairs (alpha, sigma) with sigma <= alpha componentwise, |alpha| < N."""

    def __init__(self, N):
        tri = triangle(N)
        rows, cols, d1, d2 = [], [], [], []
        for r, (x1, x2) in enumerate(zip(tri.alpha1, tri.alpha2)):
            for s1 in range(x1 + 1):
                for s2 in range(x2 + 1):
                    rows.append(r)
                    cols.append(tri.offset(s1, s2))
                    d1.append(x1 - s1)
                    d2.append(x2 - s2)
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.d1 = np.array(d1)
        self.d2 = np.array(d2)


_PAIRS = {}


def _pairs(N):
    if N not in _PAIRS:
        _PAIRS[N] = _Pairs(N)
    return _PAIRS[N]


def jacobian_parts(beta, a):
    """D_a F^{[N]} split as (sparse float part without diagonal factors, diagonal factors).

    The returned sparse matrix holds every entry except the eigenvalue factors
    (alpha1 lam + alpha2 conj(lam)) on the diagonal of rows with |alpha| >= 2;
    those are returned separately on the flattened index (float or CInterval).
    """
    N = a.shape[-1]
    tri = triangle(N)
    M = tri.size
    high = tri.degree >= 2
    low = ~high
    idx = np.arange(M)
    rows, cols, vals = [], [], []

    def put(ci, cj, r, c, v):
        rows.append(ci * M + r)
        cols.append(cj * M + c)
        vals.append(np.broadcast_to(np.asarray(v, dtype=complex), np.shape(r)))

    for j in range(4):
        put(j, j, idx[low], idx[low], 1.0)
    h = idx[high]
    put(0, 1, h, h, -1.0)
    put(1, 2, h, h, -1.0)
    put(2, 3, h, h, -1.0)
    put(3, 0, h, h, 1.0)
    put(3, 2, h, h, float(beta))
    pr = _pairs(N)
    keep = tri.degree[pr.rows] >= 2
    r, c = pr.rows[keep], pr.cols[keep]
    put(0, 0, r, c, -a[1][pr.d1[keep], pr.d2[keep]])
    put(0, 1, r, c, -a[0][pr.d1[keep], pr.d2[keep]])
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(4 * M, 4 * M)
    ).tocsr()
    return S, high


def jacobian_float(beta, a):
    N = a.shape[-1]
    tri = triangle(N)
    S, high = jacobian_parts(beta, a)
    fac = _eig_factor(lam_float(beta), N)[tri.alpha1, tri.alpha2]
    diag = np.tile(np.where(high, fac, 0.0), 4)
    return (S + sp.diags(diag)).tocsr()


def jacobian_interval(beta, a):
    """Returns (float complex dense midpoint, CInterval diagonal correction)."""
    N = a.shape[-1]
    tri = triangle(N)
    S, high = jacobian_parts(beta, a)
    lam = eigen_data(beta).lam
    fac = _eig_factor(lam, N)
    fac = CInterval(fac.re[tri.alpha1, tri.alpha2], fac.im[tri.alpha1, tri.alpha2])
    mid = np.where(high, fac.mid, 0.0)
    corr = CInterval(
        Interval(np.where(high, fac.re.lo, 0.0), np.where(high, fac.re.hi, 0.0)),
        Interval(np.where(high, fac.im.lo, 0.0), np.where(high, fac.im.hi, 0.0)),
    ) - mid
    D = S.toarray()
    diag = np.tile(mid, 4)
    D[np.arange(len(diag)), np.arange(len(diag))] += diag
    corr = CInterval(
        Interval(np.tile(corr.re.lo, 4), np.tile(corr.re.hi, 4)),
        Interval(np.tile(corr.im.lo, 4), np.tile(corr.im.hi, 4)),
    )
    return D, corr


def flatten(a):
    tri = triangle(a.shape[-1])
    return a[:, tri.alpha1, tri.alpha2].reshape(-1)


def unflatten(x, N):
    tri = triangle(N)
    M = tri.size
    out = np.zeros((4, N, N), dtype=complex)
    out[:, tri.alpha1, tri.alpha2] = np.asarray(x).reshape(4, M)
    return out


# -- Newton ---------------------------------------------------------------------

def initial_guess(beta, N, gamma=1.0):
    a = np.zeros((4, N, N), dtype=complex)
    if N >= 2:
        V = eigvec_float(beta) * gamma
        a[:, 1, 0] = V
        a[:, 0, 1] = np.conj(V)
    return a


def recursive_solve(beta, N):
    """Degree-by-degree solution of the truncated problem (independent oracle).

    For |alpha| >= 2 the only degree-|alpha| unknown in the quadratic term is
    multiplied by a_00 = 0, so each coefficient solves a 4x4 linear system
    ((alpha1 lam + alpha2 conj lam) I - D Psi(0)) a_alpha = (rhs, 0, 0, 0).
    """
    lam = lam_float(beta)
    D = linear_part(beta)
    a = initial_guess(beta, N)
    for d in range(2, N):
        for a2 in range(d + 1):
            a1 = d - a2
            s = 0j
            for s1 in range(a1 + 1):
                for s2 in range(a2 + 1):
                    s += a[0, s1, s2] * a[1, a1 - s1, a2 - s2]
            rhs = np.array([s, 0, 0, 0])
            a[:, a1, a2] = np.linalg.solve((a1 * lam + a2 * np.conj(lam)) * np.eye(4) - D, rhs)
    return a


def newton_solve_manifold(beta, N, guess=None, gamma=1.0, tol=1e-12, max_iter=30):
    """Float Newton iteration for F^{[N]}(beta, a) = 0.

    Conjugate symmetry is enforced after each step.  The residual is measured
    in the weighted norm with weight ``gamma`` on unscaled data, i.e. the unit
    weight of the rescaled chart.
    """
    a = initial_guess(beta, N) if guess is None else np.array(guess, dtype=complex)
    w = float(gamma) ** degree_grid(N)
    for it in range(max_iter):
        Fa = F_manifold(beta, a, full=False)
        res = float(np.max(np.sum(np.abs(Fa) * w, axis=(-1, -2))))
        if not np.isfinite(res):
            break
        if res <= tol:
            return a
        Dm = jacobian_float(beta, a)
        try:
            step = spla.spsolve(Dm.tocsc(), flatten(Fa))
        except RuntimeError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(step)):
            break
        a = symmetrize(a - unflatten(step, N))
    Fa = F_manifold(beta, a, full=False)
    res = float(np.max(np.sum(np.abs(Fa) * w, axis=(-1, -2))))
    if res <= tol:
        return a
    raise NewtonDiverged(f"manifold Newton did not converge at beta={beta} (residual {res:.3e})")


# -- approximate inverse -------------------------------------------------------

def build_A_manifold(beta0, a0):
    """Float approximate inverse J of D_a F^{[N]}(beta0, a0)."""
    Dm = jacobian_float(beta0, a0).toarray()
    try:
        J = np.linalg.inv(Dm)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc
    if not np.all(np.isfinite(J)):
        raise SingularJacobian("non-finite approximate inverse")
    return J


def tail_factor(beta0, K):
    """|1 / (alpha1 lam + alpha2 conj lam)| upper bounds on a K x K grid (alpha != 0)."""
    lam = eigen_data(beta0).lam
    fac = _eig_factor(lam, K)
    d = degree_grid(K)
    safe = CInterval(
        Interval(np.where(d == 0, 1.0, fac.re.lo), np.where(d == 0, 1.0, fac.re.hi)),
        Interval(fac.im.lo, fac.im.hi),
    )
    inv = 1.0 / abs(safe)
    return np.where(d == 0, 0.0, inv.hi)


def tail_bound(beta0, N):
    """2 / (N sqrt(2 - beta0)), an upper bound of |M_k| for k >= N."""
    b = as_interval(beta0)
    return float((2.0 / (N * (2.0 - b).sqrt())).hi)


# -- magnitude helpers ---------------------------------------------------------

def _cmag(re_mag, im_mag):
    return _up(np.sqrt(_up(_up(re_mag * re_mag) + _up(im_mag * im_mag))))


def cinterval_mag(z):
    if isinstance(z, CInterval):
        return _cmag(z.re.mag(), z.im.mag())
    if isinstance(z, Interval):
        return z.mag()
    z = np.asarray(z)
    return _cmag(np.abs(z.real), np.abs(z.imag))


def _matvec_up(absM, v):
    n = absM.shape[-1]
    g = gamma_n(n + 2)
    return _up((absM @ v) * (1.0 + 2 * g) + n * 1e-300)


def _sum_up(x, axis=None):
    n = x.size if axis is None else x.shape[axis]
    g = gamma_n(n + 2)
    return _up(np.sum(x, axis=axis) * (1.0 + 2 * g) + n * 1e-300)


def _mul_up(x, y):
    return _up(np.asarray(x) * np.asarray(y))


# -- bound data ------------------------------------------------------------------

@dataclass
class ManifoldData:
    """Everything the bounds need about one parameter range."""

    N: int
    beta0: float
    beta1: float
    a0: np.ndarray
    a1: np.ndarray
    gamma: float = 1.0
    nu_tilde: float = 1.0
    J: np.ndarray = None
    absJ: np.ndarray = field(default=None, repr=False)
    absB: np.ndarray = field(default=None, repr=False)

    @property
    def M(self):
        return triangle(self.N).size

    def prepare(self, need_B=True):
        if self.J is None:
            self.J = build_A_manifold(self.beta0, self.a0)
        if self.absJ is None:
            self.absJ = cinterval_mag(self.J)
        if need_B and self.absB is None:
            self.absB = residual_matrix_mag(self.beta0, self.a0, self.J)
        return self


def residual_matrix_mag(beta0, a0, J):
    """Upper bounds of |B| with B = I - J D_a F^{[N]}(beta0, a0) (interval evaluation)."""
    D, corr = jacobian_interval(beta0, a0)
    JD = imatmul(J, D)
    n = J.shape[0]
    extra = _mul_up(cinterval_mag(J), cinterval_mag(corr)[None, :])
    eye = np.eye(n)
    re_lo = eye - JD.re.hi
    re_hi = eye - JD.re.lo
    re_mag = _up(np.maximum(np.abs(re_lo), np.abs(re_hi)) + extra)
    im_mag = _up(JD.im.mag() + extra)
    return _cmag(re_mag, im_mag)


def block_K(absG, N, nu, scale_by_degree=False):
    """K^{(i,j)} for a 4M x 4M magnitude matrix: 4 x 4 array of upper bounds.

    K^{(i,j)}(G) = max_alpha nu^{-|alpha|} sum_alpha' |G^{(i,j)}_{alpha', alpha}| nu^{|alpha'|},
    optionally with the column factor |alpha| (the modified constant).
    """
    tri = triangle(N)
    M = tri.size
    pw = powers(nu, N)
    w_hi = pw.hi[tri.degree]
    w_lo = pw.lo[tri.degree]
    K = np.zeros((4, 4))
    g = gamma_n(M + 2)
    for i in range(4):
        for j in range(4):
            blk = absG[i * M:(i + 1) * M, j * M:(j + 1) * M]
            s = _up((w_hi @ blk) * (1.0 + 2 * g) + M * 1e-300)
            col = _up(s / w_lo)
            if scale_by_degree:
                col = _up(col * tri.degree)
            K[i, j] = float(np.max(col))
    return K


def _abs_grid(z):
    return cinterval_mag(z)


def _weighted_norms(mag_grid, nu):
    """sum_alpha mag[j, alpha] nu^{|alpha|} per component (upper bounds)."""
    K = mag_grid.shape[-1]
    pw = powers(nu, 2 * K)
    w = pw.hi[degree_grid(K)]
    return _sum_up(_mul_up(mag_grid, w).reshape(mag_grid.shape[0], -1), axis=1)


def _first_order_term(data, eig0, K):
    """Enclosure of D_aF(beta0, a0) Delta_a + D_betaF(beta0, a0) Delta_beta on a K grid."""
    N = data.N
    a0 = as_cinterval(pad_grid(data.a0, K))
    da_f = data.a1 - data.a0
    da = as_cinterval(pad_grid(da_f, K))
    dbeta = as_interval(data.beta1) - data.beta0
    beta0 = as_interval(data.beta0)
    fac = _eig_factor(eig0.lam, K)
    dfac = _eig_factor(eig0.dlam, K)
    p1 = cauchy2(data.a0[0], da_f[1])
    p2 = cauchy2(da_f[0], data.a0[1])
    conv = pad_grid(p1 + p2, K)
    lin = [da[1] + conv, da[2], da[3], -da[0] - da[2] * beta0]
    out = CInterval(Interval.zeros((4, K, K)), Interval.zeros((4, K, K)))
    for j in range(4):
        out[j] = da[j] * fac - lin[j] + a0[j] * dfac * dbeta
    out[3] = out[3] + a0[2] * dbeta
    # degree 0 and 1 rows: Delta a_alpha - gamma V'(beta0) Delta beta
    lam = eig0.lam
    dlam = eig0.dlam
    dV = CInterval(Interval.zeros(4), Interval.zeros(4))
    dV[1] = dlam
    dV[2] = lam * dlam * 2.0
    dV[3] = lam * lam * dlam * 3.0
    dV = dV * (dbeta * data.gamma)
    out[:, 0, 0] = da[:, 0, 0]
    out[:, 1, 0] = da[:, 1, 0] - dV
    out[:, 0, 1] = da[:, 0, 1] - dV.conj()
    return _mask(out, 2 * N - 1)


def _second_order_term(data, K):
    """Upper bounds G_alpha of the second-order Taylor remainder in s."""
    N = data.N
    beta = Interval(data.beta0, data.beta1)
    eig = eigen_data(beta)
    dbeta = float((as_interval(data.beta1) - data.beta0).hi)
    da = data.a1 - data.a0
    G = np.zeros((4, K, K))
    i = np.arange(K)
    s_ = (i[:, None] + i[None, :]).astype(float)
    d_ = (i[:, None] - i[None, :]).astype(float)
    dmag = pad_grid(cinterval_mag(da), K)
    amag = pad_grid(_up(cinterval_mag(data.a0) + cinterval_mag(da)), K)
    # |alpha1 lam' + alpha2 conj lam'| <= 1/4 sqrt(s^2/(2-beta) + d^2/(2+beta))
    c = (Interval(s_ ** 2) / (2.0 - beta) + Interval(d_ ** 2) / (2.0 + beta)).sqrt() * 0.25
    c_hi = c.hi
    deg = degree_grid(K)
    high = deg >= 2
    dd = cauchy2(da[0], da[1])
    ddmag = pad_grid(cinterval_mag(dd), K)
    d2 = float(eig.d2lam_abs.hi)
    for j in range(4):
        t = _mul_up(_mul_up(c_hi, dbeta), dmag[j])
        # beta-beta second derivative of (alpha1 lam + alpha2 conj lam) a_alpha
        t = _up(t + _mul_up(_mul_up(0.5 * d2 * dbeta * dbeta, s_), amag[j]) * (1 + 1e-15))
        G[j] = np.where(high, t, 0.0)
    G[0] = np.where(high, _up(G[0] + ddmag), 0.0)
    G[3] = np.where(high, _up(G[3] + _mul_up(dbeta, dmag[2])), 0.0)
    # degree 1: 1/2 gamma (|lam''| (0,1,2,3) + |lam'|^2 (0,0,2,6)) dbeta^2
    dl2 = float(eig.dlam_abs2.hi)
    g1 = _up(0.5 * data.gamma * dbeta * dbeta * 1.0000000000001)
    vec = _up(_up(d2 * np.array([0.0, 1.0, 2.0, 3.0])) + _up(dl2 * np.array([0.0, 0.0, 2.0, 6.0])))
    G[:, 1, 0] = _mul_up(vec, g1)
    G[:, 0, 1] = G[:, 1, 0]
    return np.where(deg < 2 * N - 1, G, 0.0)


def y_bound_manifold(data):
    """Y^{(j)} = || (|A| Ftilde)^{(j)} || for the parameter range."""
    data.prepare(need_B=False)
    N = data.N
    K = 2 * N - 1
    tri = triangle(N)
    M = tri.size
    nu = data.nu_tilde
    beta0 = as_interval(data.beta0)
    eig0 = eigen_data(beta0)
    F0 = F_manifold(beta0, as_cinterval(data.a0), gamma=data.gamma, full=True)
    Ft = _abs_grid(F0)
    if data.beta1 != data.beta0 or np.any(data.a1 != data.a0):
        T1 = _first_order_term(data, eig0, K)
        Ft = _up(Ft + _abs_grid(T1))
        Ft = _up(Ft + _second_order_term(data, K))
    head = Ft[:, tri.alpha1, tri.alpha2].reshape(-1)
    AF_head = _matvec_up(data.absJ, head).reshape(4, M)
    tail = np.where(degree_grid(K) >= N, _mul_up(Ft, tail_factor(beta0, K)), 0.0)
    pw = powers(nu, K + 1)
    wh = pw.hi[tri.degree]
    wt = pw.hi[np.minimum(degree_grid(K), K)]
    Y = np.zeros(4)
    for j in range(4):
        y = _sum_up(_mul_up(AF_head[j], wh)) + _sum_up(_mul_up(tail[j], wt).ravel())
        Y[j] = _up(y)
    return Y


def z_bounds_manifold(data):
    """(Z0, Z1, Z2) as 4-vectors of upper bounds."""
    data.prepare(need_B=True)
    N = data.N
    nu = data.nu_tilde
    KB = block_K(data.absB, N, nu)
    KJ = block_K(data.absJ, N, nu)
    KJt = block_K(data.absJ, N, nu, scale_by_degree=True)
    Z0 = np.array([_up(np.sum(KB[i]) * (1 + 1e-15)) for i in range(4)])
    beta0 = as_interval(data.beta0)
    beta1 = as_interval(data.beta1)
    t = tail_bound(data.beta0, N)
    sq = (2.0 - beta0).sqrt()
    T = float((2.0 / sq).hi)
    norms0 = _weighted_norms(cinterval_mag(data.a0), nu)
    normsd = _weighted_norms(cinterval_mag(data.a1 - data.a0), nu)
    D = _up(normsd[0] + normsd[1])
    dbeta = float((beta1 - data.beta0).hi)
    den = float((2.0 * ((2.0 - beta1) * (2.0 + beta1)).sqrt()).lo)
    Kbar = np.zeros(4)
    for i in range(4):
        off = sum(KJt[i, j] for j in range(4) if j != i)
        Kbar[i] = _up(_up(off + max(KJt[i, i], T)) / den)
    head1 = float((2.0 * (1.0 + as_interval(norms0[0]) + norms0[1]) / (N * sq)).hi)
    head4 = float((2.0 * (1.0 + beta0) / (N * sq)).hi)
    Z1 = np.zeros(4)
    Z1[0] = _up(head1 + _mul_up(max(KJ[0, 0], t), D) + _mul_up(dbeta, _up(Kbar[0] + KJ[0, 3])))
    Z1[1] = _up(t + _mul_up(KJ[1, 0], D) + _mul_up(dbeta, _up(Kbar[1] + KJ[1, 3])))
    Z1[2] = _up(t + _mul_up(KJ[2, 0], D) + _mul_up(dbeta, _up(Kbar[2] + KJ[2, 3])))
    Z1[3] = _up(head4 + _mul_up(KJ[3, 0], D) + _mul_up(dbeta, _up(Kbar[3] + max(KJ[3, 3], t))))
    Z1 = _up(Z1 * (1 + 1e-15))
    Z2 = np.array([2 * max(KJ[0, 0], t), 2 * KJ[1, 0], 2 * KJ[2, 0], 2 * KJ[3, 0]])
    return Z0, Z1, Z2


# -- radii polynomials --------------------------------------------------------------

def _poly_eval(coeffs, r):
    r = as_interval(r)
    acc = as_interval(0.0)
    for c in reversed(coeffs):
        acc = acc * r + c
    return acc


def radii_coefficients(Y, Zs):
    """Per-component coefficient lists [Y, Z0+Z1-1, Z2, (Z3)] as Intervals."""
    Y = np.atleast_1d(np.asarray(Y, float))
    out = []
    for j in range(len(Y)):
        lin = as_interval(Zs[0][j]) + Zs[1][j] - 1.0
        cs = [as_interval(Y[j]), lin] + [as_interval(Z[j]) for Z in Zs[2:]]
        out.append(cs)
    return out


def radii_check(Y, Zs):
    """Find r > 0 with interval-verified p_j(r) < 0 for every component.

    ``Zs`` is (Z0, Z1, Z2[, Z3]).  Raises NoValidRadius (with the index of a
    failing component) when no negative point exists.
    """
    coeffs = radii_coefficients(Y, Zs)
    lo_all, hi_all = 0.0, math.inf
    bad = None
    for j, cs in enumerate(coeffs):
        pf = [float(c.hi) for c in cs]
        roots = np.roots(pf[::-1]) if any(pf[1:]) else np.array([])
        real = sorted(float(z.real) for z in roots if abs(z.imag) <= 1e-12 * max(1.0, abs(z)) and z.real > 0)
        if pf[1] >= 0 and len(real) < 2:
            bad = j
            break
        neg = _negative_window(pf, real)
        if neg is None:
            bad = j
            break
        lo_all = max(lo_all, neg[0])
        hi_all = min(hi_all, neg[1])
    if bad is not None or not lo_all < hi_all:
        comp = bad if bad is not None else _worst_component(coeffs)
        raise NoValidRadius(f"radii polynomials have no common negative point (component {comp + 1})",
                            component=comp)
    candidates = _candidates(lo_all, hi_all)
    for r in candidates:
        if all(float(_poly_eval(cs, r).hi) < 0 for cs in coeffs):
            return r
    raise NoValidRadius("interval verification failed at every candidate radius",
                        component=_worst_component(coeffs))


def _negative_window(pf, roots):
    def val(r):
        return sum(c * r ** k for k, c in enumerate(pf))

    pts = [0.0] + roots + [math.inf]
    for a, b in zip(pts[:-1], pts[1:]):
        if math.isinf(b):
            probe = a * 2 + 1.0
        else:
            probe = 0.5 * (a + b)
        if val(probe) < 0:
            return (a, b)
    return None


def _candidates(lo, hi):
    if math.isinf(hi):
        hi = max(1.0, lo * 4)
    if lo <= 0:
        lo = hi * 1e-12
    # small radii first: the radius is the error bound handed downstream
    return [lo * (hi / lo) ** t for t in (0.02, 0.05, 0.1, 0.25, 0.5)]


def _worst_component(coeffs):
    worst, val = 0, -math.inf
    for j, cs in enumerate(coeffs):
        lin = float(cs[1].hi)
        if lin > val:
            worst, val = j, lin
    return worst


# -- certificates --------------------------------------------------------------------

@dataclass
class ManifoldCertificate:
    beta0: float
    beta1: float
    N: int
    gamma: float
    nu_tilde: float
    r_m: float
    Y: np.ndarray
    Z0: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    a0: np.ndarray
    a1: np.ndarray

    def recheck(self):
        """p_j(r_m) < 0 from the stored bounds alone."""
        coeffs = radii_coefficients(self.Y, (self.Z0, self.Z1, self.Z2))
        return all(float(_poly_eval(cs, self.r_m).hi) < 0 for cs in coeffs)


def manifold_bounds(data):
    Y = y_bound_manifold(data)
    Z0, Z1, Z2 = z_bounds_manifold(data)
    return Y, Z0, Z1, Z2


def validate_manifold_range(beta0, beta1, N=30, gamma=1.0, a0=None, a1=None, J=None,
                            seed0=None, seed1=None, scaled=False, reuse=None):
    """Validate the rescaled chart over [beta0, beta1].

    ``a0``/``a1`` are unscaled Newton solutions (computed if missing), or
    already rescaled when ``scaled`` is set.  The proof is carried out on the
    rescaled coefficients with unit weight.  ``reuse`` is a ManifoldData from
    an earlier attempt at the same beta0 whose inverse may be kept.
    """
    if a0 is None:
        a0 = newton_solve_manifold(beta0, N, guess=seed0)
        scaled = False
    if a1 is None:
        a1 = a0 if beta1 == beta0 else newton_solve_manifold(beta1, N, guess=seed1 if seed1 is not None else a0)
    s0 = a0 if scaled else rescale(a0, gamma)
    s1 = a1 if scaled else rescale(a1, gamma)
    data = ManifoldData(N=N, beta0=beta0, beta1=beta1, a0=s0, a1=s1, gamma=gamma, nu_tilde=1.0, J=J)
    if reuse is not None and reuse.beta0 == beta0 and np.array_equal(reuse.a0, s0):
        data.J, data.absJ, data.absB = reuse.J, reuse.absJ, reuse.absB
    Y, Z0, Z1, Z2 = manifold_bounds(data)
    r = radii_check(Y, (Z0, Z1, Z2))
    cert = ManifoldCertificate(beta0, beta1, N, gamma, 1.0, r, Y, Z0, Z1, Z2, s0, s1)
    return cert, data


def single_parameter_profile(beta0, a, N):
    """Prepared unscaled data for the gamma search (Delta a = 0, Delta beta = 0)."""
    data = ManifoldData(N=N, beta0=beta0, beta1=beta0, a0=a, a1=a, gamma=1.0, nu_tilde=1.0)
    return data.prepare(need_B=True)


def _gamma_ok(profile, gamma, eta):
    """Single-parameter bounds at scale gamma.

    Rescaling is an isometry from the weight-gamma norm on unscaled
    coefficients to the unit-weight norm on rescaled ones, and the operators
    transform by the same diagonal similarity, so the search evaluates the
    unscaled data with weight gamma.
    """
    profile.nu_tilde = gamma
    profile.gamma = 1.0
    Y, Z0, Z1, Z2 = manifold_bounds(profile)
    try:
        radii_check(Y, (Z0, Z1, Z2))
    except NoValidRadius:
        return False, Z0 + Z1
    return bool(np.all(Z0 + Z1 <= eta)), Z0 + Z1


def gamma_floor(beta, N):
    """The part of Z1 that no rescaling can reduce: the high-degree head of the last component."""
    beta = as_interval(beta)
    return float((2.0 * (1.0 + beta) / (N * (2.0 - beta).sqrt())).hi)


def maximize_gamma(beta0, a, N, eta=0.5, start=1.0, max_iter=30, profile=None, relax=True,
                   margin=0.05, rtol=1.005):
    """Largest gamma (geometric search) with a successful single-parameter proof and Z0+Z1 <= eta.

    With ``relax`` the target is raised to ``floor + margin`` when the
    gamma-independent part of Z0+Z1 already exceeds ``eta - margin``.
    """
    profile = single_parameter_profile(beta0, a, N) if profile is None else profile
    if relax:
        eta = max(eta, gamma_floor(beta0, N) + margin)
    good, bad = None, None
    g = start
    it = 0
    while it < max_iter:
        it += 1
        ok, _ = _gamma_ok(profile, g, eta)
        if ok:
            good = g
            if bad is None:
                g = g * 2.0
                continue
        else:
            bad = g
            if good is None:
                g = g / 2.0
                continue
        if good is not None and bad is not None:
            if bad / good < rtol:
                break
            g = math.sqrt(good * bad)
    if good is None:
        raise NoValidGamma(f"no admissible rescaling found at beta={beta0} with eta={eta}")
    return good


# -- evaluation ---------------------------------------------------------------------

def eval_P(a, psi, rho, order=0):
    """Enclosure of d^order/dpsi^order of sum_alpha a_alpha rho^{|alpha|} e^{i psi (alpha1 - alpha2)}.

    Returns a CInterval of shape (4,) (or (4,) + psi.shape); for conjugate
    symmetric coefficients the imaginary part encloses 0.
    """
    from .interval_core import iv_exp_unit
    a = as_cinterval(a)
    N = a.shape[-1]
    tri = triangle(N)
    psi = as_interval(psi)
    rho = as_interval(rho)
    n = tri.alpha1 - tri.alpha2
    deg = tri.degree
    rpow = [as_interval(1.0)]
    for _ in range(1, N):
        rpow.append(rpow[-1] * rho)
    rvec = Interval(np.array([float(r.lo) for r in rpow]), np.array([float(r.hi) for r in rpow]))
    rdeg = rvec[deg]
    angles = psi * Interval(n.astype(float)) if psi.ndim == 0 else None
    if angles is None:
        raise ValueError("psi must be a scalar interval")
    e = iv_exp_unit(angles)
    nf = Interval(n.astype(float) ** order) if order else None
    coef = CInterval(a.re[:, tri.alpha1, tri.alpha2], a.im[:, tri.alpha1, tri.alpha2])
    w = e * rdeg
    if order:
        w = w * nf
        # multiply by i^order
        for _ in range(order):
            w = CInterval(-w.im, w.re)
    terms = coef * w
    return terms.sum(axis=-1)


def eval_P_float(a, psi, rho, order=0):
    N = a.shape[-1]
    tri = triangle(N)
    n = tri.alpha1 - tri.alpha2
    coef = a[:, tri.alpha1, tri.alpha2]
    w = (rho ** tri.degree) * (1j * n) ** order * np.exp(1j * np.multiply.outer(np.atleast_1d(psi), n))
    out = w @ coef.T
    return out[0] if np.ndim(psi) == 0 else out


def eval_chart(a, theta1, theta2):
    """Float evaluation of P at complex or real (theta1, theta2)."""
    N = a.shape[-1]
    tri = triangle(N)
    coef = a[:, tri.alpha1, tri.alpha2]
    mon = np.power.outer(np.atleast_1d(theta1), tri.alpha1) * np.power.outer(np.atleast_1d(theta2), tri.alpha2)
    return mon @ coef.T


def derivative_error_bound(r_m, nu_tilde, rho):
    """4 pi delta / (nu ln(nu / rho)): bound on first derivatives of the chart error on |theta| <= rho."""
    if not rho < nu_tilde:
        raise RhoNotLessThanNu(f"rho={rho} must be smaller than nu={nu_tilde}")
    nu = as_interval(nu_tilde)
    val = 4.0 * PI * r_m / (nu * (nu / rho).log())
    return val

