"""Chebyshev formulation of the projected boundary value problem.

After the change of variables v1 = exp(u) - 1 and the time rescaling t -> t/L,
a symmetric homoclinic orbit is a triple (L, psi, v) with

    dv/dt = L Psi_beta(v) on [-1, 1],   v2(-1) = v4(-1) = 0,   v(1) = P_beta(psi),

where P_beta(psi) evaluates the stable manifold chart on the circle of radius
rho.  Each component is a Chebyshev series v(t) = x_0 + 2 sum_k x_k T_k(t).

The unknown vector is ordered (L, psi, x1[0:m], x2[0:m], x3[0:m], x4[0:m]) and
the equations (eta1, eta2, f1[0:m], ..., f4[0:m]).  Bounds are computed over a
parameter range beta_s = beta0 + s (beta1 - beta0), x_s = x0 + s (x1 - x0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.integrate import solve_ivp
from scipy.optimize import fsolve

from .interval_core import (
    CInterval, Interval, _down, _up, as_cinterval, as_interval, gamma_n, imatmul,
)
from .manifold import (
    NewtonDiverged, NoValidRadius, SingularJacobian, _matvec_up, _mul_up, _sum_up,
    cinterval_mag, derivative_error_bound, eval_P, eval_P_float, radii_check,
    radii_coefficients, _poly_eval,
)
from .seq_space import (
    cheb_weights, conv1, conv1_matrix, norm_cheb, powers, qk_all, shift_diff, triangle,
)

TWO_PI = 2.0 * math.pi


class LogDomain(ValueError):
    """u = log(1 + v1) requested where v1 <= -1."""


# -- unknowns ----------------------------------------------------------------------

@dataclass
class OrbitPoint:
    """Approximate zero (L, psi, x1..x4) with Chebyshev coefficient rows x[i]."""

    L: float
    psi: float
    x: np.ndarray

    @property
    def m(self):
        return self.x.shape[1]

    def to_vector(self):
        return np.concatenate(([self.L, self.psi], self.x.reshape(-1)))

    @classmethod
    def from_vector(cls, v, m):
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), v[2:].reshape(4, m).copy())

    def resized(self, m):
        """Truncate or zero pad the coefficient rows to length m."""
        x = np.zeros((4, m))
        k = min(m, self.m)
        x[:, :k] = self.x[:, :k]
        return OrbitPoint(self.L, self.psi, x)

    def norm(self, nu):
        """Upper bound of max(|L|, |psi|, ||x_i||_{1,nu})."""
        comps = norm_cheb(as_interval(self.x), nu).hi
        return float(max(abs(self.L), abs(self.psi), float(np.max(comps))))


def wrap_angle(psi):
    return float(psi % TWO_PI)


def align_angle(psi_ref, psi):
    """Representative of psi closest to psi_ref modulo 2 pi."""
    return float(psi_ref + ((psi - psi_ref + math.pi) % TWO_PI - math.pi))


# -- chart on the circle of radius rho ------------------------------------------------

@dataclass
class CircleChart:
    """Manifold coefficients (rescaled, unit domain) restricted to |theta| = rho."""

    a: np.ndarray
    rho: float

    def value(self, psi):
        return eval_P_float(self.a, psi, self.rho).real

    def dvalue(self, psi):
        return eval_P_float(self.a, psi, self.rho, order=1).real

    def enclose(self, psi, order=0, coeffs=None):
        """Real enclosure of the order-th psi-derivative (psi may be an Interval)."""
        c = self.a if coeffs is None else coeffs
        return eval_P(c, psi, self.rho, order=order).re


# -- the operator --------------------------------------------------------------------

def _field_terms(beta, x1, x2, x3, x4):
    """Chebyshev coefficients of the four vector field components (length 2m-1)."""
    m = x1.shape[-1]
    p = conv1(x1, x2)
    n = p.shape[-1]

    def pad(v):
        if isinstance(v, np.ndarray):
            out = np.zeros(n)
            out[:m] = v
            return out
        out = Interval.zeros(n)
        out[:m] = v
        return out

    g1 = pad(x2) + p
    g2 = pad(x3)
    g3 = pad(x4)
    g4 = -pad(x1) - pad(x3) * beta
    return g1, g2, g3, g4


def _alt_weights(m):
    w = 2.0 * (-1.0) ** np.arange(m)
    w[0] = 1.0
    return w


def _end_weights(m):
    w = np.full(m, 2.0)
    w[0] = 1.0
    return w


def F_bvp(beta, x, P_value):
    """Full operator at a finite x: returns (eta[2], F[4, 2m]).

    ``P_value`` is either a callable psi -> P(psi) or a precomputed 4-vector.
    Float inputs give float outputs; Interval beta/x give enclosures when
    ``P_value`` is an Interval 4-vector.
    """
    m = x.m
    xs = x.x
    g = _field_terms(beta, xs[0], xs[1], xs[2], xs[3])
    P = P_value(x.psi) if callable(P_value) else P_value
    k2 = 2.0 * np.arange(2 * m)
    F = np.zeros((4, 2 * m))
    for i in range(4):
        sd = shift_diff(g[i], 2 * m)
        xi = np.zeros(2 * m)
        xi[:m] = xs[i]
        F[i] = k2 * xi + x.L * sd
        F[i, 0] = _end_weights(m) @ xs[i] - P[i]
    eta = np.array([_alt_weights(m) @ xs[1], _alt_weights(m) @ xs[3]])
    return eta, F


def F_bar(beta, x, chart):
    """Galerkin projection as a flat float vector of length 4m + 2."""
    eta, F = F_bvp(beta, x, chart.value)
    return np.concatenate((eta, F[:, :x.m].reshape(-1)))


def _blocks(m):
    """Slices of the six blocks in a 4m + 2 vector."""
    return [slice(0, 1), slice(1, 2)] + [slice(2 + i * m, 2 + (i + 1) * m) for i in range(4)]


def _shift_rows(M, m):
    """Rows k = 1..m-1 of the shifted matrix M[k+1] - M[k-1]; row 0 is zero."""
    if isinstance(M, Interval):
        out = Interval.zeros((m, M.shape[1]))
    else:
        out = np.zeros((m, M.shape[1]))
    out[1:m] = M[2:m + 1] - M[0:m - 1]
    return out


def _conv_matrix_interval(b, rows, cols):
    """Interval version of conv1_matrix for exact float data b."""
    b = np.asarray(b, dtype=float)
    lb = len(b)
    k = np.arange(rows)[:, None]
    j = np.arange(cols)[None, :]

    def gather(idx):
        idx = np.abs(idx)
        out = np.zeros(idx.shape)
        ok = idx < lb
        out[ok] = b[idx[ok]]
        return out

    first = gather(k - j)
    second = gather(k + j)
    second[:, 0] = 0.0
    return Interval(first) + Interval(second)


def jacobian_bvp(beta, x, dP, interval=False):
    """D_x of the projected operator at (beta, x).

    ``dP`` is dP/dpsi at x.psi (4-vector, float or Interval).  With
    ``interval=True`` the result is an Interval matrix enclosing the exact
    Jacobian for the float data x.
    """
    m = x.m
    n = 4 * m + 2
    bl = _blocks(m)
    xs = x.x
    if interval:
        J = Interval.zeros((n, n))
        L = as_interval(x.L)
        beta_ = as_interval(beta)
        conv_m = _conv_matrix_interval
        lift = Interval
    else:
        J = np.zeros((n, n))
        L = float(x.L)
        beta_ = float(beta)
        conv_m = conv1_matrix
        lift = np.asarray
    eye_ext = np.zeros((m + 1, m))
    eye_ext[np.arange(m), np.arange(m)] = 1.0
    shift_eye = lift(_shift_rows(eye_ext, m))
    diag = np.diag(2.0 * np.arange(m))
    # symmetry rows
    J[0, bl[3]] = lift(_alt_weights(m))
    J[1, bl[5]] = lift(_alt_weights(m))
    # L column
    g = _field_terms(beta_, *(lift(xs[i]) for i in range(4)))
    for i in range(4):
        sd = shift_diff(g[i], m)
        J[bl[2 + i], 0] = sd
    # x-derivatives, rows k >= 1
    C2 = _shift_rows(conv_m(xs[1], m + 1, m), m)
    C1 = _shift_rows(conv_m(xs[0], m + 1, m), m)
    J[bl[2], bl[2]] = C2 * L + lift(diag)
    J[bl[2], bl[3]] = (C1 + shift_eye) * L
    J[bl[3], bl[3]] = lift(diag)
    J[bl[3], bl[4]] = shift_eye * L
    J[bl[4], bl[4]] = lift(diag)
    J[bl[4], bl[5]] = shift_eye * L
    J[bl[5], bl[5]] = lift(diag)
    J[bl[5], bl[2]] = -(shift_eye * L)
    J[bl[5], bl[4]] = -(shift_eye * (L * beta_))
    # boundary rows k = 0 and the psi column
    ew = _end_weights(m)
    for i in range(4):
        r = 2 + i * m
        J[r, bl[2 + i]] = lift(ew)
        J[r, 1] = -dP[i]
    return J


# -- Newton and initial data -------------------------------------------------------------

def newton_solve_bvp(beta, m, chart, initial, tol=1e-10, nu=1.0, max_iter=40):
    """Float Newton iteration on the projected operator.

    The residual is measured in the norm of the unknown space with weight nu.
    """
    x = initial.resized(m)
    w = cheb_weights(m, nu).hi
    for it in range(max_iter):
        Fv = F_bar(beta, x, chart)
        res = _res_norm(Fv, m, w)
        if not np.isfinite(res):
            break
        if res <= tol:
            return _wrapped(x)
        Jm = jacobian_bvp(beta, x, chart.dvalue(x.psi))
        try:
            step = np.linalg.solve(Jm, Fv)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        x = OrbitPoint.from_vector(x.to_vector() - step, m)
    Fv = F_bar(beta, x, chart)
    res = _res_norm(Fv, m, w)
    if np.isfinite(res) and res <= tol:
        return _wrapped(x)
    raise NewtonDiverged(f"BVP Newton did not converge at beta={beta} (residual {res:.3e})")


def _res_norm(Fv, m, w):
    comps = [abs(Fv[0]), abs(Fv[1])]
    for i in range(4):
        comps.append(float(np.abs(Fv[2 + i * m:2 + (i + 1) * m]) @ w))
    return max(comps)


def _wrapped(x):
    return OrbitPoint(x.L, wrap_angle(x.psi), x.x)


def _ode(beta):
    def rhs(t, v):
        return [v[1] + v[0] * v[1], v[2], v[3], -beta * v[2] - v[0]]
    return rhs


def shoot_candidates(beta, chart, t_max=12.0, n_psi=48):
    """Symmetric orbits found by integrating backward from the chart circle.

    Returns a list of (psi, T) with v2 = v4 = 0 after backward time T, sorted
    by T.  Used only to seed Newton for the very first parameter value.
    """
    rhs = _ode(beta)

    def event(t, v):
        return v[1]

    def blowup(t, v):
        return 50.0 - abs(v[0]) - abs(v[2])
    blowup.terminal = True

    table = []
    grid = np.linspace(0.0, TWO_PI, n_psi, endpoint=False)
    for psi in grid:
        sol = solve_ivp(rhs, [0.0, -t_max], chart.value(psi), events=(event, blowup),
                        rtol=1e-9, atol=1e-11)
        table.append([(-t, v[3]) for t, v in zip(sol.t_events[0], sol.y_events[0])])

    def end(q):
        sol = solve_ivp(rhs, [0.0, -q[1]], chart.value(q[0]), rtol=1e-12, atol=1e-13)
        return sol.y[:, -1]

    found = []
    for i in range(n_psi):
        a, b = table[i], table[(i + 1) % n_psi]
        for ta, fa in a:
            # pair with the event of the neighbouring ray closest in time
            if not b:
                break
            tb, fb = min(b, key=lambda e: abs(e[0] - ta))
            if fa * fb < 0 and abs(ta - tb) < 1.0:
                w = fa / (fa - fb)
                p0 = grid[i] + w * (TWO_PI / n_psi)
                q, info, ier, _ = fsolve(lambda q: end(q)[[1, 3]], [p0, ta + w * (tb - ta)],
                                         xtol=1e-12, full_output=True)
                if ier == 1 and q[1] > 0 and np.max(np.abs(end(q)[[1, 3]])) < 1e-9:
                    q = (wrap_angle(q[0]), float(q[1]))
                    if not any(abs(q[1] - f[1]) < 1e-6 for f in found):
                        found.append(q)
    return sorted(found, key=lambda q: q[1])


def chebyshev_from_shooting(beta, chart, psi, T, m):
    """Chebyshev coefficients of the backward trajectory, t = 1 at the chart."""
    rhs = _ode(beta)
    sol = solve_ivp(rhs, [0.0, -T], chart.value(psi), rtol=1e-13, atol=1e-14,
                    dense_output=True, method="DOP853")
    L = T / 2.0

    def f(t):
        return sol.sol(-(1.0 - t) * L)

    x = np.zeros((4, m))
    for i in range(4):
        c = npcheb.chebinterpolate(lambda t, i=i: f(t)[i], m - 1)
        x[i] = c
        x[i, 1:] *= 0.5
    return OrbitPoint(L, wrap_angle(psi), x)


def initial_orbit(beta, chart, m):
    """Seed for the first Newton solve: the shortest symmetric candidate."""
    cands = shoot_candidates(beta, chart)
    if not cands:
        raise NewtonDiverged(f"no symmetric orbit candidate found by shooting at beta={beta}")
    psi, T = cands[0]
    return chebyshev_from_shooting(beta, chart, psi, T, m)


# -- evaluation -----------------------------------------------------------------------------

def eval_orbit(x, t):
    """v(t) = x_0 + 2 sum x_k T_k(t) by Clenshaw's recurrence (4-vector or (4, n))."""
    coeffs = x.x if isinstance(x, OrbitPoint) else np.asarray(x)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0):
        raise ValueError("t must lie in [-1, 1]")
    b1 = np.zeros(coeffs.shape[:-1] + t.shape)
    b2 = np.zeros_like(b1)
    for k in range(coeffs.shape[-1] - 1, 0, -1):
        c = coeffs[..., k, None] if t.ndim else coeffs[..., k]
        b1, b2 = 2.0 * c + 2.0 * t * b1 - b2, b1
    c0 = coeffs[..., 0, None] if t.ndim else coeffs[..., 0]
    return c0 + t * b1 - b2


def reconstruct_u(v1):
    v1 = np.asarray(v1, dtype=float)
    if np.any(v1 <= -1.0):
        raise LogDomain("v1 <= -1 has no logarithm")
    return np.log1p(v1)


def diagnostics(x, beta, chart, n_samples=64):
    """Non-rigorous residuals of a float solution."""
    t = np.cos(np.pi * (np.arange(n_samples) + 0.5) / n_samples)
    v = eval_orbit(x, t)
    c = x.x.copy()
    c[:, 1:] *= 2.0
    dv = np.array([npcheb.chebval(t, npcheb.chebder(c[i])) for i in range(4)])
    field_ = np.array([v[1] + v[0] * v[1], v[2], v[3], -beta * v[2] - v[0]])
    ode = float(np.max(np.abs(dv - x.L * field_)))
    boundary = float(np.max(np.abs(eval_orbit(x, 1.0) - chart.value(x.psi))))
    left = eval_orbit(x, -1.0)
    return {"ode_residual": ode, "boundary_residual": boundary,
            "symmetry_v2": float(abs(left[1])), "symmetry_v4": float(abs(left[3]))}


# -- approximate inverse ----------------------------------------------------------------------

@dataclass
class BvpOperatorA:
    """Finite block of A (float, stored exactly); the tail acts as 1/(2k) on the diagonal."""

    m: int
    A: np.ndarray
    absA: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.absA is None:
            self.absA = np.abs(self.A)

    def block(self, l, i):
        bl = _blocks(self.m)
        return self.A[bl[l], bl[i]]

    def apply(self, v):
        """Action on a finite vector padded beyond m (tail rows use 1/(2k))."""
        return self.A @ v

    def tail(self, k):
        return 1.0 / (2.0 * k)


def build_A_bvp(beta0, x0, chart):
    Jm = jacobian_bvp(beta0, x0, chart.dvalue(x0.psi))
    try:
        A = np.linalg.inv(Jm)
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc
    if not np.all(np.isfinite(A)):
        raise SingularJacobian("non-finite approximate inverse")
    return BvpOperatorA(x0.m, A)


# -- data for a parameter range -----------------------------------------------------------------

@dataclass
class BvpData:
    beta0: float
    beta1: float
    x0: OrbitPoint
    x1: OrbitPoint
    chart0: CircleChart
    chart1: CircleChart
    r_m: float
    nu: float = 1.05
    nu_tilde: float = 1.0
    A: BvpOperatorA = None

    @property
    def m(self):
        return self.x0.m

    @property
    def rho(self):
        return self.chart0.rho

    def prepare(self):
        if self.A is None:
            self.A = build_A_bvp(self.beta0, self.x0, self.chart0)
        return self


class _Range:
    """Interval data shared by all bounds: x0, Delta x, L, psi, beta."""

    def __init__(self, d):
        self.m = d.m
        self.x0 = as_interval(d.x0.x)
        self.dx = as_interval(d.x1.x) - d.x0.x
        self.L0 = as_interval(d.x0.L)
        self.dL = as_interval(d.x1.L) - d.x0.L
        self.psi0 = as_interval(d.x0.psi)
        self.dpsi = as_interval(d.x1.psi) - d.x0.psi
        self.beta0 = as_interval(d.beta0)
        self.dbeta = as_interval(d.beta1) - d.beta0
        self.beta1 = as_interval(d.beta1)
        self.a0 = as_cinterval(d.chart0.a)
        self.da = as_cinterval(d.chart1.a) - as_cinterval(d.chart0.a)
        self.da_float = d.chart1.a - d.chart0.a


# -- s-polynomials -------------------------------------------------------------------------

def _padded(v, n):
    out = Interval.zeros(v.shape[:-1] + (n,))
    k = min(n, v.shape[-1])
    out[..., :k] = v[..., :k]
    return out


def _padd(p, q):
    n = max(len(p), len(q))
    out = []
    for k in range(n):
        if k < len(p) and k < len(q):
            out.append(p[k] + q[k])
        else:
            out.append(p[k] if k < len(p) else q[k])
    return out


def _pscale(p, c):
    """Product of a sequence polynomial p with a scalar polynomial c."""
    out = [None] * (len(p) + len(c) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(c):
            t = a * b
            out[i + j] = t if out[i + j] is None else out[i + j] + t
    return out


def _pconv(p, q):
    out = [None] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            t = conv1(a, b)
            out[i + j] = t if out[i + j] is None else out[i + j] + t
    return out


def compute_S_coefficients(data, R=None):
    """Coefficients S_0..S_3 of F(beta_s, x_s) as a polynomial in s.

    Returns (eta, comps): eta[i] is a list of Interval scalars for the two
    symmetry equations; comps[i] is a list of Interval arrays of length 2m for
    the four sequence components (entry k = 0 holds the boundary equation,
    with mean value enclosures for the psi dependence).
    """
    R = _Range(data) if R is None else R
    m = R.m
    n = 2 * m
    xs = [[R.x0[i], R.dx[i]] for i in range(4)]
    Ls = [R.L0, R.dL]
    bs = [R.beta0, R.dbeta]
    prod = _pconv(xs[0], xs[1])
    g = [
        _padd([_padded(c, n - 1) for c in xs[1]], prod),
        [_padded(c, n - 1) for c in xs[2]],
        [_padded(c, n - 1) for c in xs[3]],
        _padd([-_padded(c, n - 1) for c in xs[0]],
              [-c for c in _pscale([_padded(c, n - 1) for c in xs[2]], bs)]),
    ]
    k2 = Interval(2.0 * np.arange(n))
    comps = []
    hull = R.psi0.hull(R.psi0 + R.dpsi)
    ew = Interval(_end_weights(m))
    P0 = data.chart0.enclose(R.psi0)
    dP = data.chart0.enclose(R.psi0, coeffs=R.da)
    dP0_h = data.chart0.enclose(hull, order=1)
    ddP_h = data.chart0.enclose(hull, order=1, coeffs=R.da)
    for i in range(4):
        lin = _pscale([shift_diff(c, n) for c in g[i]], Ls)
        diag = [k2 * _padded(c, n) for c in xs[i]]
        p = _padd(diag, lin)
        while len(p) < 4:
            p.append(Interval.zeros(n))
        s0 = (ew * R.x0[i]).sum() - P0[i]
        s1 = (ew * R.dx[i]).sum() - dP[i] - R.dpsi * dP0_h[i]
        s2 = -(R.dpsi * ddP_h[i])
        for j, v in enumerate((s0, s1, s2, as_interval(0.0))):
            p[j] = p[j].copy()
            p[j][0] = v
        comps.append(p)
    aw = Interval(_alt_weights(m))
    eta = [[(aw * R.x0[1]).sum(), (aw * R.dx[1]).sum()],
           [(aw * R.x0[3]).sum(), (aw * R.dx[3]).sum()]]
    return eta, comps


# -- Y bound ---------------------------------------------------------------------------------

def _wsum_up(vals, w_hi):
    """Upper bound of sum vals * w for nonnegative data."""
    return _sum_up(_mul_up(vals, w_hi))


def y_bound_bvp(data, S=None):
    data.prepare()
    m = data.m
    nu = data.nu
    eta, comps = compute_S_coefficients(data) if S is None else S
    n = 4 * m + 2
    A = data.A
    V = np.zeros(n)
    for j in range(4):
        vec = Interval.zeros(n)
        vec[0] = eta[0][j] if j < len(eta[0]) else 0.0
        vec[1] = eta[1][j] if j < len(eta[1]) else 0.0
        for i in range(4):
            vec[2 + i * m:2 + (i + 1) * m] = comps[i][j][:m]
        V = _up(V + imatmul(A.A, vec).mag())
    mu = _up(data.rho / data.nu_tilde * data.r_m * (1 + 2 ** -50))
    cols = [2 + i * m for i in range(4)]
    V = _up(V + _mul_up(_sum_up(A.absA[:, cols], axis=1), mu))
    w = cheb_weights(2 * m, nu).hi
    Y = np.zeros(6)
    Y[0], Y[1] = V[0], V[1]
    k = np.arange(m, 2 * m)
    for i in range(4):
        Vi = V[2 + i * m:2 + (i + 1) * m]
        tail = np.zeros(m)
        for j in range(4):
            tail = _up(tail + comps[i][j][m:].mag())
        W = _up(tail / (2.0 * k))
        Y[2 + i] = _up(_wsum_up(Vi, w[:m]) + _wsum_up(W, w[m:]))
    return Y


# -- Z bounds --------------------------------------------------------------------------------

def _dual_up(c, nu):
    """max(|c_0|, 1/2 sup |c_k| nu^-k) for a nonnegative row (upper bound)."""
    pw = powers(nu, len(c)).lo
    t = _up(c[1:] / _down(2.0 * pw[1:]))
    return float(max(c[0], np.max(t) if t.size else 0.0))


def _colnorm_up(c, nu):
    return _wsum_up(c, cheb_weights(len(c), nu).hi)


def _opnorm_up(M, nu, tail=None):
    w = cheb_weights(M.shape[0], nu)
    g = gamma_n(M.shape[0] + 2)
    s = _up((w.hi @ M) * (1.0 + 2 * g) + M.shape[0] * 1e-300)
    val = float(np.max(_up(s / w.lo)))
    return max(val, tail) if tail is not None else val


def z0_bound_bvp(data, R):
    """Z0 from B = I - A D_x Fbar(beta0, x0) in interval arithmetic."""
    m = data.m
    nu = data.nu
    dP = data.chart0.enclose(R.psi0, order=1)
    DF = jacobian_bvp(data.beta0, data.x0, dP, interval=True)
    AD = imatmul(data.A.A, DF)
    n = 4 * m + 2
    eye = np.eye(n)
    absB = _up(np.maximum(np.abs(eye - AD.lo), np.abs(eye - AD.hi)))
    bl = _blocks(m)
    Z0 = np.zeros(6)
    for l in range(6):
        acc = 0.0
        for i in range(6):
            blk = absB[bl[l], bl[i]]
            if l < 2:
                v = float(blk[0, 0]) if i < 2 else _dual_up(blk[0], nu)
            else:
                v = _colnorm_up(blk[:, 0], nu) if i < 2 else _opnorm_up(blk, nu)
            acc = _up(acc + v)
        Z0[l] = acc
    return Z0


def _lambda_terms(data, R):
    """(Lambda, Lambda_tilde) per component: psi-derivative sums of the chart."""
    N = data.chart0.a.shape[-1]
    tri = triangle(N)
    n = (tri.alpha1 - tri.alpha2).astype(float)
    rp = powers(data.rho, N).hi[tri.degree]
    a0 = cinterval_mag(as_cinterval(data.chart0.a))[:, tri.alpha1, tri.alpha2]
    da = cinterval_mag(R.da)[:, tri.alpha1, tri.alpha2]
    lt = _sum_up(_mul_up(a0, _mul_up(rp, n * n)), axis=1)
    l1 = _sum_up(_mul_up(da, _mul_up(rp, np.abs(n))), axis=1)
    lam = _up(_mul_up(lt, float(abs(R.dpsi).hi)) + l1)
    return lam, lt


def z_bounds_bvp(data, R=None):
    """(Z0, Z1, Z2, Z3) as 6-vectors of upper bounds."""
    data.prepare()
    R = _Range(data) if R is None else R
    m = data.m
    nu = data.nu
    nu_i = as_interval(nu)
    A = data.A
    absA = A.absA
    bl = _blocks(m)
    n = 4 * m + 2

    Z0 = z0_bound_bvp(data, R)

    L0 = float(R.L0.hi)
    dL = float(abs(R.dL).hi)
    dbeta = float(abs(R.dbeta).hi)
    beta0 = float(R.beta0.hi)
    beta1 = float(R.beta1.hi)
    inv_num = float((1.0 / nu_i ** m).hi)
    x0_norm = norm_cheb(R.x0, nu).hi
    dx_norm = norm_cheb(R.dx, nu).hi

    lam, lam_t = _lambda_terms(data, R)
    dh = float(derivative_error_bound(data.r_m, data.nu_tilde, data.rho).hi)
    W1 = _up(lam + _up(_up(2.0 * data.rho * dh * (1 + 2 ** -50)) + inv_num))

    # r^2 and r^3 coefficient norms; 2 nu bounds the shifted difference in l1_nu
    two_nu = _up(2.0 * nu)
    s3 = _up(_sum_up(np.array([x0_norm[0], x0_norm[1], dx_norm[0], dx_norm[1], 1.0, L0, dL])))
    W2 = np.array([
        _up(lam_t[0] + _mul_up(2.0 * two_nu, s3)),
        _up(lam_t[1] + 2.0 * two_nu),
        _up(lam_t[2] + 2.0 * two_nu),
        _up(lam_t[3] + _mul_up(2.0 * two_nu, _up(beta1 + 1.0))),
    ])
    W3 = _up(3.0 * two_nu)

    # Q_k estimates for the convolution terms
    Qx = [qk_all(R.x0[i], nu, m, k_max=m) for i in range(2)]
    Qd = [qk_all(R.dx[i], nu, m, k_max=m) for i in range(2)]
    k = np.arange(1, m)
    omega = [_up(Q[0][k - 1] + Q[0][k + 1]) for Q in Qx]
    omega_h = [_up(Q[1][k - 1] + Q[1][k + 1]) for Q in Qx]
    domega = [_up(Q[0][k - 1] + Q[0][k + 1]) for Q in Qd]
    pw = powers(nu, m + 1).lo
    geo = _up(2.0 / pw[k - 1])
    z = np.zeros((4, m))
    z[0, 1:] = _up(_up(dL * _up(geo + omega[0] + omega[1]))
                   + _up(_up(L0 + dL) * _up(domega[0] + domega[1]))
                   + _up(L0 * _up(omega_h[0] + omega_h[1])))
    z[1, 1:] = _mul_up(dL, geo)
    z[2, 1:] = _mul_up(dL, geo)
    c6 = float(abs(R.L0 * R.dbeta + R.dL * R.beta0).hi)
    z[3, 1:] = _mul_up(_up(_up(c6 + dL) + float(abs(R.dL * R.dbeta).hi)), geo)

    # hat and double hat sequences, k = 1..m-1
    def shifted(v):
        return shift_diff(v, m)[1:m]

    cx = conv1(R.x0[0], R.dx[1]) + conv1(R.dx[0], R.x0[1])
    zh = [shifted(_padded(R.dx[1], 2 * m - 1) + cx),
          shifted(R.dx[2]),
          shifted(R.dx[3]),
          shifted(_padded(R.x0[2], m) * R.dbeta + R.dx[0] + R.dx[2] * R.beta0)]
    zhh = [shifted(conv1(R.dx[0], R.dx[1])), None, None, shifted(R.dx[2] * R.dbeta)]
    edge = [L0, L0, L0, _mul_up(L0, _up(beta0 + 1.0))]
    edge = [_up(e * inv_num * (1 + 2 ** -50)) for e in edge]

    # per equation block i: vector over all rows of the linear-in-r estimates
    Zrow = []
    for i in range(4):
        cols = bl[2 + i]
        Ablk = A.A[:, cols][:, 1:]
        absblk = absA[:, cols]
        t = _up(absblk[:, m - 1] * edge[i])
        t = _up(t + _matvec_up(absblk[:, 1:], z[i, 1:]))
        t = _up(t + imatmul(Ablk, zh[i]).mag())
        if zhh[i] is not None:
            t = _up(t + imatmul(Ablk, zhh[i]).mag())
        Zrow.append(t)

    # tail sums for k >= m
    kk = np.arange(m, 2 * m)
    wk = powers(nu, 2 * m).hi[kk]
    fac = _up(_up(wk / kk) * (1 + 2 ** -50))
    pm = float((nu_i ** m / m).hi)
    vn = _up(_up(nu + float((1.0 / nu_i).hi)) / (2.0 * m) * (1 + 2 ** -50))
    LdL = _up(L0 + dL)
    conv_terms = [conv1(R.x0[0], R.x0[1]), conv1(R.x0[0], R.dx[1]), conv1(R.dx[0], R.x0[1]),
                  conv1(R.dx[0], R.dx[1])]
    tail3 = 0.0
    for c in conv_terms:
        sd = shift_diff(c, 2 * m)[m:2 * m].mag()
        tail3 = _up(tail3 + _wsum_up(sd, fac))
    x0a = R.x0.mag()
    dxa = R.dx.mag()
    Zinf = np.zeros(4)
    Zinf[0] = _up(_mul_up(_mul_up(vn, LdL), _up(_sum_up(np.array([x0_norm[0], x0_norm[1],
                                                                  dx_norm[0], dx_norm[1], 1.0]))))
                  + tail3 + _mul_up(pm, _up(dxa[1, m - 1] + x0a[1, m - 1])))
    Zinf[1] = _up(_mul_up(vn, LdL) + _mul_up(pm, _up(x0a[2, m - 1] + dxa[2, m - 1])))
    Zinf[2] = _up(_mul_up(vn, LdL) + _mul_up(pm, _up(x0a[3, m - 1] + dxa[3, m - 1])))
    Zinf[3] = _up(_mul_up(_mul_up(vn, LdL), _up(1.0 + beta1))
                  + _mul_up(pm, _up(_mul_up(beta1, _up(x0a[2, m - 1] + dxa[2, m - 1]))
                                    + x0a[0, m - 1] + dxa[0, m - 1])))

    w = cheb_weights(m, nu).hi
    tail_op = _up(1.0 / (2.0 * m))
    Z1 = np.zeros(6)
    Z2 = np.zeros(6)
    Z3 = np.zeros(6)
    for l in range(6):
        rows = bl[l]
        acc = 0.0
        if l < 2:
            r = rows.start
            acc = _up(_up(absA[r, 0] + absA[r, 1]) * inv_num * (1 + 2 ** -50))
            for i in range(4):
                c0 = bl[2 + i].start
                acc = _up(acc + _mul_up(absA[r, c0], W1[i]) + Zrow[i][r])
                Z2[l] = _up(Z2[l] + _mul_up(_dual_up(absA[r, bl[2 + i]], nu), W2[i]))
            Z3[l] = _mul_up(_dual_up(absA[r, bl[2]], nu), W3)
        else:
            acc = _up(_up(_colnorm_up(absA[rows, 0], nu) + _colnorm_up(absA[rows, 1], nu))
                      * inv_num * (1 + 2 ** -50))
            for i in range(4):
                c0 = bl[2 + i].start
                acc = _up(acc + _mul_up(_colnorm_up(absA[rows, c0], nu), W1[i])
                          + _wsum_up(Zrow[i][rows], w))
                op = _opnorm_up(absA[rows, bl[2 + i]], nu, tail_op if l == 2 + i else None)
                Z2[l] = _up(Z2[l] + _mul_up(op, W2[i]))
                if i == 0:
                    Z3[l] = _mul_up(op, W3)
            acc = _up(acc + Zinf[l - 2])
        Z1[l] = acc
    return Z0, Z1, Z2, Z3


# -- certificate ----------------------------------------------------------------------------

@dataclass
class BvpCertificate:
    beta0: float
    beta1: float
    m: int
    nu: float
    rho: float
    r: float
    r_m: float
    Y: np.ndarray
    Z0: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    Z3: np.ndarray
    x0: OrbitPoint
    x1: OrbitPoint

    def recheck(self):
        """p_l(r) < 0 for every component from the stored bounds alone."""
        coeffs = radii_coefficients(self.Y, (self.Z0, self.Z1, self.Z2, self.Z3))
        return all(float(_poly_eval(cs, self.r).hi) < 0 for cs in coeffs)

    @property
    def L_bar(self):
        return 0.5 * (self.x0.L + self.x1.L)


def bvp_bounds(data):
    data.prepare()
    R = _Range(data)
    Y = y_bound_bvp(data)
    Z0, Z1, Z2, Z3 = z_bounds_bvp(data, R)
    return Y, Z0, Z1, Z2, Z3


def validate_bvp_range(beta0, beta1, x0, x1, chart0, chart1, r_m, nu=1.05, nu_tilde=1.0, A=None):
    """Prove the BVP for all beta in [beta0, beta1]; returns (certificate, data)."""
    if x1.m != x0.m:
        raise ValueError("endpoint solutions must have the same m")
    x1 = OrbitPoint(x1.L, align_angle(x0.psi, x1.psi), x1.x)
    data = BvpData(beta0, beta1, x0, x1, chart0, chart1, float(r_m), nu, nu_tilde, A)
    Y, Z0, Z1, Z2, Z3 = bvp_bounds(data)
    r = radii_check(Y, (Z0, Z1, Z2, Z3))
    cert = BvpCertificate(beta0, beta1, x0.m, nu, chart0.rho, r, float(r_m), Y, Z0, Z1, Z2, Z3, x0, x1)
    return cert, data
