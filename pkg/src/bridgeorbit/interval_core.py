"""Outward-rounded interval arithmetic on numpy arrays.

An :class:`Interval` holds two float64 arrays ``lo`` and ``hi`` of the same
shape; a scalar interval is the 0-d case.  Every operation first computes the
round-to-nearest result and then steps one float outward with
``np.nextafter``.  Round-to-nearest is off by at most half an ulp, so a single
step is enough for the basic operations, including in the subnormal range.
Library functions (exp, log, sin, cos) come from ``math`` and are widened by
two steps, which covers their documented sub-ulp error with margin.

Large structured products (matrix products, convolutions) go through
:func:`rigorous_bilinear`, which calls fast float routines on the midpoints
and adds an a priori rounding error bound.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "IntervalError", "DivisionByZeroInterval", "NegativeSqrt", "NonPositiveLog",
    "Interval", "CInterval", "as_interval", "rigorous_bilinear", "imatmul",
    "iv_add", "iv_sub", "iv_mul", "iv_div", "iv_sqrt", "iv_sincos",
    "iv_exp_unit", "iv_log", "iv_exp", "PI", "gamma_n", "hex_encode", "hex_decode",
]

UNIT_ROUNDOFF = 2.0 ** -53
TINY = 2.0 ** -1074


class IntervalError(ArithmeticError):
    """Base class for invalid interval operations."""


class DivisionByZeroInterval(IntervalError):
    pass


class NegativeSqrt(IntervalError):
    pass


class NonPositiveLog(IntervalError):
    pass


def _down(x, steps=1):
    for _ in range(steps):
        x = np.nextafter(x, -np.inf)
    return x


def _up(x, steps=1):
    for _ in range(steps):
        x = np.nextafter(x, np.inf)
    return x


def _down_sum(x):
    """Lower rounding of a computed sum; a zero sum is exact in IEEE arithmetic."""
    return np.where(x == 0, 0.0, _down(x))


def _up_sum(x):
    return np.where(x == 0, 0.0, _up(x))


def _down_prod(x):
    """Lower rounding of a product or quotient; +0.0 means the true value is >= 0."""
    return np.where((x == 0) & ~np.signbit(x), 0.0, _down(x))


def _up_prod(x):
    return np.where((x == 0) & np.signbit(x), 0.0, _up(x))


def gamma_n(n):
    """Upper bound for n*u/(1 - n*u), the classical dot-product error constant."""
    nu = float(n) * UNIT_ROUNDOFF
    if nu >= 0.5:
        raise ValueError("problem size too large for the a priori error bound")
    return float(_up(_up(nu) / _down(1.0 - nu)))


def _libm(fn, x):
    x = np.asarray(x, dtype=float)
    out = np.frompyfunc(fn, 1, 1)(x)
    return np.asarray(out, dtype=float).reshape(x.shape)


def _exp(v):
    """math.exp saturating to +inf past the largest finite result."""
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


class Interval:
    """Closed real interval (or array of intervals) with outward rounding."""

    __slots__ = ("lo", "hi")
    __array_priority__ = 1000

    def __init__(self, lo, hi=None):
        lo = np.array(lo, dtype=float)
        hi = lo.copy() if hi is None else np.array(hi, dtype=float)
        if lo.shape != hi.shape:
            lo, hi = np.broadcast_arrays(lo, hi)
            lo, hi = lo.copy(), hi.copy()
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise IntervalError("NaN endpoint")
        if (lo > hi).any():
            raise IntervalError("lower endpoint exceeds upper endpoint")
        self.lo = lo
        self.hi = hi

    @classmethod
    def _raw(cls, lo, hi):
        obj = cls.__new__(cls)
        obj.lo = lo
        obj.hi = hi
        return obj

    @classmethod
    def from_midrad(cls, mid, rad):
        mid = np.asarray(mid, dtype=float)
        rad = np.asarray(rad, dtype=float)
        return cls._raw(_down(mid - rad), _up(mid + rad))

    @classmethod
    def zeros(cls, shape):
        return cls._raw(np.zeros(shape), np.zeros(shape))

    # -- array protocol ---------------------------------------------------
    @property
    def shape(self):
        return self.lo.shape

    @property
    def ndim(self):
        return self.lo.ndim

    @property
    def size(self):
        return self.lo.size

    def __len__(self):
        return len(self.lo)

    def __getitem__(self, key):
        return Interval._raw(self.lo[key], self.hi[key])

    def __setitem__(self, key, value):
        value = as_interval(value)
        self.lo[key] = value.lo
        self.hi[key] = value.hi

    def copy(self):
        return Interval._raw(self.lo.copy(), self.hi.copy())

    def reshape(self, *shape):
        return Interval._raw(self.lo.reshape(*shape), self.hi.reshape(*shape))

    @property
    def T(self):
        return Interval._raw(self.lo.T, self.hi.T)

    def __repr__(self):
        if self.ndim == 0:
            return f"Interval([{float(self.lo)!r}, {float(self.hi)!r}])"
        return f"Interval(shape={self.shape})"

    # -- queries ----------------------------------------------------------
    @property
    def mid(self):
        return 0.5 * self.lo + 0.5 * self.hi

    @property
    def rad(self):
        m = self.mid
        return np.maximum(_up(m - self.lo), _up(self.hi - m))

    def midrad(self):
        m = self.mid
        return m, np.maximum(_up(m - self.lo), _up(self.hi - m))

    @property
    def width(self):
        return self.hi - self.lo

    def mag(self):
        """Upper bound of |x| over the interval (exact)."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def mig(self):
        """Lower bound of |x| over the interval (exact)."""
        return np.where((self.lo <= 0) & (self.hi >= 0), 0.0,
                        np.minimum(np.abs(self.lo), np.abs(self.hi)))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)

    def contains_zero(self):
        return (self.lo <= 0) & (self.hi >= 0)

    def subset(self, other):
        other = as_interval(other)
        return (other.lo <= self.lo) & (self.hi <= other.hi)

    def hull(self, other):
        other = as_interval(other)
        return Interval._raw(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def __abs__(self):
        return Interval._raw(self.mig(), self.mag())

    # -- arithmetic -------------------------------------------------------
    def __neg__(self):
        return Interval._raw(-self.hi, -self.lo)

    def __pos__(self):
        return self

    def __add__(self, other):
        other = as_interval(other)
        return Interval._raw(_down_sum(self.lo + other.lo), _up_sum(self.hi + other.hi))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_interval(other)
        return Interval._raw(_down_sum(self.lo - other.hi), _up_sum(self.hi - other.lo))

    def __rsub__(self, other):
        return as_interval(other) - self

    def __mul__(self, other):
        if isinstance(other, CInterval):
            return NotImplemented
        other = as_interval(other)
        p1 = self.lo * other.lo
        p2 = self.lo * other.hi
        p3 = self.hi * other.lo
        p4 = self.hi * other.hi
        lo = np.minimum(np.minimum(_down_prod(p1), _down_prod(p2)), np.minimum(_down_prod(p3), _down_prod(p4)))
        hi = np.maximum(np.maximum(_up_prod(p1), _up_prod(p2)), np.maximum(_up_prod(p3), _up_prod(p4)))
        return Interval._raw(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, CInterval):
            return NotImplemented
        other = as_interval(other)
        if other.contains_zero().any():
            raise DivisionByZeroInterval("divisor interval contains zero")
        q1 = self.lo / other.lo
        q2 = self.lo / other.hi
        q3 = self.hi / other.lo
        q4 = self.hi / other.hi
        lo = np.minimum(np.minimum(_down_prod(q1), _down_prod(q2)), np.minimum(_down_prod(q3), _down_prod(q4)))
        hi = np.maximum(np.maximum(_up_prod(q1), _up_prod(q2)), np.maximum(_up_prod(q3), _up_prod(q4)))
        return Interval._raw(lo, hi)

    def __rtruediv__(self, other):
        return as_interval(other) / self

    def sqr(self):
        lo2 = self.lo * self.lo
        hi2 = self.hi * self.hi
        top = _up(np.maximum(lo2, hi2))
        bottom = np.where(self.contains_zero(), 0.0,
                          np.maximum(_down(np.minimum(lo2, hi2)), 0.0))
        return Interval._raw(bottom, top)

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise TypeError("only non-negative integer powers are supported")
        if n == 0:
            return Interval._raw(np.ones(self.shape), np.ones(self.shape))
        if n == 1:
            return self
        half = self ** (n // 2)
        sq = half.sqr()
        return sq * self if n % 2 else sq

    # -- elementary functions --------------------------------------------
    def sqrt(self):
        if (self.lo < 0).any():
            raise NegativeSqrt("sqrt of an interval with negative part")
        return Interval._raw(np.maximum(_down(np.sqrt(self.lo)), 0.0), _up(np.sqrt(self.hi)))

    def exp(self):
        with np.errstate(over="ignore"):
            lo = np.maximum(_down(_libm(_exp, self.lo), 2), 0.0)
            hi = _up(_libm(_exp, self.hi), 2)
        return Interval._raw(lo, hi)

    def log(self):
        if (self.lo <= 0).any():
            raise NonPositiveLog("log of an interval reaching zero or below")
        return Interval._raw(_down(_libm(math.log, self.lo), 2), _up(_libm(math.log, self.hi), 2))

    def cos(self):
        return _trig(self, 0)

    def sin(self):
        return _trig(self, 1)

    # -- reductions -------------------------------------------------------
    def sum(self, axis=None):
        """Rigorous sum along an axis."""
        n = self.lo.size if axis is None else self.lo.shape[axis]
        g = gamma_n(max(n, 1) + 2)
        lo_s = np.sum(self.lo, axis=axis)
        hi_s = np.sum(self.hi, axis=axis)
        err_lo = _up(g * np.sum(np.abs(self.lo), axis=axis) + n * TINY)
        err_hi = _up(g * np.sum(np.abs(self.hi), axis=axis) + n * TINY)
        return Interval._raw(_down(lo_s - err_lo), _up(hi_s + err_hi))

    def max_upper(self):
        return float(np.max(self.hi))

    def __matmul__(self, other):
        return imatmul(self, other)

    def __rmatmul__(self, other):
        return imatmul(other, self)


def as_interval(x):
    if isinstance(x, Interval):
        return x
    if isinstance(x, CInterval):
        raise TypeError("expected a real interval")
    arr = np.asarray(x, dtype=float)
    return Interval._raw(arr, arr.copy())


PI = Interval(3.141592653589793, float(np.nextafter(3.141592653589793, 4.0)))


def _trig(x, phase):
    """cos (phase 0) or sin (phase 1) by locating extrema at multiples of pi/2.

    An extremum of cos sits at j*pi/2 with j even, of sin with j odd; the value
    there is +1 when (j - phase) % 4 == 0 and -1 when it is 2.  Candidate j are
    tested against a rigorous enclosure of j*pi/2, so a point close to the
    boundary is counted as inside, which can only widen the result.
    """
    fn = math.cos if phase == 0 else math.sin
    lo, hi = x.lo, x.hi
    f_lo = _libm(fn, lo)
    f_hi = _libm(fn, hi)
    out_lo = np.maximum(_down(np.minimum(f_lo, f_hi), 2), -1.0)
    out_hi = np.minimum(_up(np.maximum(f_lo, f_hi), 2), 1.0)
    half_pi_lo = 3.141592653589793 / 2
    half_pi_hi = float(PI.hi) / 2
    j0 = np.floor(lo / half_pi_hi) - 2
    wide = (hi - lo) >= 6.0
    span = np.where(wide, 0, np.ceil((hi - lo) / half_pi_lo) + 4)
    steps = int(span.max()) if span.size else 0
    for off in range(steps + 1):
        j = j0 + off
        active = off <= span
        a = j * half_pi_lo
        b = j * half_pi_hi
        c_lo = _down(np.minimum(a, b))
        c_hi = _up(np.maximum(a, b))
        hit = active & (c_hi >= lo) & (c_lo <= hi) & (np.mod(j - phase, 2) == 0)
        k = np.mod(j - phase, 4)
        out_hi = np.where(hit & (k == 0), 1.0, out_hi)
        out_lo = np.where(hit & (k == 2), -1.0, out_lo)
    out_lo = np.where(wide, -1.0, out_lo)
    out_hi = np.where(wide, 1.0, out_hi)
    return Interval._raw(out_lo, out_hi)


class CInterval:
    """Rectangular complex enclosure re + i*im."""

    __slots__ = ("re", "im")
    __array_priority__ = 1001

    def __init__(self, re, im=None):
        self.re = as_interval(re)
        self.im = Interval.zeros(self.re.shape) if im is None else as_interval(im)

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=complex)
        return cls(Interval(z.real.copy()), Interval(z.imag.copy()))

    @property
    def shape(self):
        return self.re.shape

    def __len__(self):
        return len(self.re)

    def __getitem__(self, key):
        return CInterval(self.re[key], self.im[key])

    def __setitem__(self, key, value):
        value = as_cinterval(value)
        self.re[key] = value.re
        self.im[key] = value.im

    def copy(self):
        return CInterval(self.re.copy(), self.im.copy())

    def reshape(self, *shape):
        return CInterval(self.re.reshape(*shape), self.im.reshape(*shape))

    def __repr__(self):
        return f"CInterval(re={self.re!r}, im={self.im!r})"

    @property
    def mid(self):
        return self.re.mid + 1j * self.im.mid

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return self.re.contains(z.real) & self.im.contains(z.imag)

    def conj(self):
        return CInterval(self.re, -self.im)

    def __neg__(self):
        return CInterval(-self.re, -self.im)

    def __add__(self, other):
        other = as_cinterval(other)
        return CInterval(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_cinterval(other)
        return CInterval(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return as_cinterval(other) - self

    def __mul__(self, other):
        if isinstance(other, Interval) or np.isrealobj(other) and not isinstance(other, CInterval):
            other = as_interval(other)
            return CInterval(self.re * other, self.im * other)
        other = as_cinterval(other)
        return CInterval(self.re * other.re - self.im * other.im,
                         self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def abs2(self):
        return self.re.sqr() + self.im.sqr()

    def __abs__(self):
        return self.abs2().sqrt()

    def mag(self):
        """Upper bound of the modulus."""
        return abs(self).hi

    def __truediv__(self, other):
        if isinstance(other, Interval) or (np.isrealobj(other) and not isinstance(other, CInterval)):
            other = as_interval(other)
            return CInterval(self.re / other, self.im / other)
        other = as_cinterval(other)
        den = other.abs2()
        num = self * other.conj()
        return CInterval(num.re / den, num.im / den)

    def __rtruediv__(self, other):
        return as_cinterval(other) / self

    def sum(self, axis=None):
        return CInterval(self.re.sum(axis), self.im.sum(axis))

    def __matmul__(self, other):
        return imatmul(self, other)

    def __rmatmul__(self, other):
        return imatmul(other, self)


def as_cinterval(x):
    if isinstance(x, CInterval):
        return x
    if isinstance(x, Interval):
        return CInterval(x)
    z = np.asarray(x)
    if np.iscomplexobj(z):
        return CInterval.from_complex(z)
    return CInterval(as_interval(z))


def _abs_any(x):
    return abs(x) if hasattr(x, "tocsr") else np.abs(x)


_TAU = 1e-150


def _split_tiny(x):
    """(x with entries below _TAU zeroed, 0/1 mask of those entries or None)."""
    if x is None or hasattr(x, "tocsr"):
        return x, None
    x = np.asarray(x, dtype=float)
    tiny = (x > 0) & (x < _TAU)
    if not tiny.any():
        return x, None
    return np.where(tiny, 0.0, x), tiny.astype(float)


def rigorous_bilinear(f, n_terms, am, ar, bm, br):
    """Enclose f(A, B) for a real bilinear float routine f.

    A = am +- ar and B = bm +- br in midpoint-radius form (ar, br may be None
    for exact data).  Every output entry of f must be a sum of at most
    ``n_terms`` products.  With t = fl(f(|am|, |bm|)) the floating result
    fl(f(am, bm)) is within gamma_n * f(|am|, |bm|) of the exact midpoint
    product, and f(|am|, |bm|) <= t / (1 - gamma_n); the radius terms are sums
    of nonnegative products and are inflated the same way.
    """
    n = max(int(n_terms), 1)
    g = gamma_n(n + 4)
    c = np.asarray(f(am, bm), dtype=float)
    abs_a = _abs_any(am)
    abs_b = _abs_any(bm)
    t = np.asarray(f(abs_a, abs_b), dtype=float)
    r = g * t
    ar, ma = _split_tiny(ar)
    br, mb = _split_tiny(br)
    # radius entries below _TAU are replaced by _TAU times a 0/1 mask, which
    # keeps subnormal products (and their slow paths) out of the matmuls
    if br is not None:
        r = r + np.asarray(f(abs_a, br), dtype=float)
    if mb is not None:
        r = r + _TAU * np.asarray(f(abs_a, mb), dtype=float)
    if ar is not None:
        r = r + np.asarray(f(ar, abs_b), dtype=float)
        if br is not None:
            r = r + np.asarray(f(ar, br), dtype=float)
        if mb is not None:
            r = r + _TAU * np.asarray(f(ar, mb), dtype=float)
    if ma is not None:
        r = r + _TAU * np.asarray(f(ma, abs_b), dtype=float)
        if br is not None:
            r = r + _TAU * np.asarray(f(ma, br), dtype=float)
        if mb is not None:
            r = r + _TAU * _TAU * np.asarray(f(ma, mb), dtype=float)
    r = _up((r + 6 * n * TINY) * (1.0 + 3 * g))
    return Interval._raw(_down(c - r), _up(c + r))


def _midrad_or_exact(x):
    if isinstance(x, Interval):
        m, r = x.midrad()
        if not r.any():
            return m, None
        return m, r
    if hasattr(x, "tocsr"):
        return x, None
    return np.asarray(x, dtype=float), None


def _real_matmul(a, b):
    am, ar = _midrad_or_exact(a)
    bm, br = _midrad_or_exact(b)
    n = am.shape[-1] if am.ndim else 1
    return rigorous_bilinear(lambda x, y: x @ y, n, am, ar, bm, br)


def _split(x):
    if isinstance(x, CInterval):
        return x.re, x.im
    if isinstance(x, Interval):
        return x, None
    if hasattr(x, "tocsr"):
        if np.iscomplexobj(x.data):
            return x.real, x.imag
        return x, None
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        return arr.real.copy(), arr.imag.copy()
    return np.asarray(arr, dtype=float), None


def imatmul(a, b):
    """Rigorous matrix (or matrix-vector) product of exact or interval operands.

    Real and complex operands are accepted (complex ones are split into real
    and imaginary parts).  Sparse scipy matrices are allowed as exact
    operands.
    """
    ar, ai = _split(a)
    br, bi = _split(b)
    re = _real_matmul(ar, br)
    if ai is None and bi is None:
        return re
    im = None
    if ai is not None and bi is not None:
        re = re - _real_matmul(ai, bi)
    if bi is not None:
        im = _real_matmul(ar, bi)
    if ai is not None:
        t = _real_matmul(ai, br)
        im = t if im is None else im + t
    return CInterval(re, im)


# -- scalar operation contracts ----------------------------------------------

def iv_add(a, b):
    return as_interval(a) + b


def iv_sub(a, b):
    return as_interval(a) - b


def iv_mul(a, b):
    return as_interval(a) * b


def iv_div(a, b):
    return as_interval(a) / b


def iv_sqrt(a):
    return as_interval(a).sqrt()


def iv_log(a):
    return as_interval(a).log()


def iv_exp(a):
    return as_interval(a).exp()


def iv_sincos(a):
    a = as_interval(a)
    return a.sin(), a.cos()


def iv_exp_unit(psi):
    """Enclosure of exp(i*psi)."""
    s, c = iv_sincos(psi)
    return CInterval(c, s)


# -- exact serialization -----------------------------------------------------

def hex_encode(x):
    """Nested lists of float.hex strings (bit exact)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return float(arr).hex()
    return [hex_encode(v) for v in arr]


def hex_decode(obj):
    if isinstance(obj, str):
        return float.fromhex(obj)
    return np.array([hex_decode(v) for v in obj], dtype=float)
