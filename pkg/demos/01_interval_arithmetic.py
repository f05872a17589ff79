"""
Outward rounded interval arithmetic
===================================

Every operation rounds its endpoints one step outward, so the true real
result is always enclosed.  This is the arithmetic all proofs are run in.
"""

import math

import numpy as np

from bridgeorbit.interval_core import PI, CInterval, Interval

# a float is not the real number it was typed as; the interval around it is
x = Interval(0.1)
print("0.1 * 3 =", x * 3)

# pi is enclosed by two neighbouring floats
print("pi in", PI, "width", float(PI.hi - PI.lo))

# the elementary functions enclose their exact values
print("exp([0, 1]) =", Interval(0.0, 1.0).exp())
print("sin([1.5, 1.6]) =", Interval(1.5, 1.6).sin(), "(contains the maximum 1)")

# arrays of intervals behave like numpy arrays
v = Interval(np.linspace(0.0, 1.0, 5), np.linspace(0.0, 1.0, 5) + 1e-3)
r = v.sqrt()
print("sqrt of an interval array:\n lo", r.lo, "\n hi", r.hi)

# complex intervals for the eigenvalue data
z = CInterval.from_complex(np.array([math.cos(1.0) + 1j * math.sin(1.0)]))
m = z.abs2()
print("|e^{i}|^2 in", float(m.lo[0]), float(m.hi[0]))
