"""
A validated chart of the stable manifold
========================================

The stable manifold of the origin is two dimensional.  Its chart is a power
series in two complex variables; Newton's method computes the coefficients,
the rescaling gamma keeps them of moderate size, and the radii polynomials
bound the truncation error uniformly over a small parameter range.
"""

import numpy as np

from bridgeorbit.manifold import (lam_float, maximize_gamma, newton_solve_manifold, rescale,
                                  validate_manifold_range)

beta0, beta1, N = 1.2, 1.20025, 20
print("stable eigenvalue at beta0:", lam_float(beta0))

a0 = newton_solve_manifold(beta0, N)
gamma = maximize_gamma(beta0, a0, N, eta=0.5, margin=0.09)
print(f"rescaling gamma = {gamma:.5f}")

a1 = newton_solve_manifold(beta1, N, guess=a0)
s0, s1 = rescale(a0, gamma), rescale(a1, gamma)
cert, _ = validate_manifold_range(beta0, beta1, N, gamma, s0, s1, scaled=True)
print(f"chart error r_m = {cert.r_m:.3e} on [{beta0}, {beta1}]")
print("Y  =", np.array2string(cert.Y, precision=2))
print("Z1 =", np.array2string(cert.Z1, precision=3))

# decay of the rescaled coefficients by total degree
deg = np.add.outer(np.arange(N), np.arange(N))
for d in (1, 5, 10, 19):
    print(f"degree {d:2d}: max |a| = {np.abs(s0[:, deg == d]).max():.2e}")
