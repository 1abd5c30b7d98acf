"""Independent high-precision evaluation of the cooling model with mpmath.

Written directly from the model equations, sharing no code with the
package, so it can serve as an oracle for the float implementation.
"""

from mpmath import mp, mpf, exp

mp.dps = 40


def air_temp(alpha, ta0, te, d):
    alpha, ta0, te, d = map(mpf, (alpha, ta0, te, d))
    return ta0 + (te - ta0) * (1 - exp(-alpha * d))


def lam(sigma_km, theta, rho_a, c_a, rho_s, c_s, volume, flow):
    b = mpf(rho_a) * mpf(c_a) / (mpf(rho_s) * mpf(c_s) * mpf(volume))
    return b * mpf(sigma_km) * (1 - exp(-mpf(theta) * mpf(flow)))


def temp(t0, t_air, rate, t):
    return mpf(t0) + (t_air - mpf(t0)) * (1 - exp(-rate * mpf(t)))
