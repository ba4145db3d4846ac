"""Pre-build oracle: reference constants of the unit Koranyi sphere.

Standalone on purpose -- this script must not import the package it is used
to test.  It fixes, before the main build, the numerical values that the
test suite freezes as regression targets:

  V_K   volume of the unit Koranyi ball {((x1^2+x2^2)^2 + 16 x3^2)^{1/4} < 1}
  P_K   horizontal perimeter of its boundary sphere
  HK_L  int_{sphere} H0^{-1} dsigma_H  (Heintze-Karcher left side)

Routes, kept independent of each other:
  1. closed forms: cylindrical reduction gives
        V_K  = pi * int_0^1 r sqrt(1-r^4) dr               = pi^2/8
        P_K  = pi * int_0^{pi/2} sqrt(cos a) da            (see below)
        HK_L = d/dt |{u < t}| at t=0 for u = (3/4) log rho = (4/3) V_K = pi^2/6
     For P_K: with u = ||x||_K the coarea weight is ||grad0 u|| = sqrt(P)/u,
     P = x1^2+x2^2.  Writing 4 x3 = r^2 tan(a) reduces the band integral to
     the 1-D integral above, i.e. P_K = pi^{3/2} Gamma(3/4) / (2 Gamma(5/4)).
  2. Monte Carlo volume (uniform box sampling).
  3. High-resolution (up to 256^3) narrow-band coarea quadrature with
     analytic integrands, Richardson-extrapolated in the band half-width
     delta (band average of the gauge sphere is exactly P_K*(1+delta^2))
     and checked across grid resolutions.

Run:  python tools/oracle_gauge_sphere.py
"""

import numpy as np
from scipy import integrate
from scipy.special import gamma


# ----------------------------------------------------------------- closed forms

def closed_forms():
    v_quad, _ = integrate.quad(lambda r: np.pi * r * np.sqrt(1.0 - r**4), 0.0, 1.0)
    p_quad, _ = integrate.quad(lambda a: np.pi * np.sqrt(np.cos(a)), 0.0, np.pi / 2)
    p_gamma = np.pi**1.5 * gamma(0.75) / (2.0 * gamma(1.25))
    return v_quad, p_quad, p_gamma


# ----------------------------------------------------------------- grid quadrature

def band_values(n1, n3, delta, what):
    """Coarea band average over {|field - level| < delta} with analytic weights.

    what = 'perimeter': field u = ||x||_K, level 1, weight ||grad0 u||
    what = 'hk'       : field u = (3/4) log rho, level 0, weight H0^-1 * ||grad0 u||
    Box is trimmed to the sphere (|x3| <= 1/4 on the surface) so the nodes
    are spent where the band lives.
    """
    lo1, hi1 = -1.18, 1.18
    lo3, hi3 = -0.36, 0.36
    x1 = np.linspace(lo1, hi1, n1)
    x3 = np.linspace(lo3, hi3, n3)
    h1 = x1[1] - x1[0]
    h3 = x3[1] - x3[0]
    cell = h1 * h1 * h3

    X1 = x1[:, None, None]
    X2 = x1[None, :, None]
    X3 = x3[None, None, :]
    P = X1**2 + X2**2
    rho = P**2 + 16.0 * X3**2

    if what == 'perimeter':
        u = rho**0.25
        field = u
        level = 1.0
        weight = np.sqrt(P) / u          # ||grad0 ||x||_K||
    elif what == 'hk':
        field = 0.75 * np.log(rho)
        level = 0.0
        # H0 = ||grad0 u|| = 3 sqrt(P/rho); integrand H0^-1 * ||grad0 u|| == 1
        grad0 = 3.0 * np.sqrt(P / rho)
        weight = (1.0 / grad0) * grad0
    else:
        raise ValueError(what)

    mask = np.abs(field - level) < delta
    return np.sum(weight[mask]) * cell / (2.0 * delta)


def richardson_delta(f, delta):
    """Eliminate the O(delta^2) band bias: (4 f(d) - f(2d)) / 3."""
    return (4.0 * f(delta) - f(2.0 * delta)) / 3.0


def monte_carlo_volume(n, seed):
    rng = np.random.default_rng(seed)
    lo = np.array([-1.0, -1.0, -0.25])
    hi = np.array([1.0, 1.0, 0.25])
    x = rng.uniform(lo, hi, size=(n, 3))
    inside = (x[:, 0]**2 + x[:, 1]**2)**2 + 16.0 * x[:, 2]**2 < 1.0
    box = np.prod(hi - lo)
    frac = inside.mean()
    err = box * np.sqrt(frac * (1 - frac) / n)
    return box * frac, err


def main():
    v_quad, p_quad, p_gamma = closed_forms()
    print("closed forms:")
    print(f"  V_K  quad        = {v_quad:.12f}   pi^2/8 = {np.pi**2 / 8:.12f}")
    print(f"  P_K  quad        = {p_quad:.12f}")
    print(f"  P_K  gamma form  = {p_gamma:.12f}")
    print(f"  HK_L = (4/3)V_K  = {4 * v_quad / 3:.12f}   pi^2/6 = {np.pi**2 / 6:.12f}")

    mc, mc_err = monte_carlo_volume(20_000_000, seed=20260815)
    print(f"  V_K  Monte Carlo = {mc:.6f} +- {mc_err:.6f}")

    print("band quadrature (Richardson in delta):")
    for n1, n3, delta in [(128, 128, 0.04), (192, 192, 0.03), (256, 256, 0.02)]:
        pk = richardson_delta(lambda d: band_values(n1, n3, d, 'perimeter'), delta)
        hk = richardson_delta(lambda d: band_values(n1, n3, d, 'hk'), delta)
        print(f"  n={n1:3d}^2x{n3:3d} delta={delta:.3f}:  P_K = {pk:.8f}   HK_L = {hk:.8f}")

    print("frozen values for the test suite:")
    print(f"  P_K  = {p_gamma:.10f}")
    print(f"  V_K  = {np.pi**2 / 8:.10f}")
    print(f"  HK_L = {np.pi**2 / 6:.10f}")


if __name__ == "__main__":
    main()
