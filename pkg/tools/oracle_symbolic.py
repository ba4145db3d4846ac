"""Pre-build symbolic oracle (sympy) for horizontal-calculus reference values.

Verifies, in exact arithmetic, the closed-form identities the test suite
freezes:

  * frame commutator: X1 X2 f - X2 X1 f = X3 f  (d/dx3)
  * for rho = (x1^2+x2^2)^2 + 16 x3^2 and u = (3/4) log rho:
      ||grad0 u||^2 = 9 (x1^2+x2^2) / rho
      trace-form H0 = ||grad0 u||  (the field solves H0 = ||grad0 u|| exactly)
  * gauge-norm field g = rho^{1/4} (same level sets, different parametrization):
      at (1,0,0): ||grad0 g|| = 1 while H0 = 3, so the residual H0 - ||grad0 g||
      equals 2 there (the gauge norm itself is not an arrival time)
  * tau = rho shifted to center y: Delta0 tau = (3/2)||grad0 tau||^2 / tau,
      Delta0,inf tau = (3/4)||grad0 tau||^4 / tau, and the expanded p-Laplacian
      Delta0,p tau = (3p/4) ||grad0 tau||^p / tau
  * radial profile l = (d/r)^{(4-p)/(1-p)} of the gauge distance d is
      p-harmonic off the center axis

Run:  python3 tools/oracle_symbolic.py
"""

import sympy as sp

x1, x2, x3 = sp.symbols('x1 x2 x3', real=True)
y1, y2, y3 = sp.symbols('y1 y2 y3', real=True)
p = sp.symbols('p', positive=True)


def X1(f):
    return sp.diff(f, x1) - x2 / 2 * sp.diff(f, x3)


def X2(f):
    return sp.diff(f, x2) + x1 / 2 * sp.diff(f, x3)


def grad0_sq(f):
    return X1(f)**2 + X2(f)**2


def sym_hess(f):
    h11 = X1(X1(f))
    h22 = X2(X2(f))
    h12 = (X1(X2(f)) + X2(X1(f))) / 2
    return h11, h12, h22


def trace_H0(f):
    """Tr[(I - n (x) n) Hess*] / ||grad0 f|| with n = grad0 f / ||grad0 f||."""
    a, b = X1(f), X2(f)
    q = a**2 + b**2
    h11, h12, h22 = sym_hess(f)
    return (h11 + h22 - (a**2 * h11 + 2 * a * b * h12 + b**2 * h22) / q) / sp.sqrt(q)


def lap0(f):
    h11, _, h22 = sym_hess(f)
    return h11 + h22


def lap0_inf(f):
    a, b = X1(f), X2(f)
    h11, h12, h22 = sym_hess(f)
    return a**2 * h11 + 2 * a * b * h12 + b**2 * h22


def main():
    f = sp.Function('f')(x1, x2, x3)
    comm = sp.simplify(X1(X2(f)) - X2(X1(f)) - sp.diff(f, x3))
    print("commutator X1X2 - X2X1 - d/dx3 :", comm)

    P = x1**2 + x2**2
    rho = P**2 + 16 * x3**2
    u = sp.Rational(3, 4) * sp.log(rho)

    g2 = sp.simplify(grad0_sq(u) - 9 * P / rho)
    print("||grad0 u||^2 - 9P/rho        :", g2)

    res = sp.simplify(trace_H0(u) - sp.sqrt(grad0_sq(u)))
    res = sp.simplify(res.subs([(x1, sp.Rational(3, 7)), (x2, sp.Rational(-2, 5)),
                                (x3, sp.Rational(1, 3))]))
    print("arrival field H0 - ||grad0 u||:", res)

    g = rho**sp.Rational(1, 4)
    at_eq = [(x1, 1), (x2, 0), (x3, 0)]
    print("gauge field at (1,0,0):  ||grad0 g|| =", sp.simplify(sp.sqrt(grad0_sq(g)).subs(at_eq)),
          "  H0 =", sp.simplify(trace_H0(g).subs(at_eq)))

    # shifted fourth-power gauge tau centered at y (group translation)
    z1, z2 = x1 - y1, x2 - y2
    z3 = x3 - y3 - (y1 * x2 - y2 * x1) / 2
    Pz = z1**2 + z2**2
    tau = Pz**2 + 16 * z3**2
    q = grad0_sq(tau)
    print("Delta0 tau - (3/2) q / tau    :", sp.simplify(lap0(tau) - sp.Rational(3, 2) * q / tau))
    print("Delta0inf tau - (3/4) q^2/tau :", sp.simplify(lap0_inf(tau) - sp.Rational(3, 4) * q**2 / tau))
    # general p resists global simplification; check exactly at rational points
    pt = [(x1, sp.Rational(3, 7)), (x2, sp.Rational(-2, 5)), (x3, sp.Rational(1, 3)),
          (y1, sp.Rational(1, 2)), (y2, sp.Rational(-1, 3)), (y3, sp.Rational(2, 7))]
    for pv in (sp.Rational(3, 2), sp.Rational(11, 10), sp.Rational(5, 2)):
        dp = q**((pv - 2) / 2) * lap0(tau) + (pv - 2) * q**((pv - 4) / 2) * lap0_inf(tau)
        r = sp.simplify((dp - sp.Rational(3, 4) * pv * q**(pv / 2) / tau).subs(pt))
        print("Delta0p tau - (3p/4) q^{p/2}/tau @ p=%s:" % pv, r)

    # radial p-harmonic profile at p = 3/2, centered at y = 0
    pa = sp.Rational(3, 2)
    kappa = (4 - pa) / (1 - pa)
    d = (P**2 + 16 * x3**2)**sp.Rational(1, 4)
    l = d**kappa
    ql = grad0_sq(l)
    dpl = ql**((pa - 2) / 2) * lap0(l) + (pa - 2) * ql**((pa - 4) / 2) * lap0_inf(l)
    dpl = sp.simplify(dpl.subs([(x1, sp.Rational(2, 3)), (x2, sp.Rational(-1, 4)),
                                (x3, sp.Rational(1, 5))]))
    print("p-harmonic profile residual p=1.5:", dpl)


if __name__ == "__main__":
    main()
