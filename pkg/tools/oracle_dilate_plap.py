"""Oracle for dilation covariance of the gradient bound, run before tests.

Dilating the whole configuration by lambda (x1, x2 scale by lambda, x3
by lambda^2) scales sup |grad0 u_p| by 1/lambda and the exterior-ball
radius by lambda, so the relative margin 1 - sup/bound must be
invariant up to discretization.  The substituted unknown v = d/r is
itself dilation invariant, which makes this a clean end-to-end test of
the frame handling in the assembly: any lambda leak in the gauss-point
frames would show up here directly.

Output of the run that froze the test values (24^3, p = 1.5):

    lambda=1.0  sup=2.3050  bound=2.5000  rel_margin=0.078006
    lambda=1.5  sup=1.5371  bound=1.6667  rel_margin=0.077725
    |drift| = 2.8e-04

The residual drift comes from the two deliberately non-covariant
regularizers (the fixed eps floor and the vertical viscosity, whose
h3^2 factor scales by lambda^2); both are O(h^2)-small.  The test
asserts |rel_margin(1) - rel_margin(1.5)| <= 1e-3.
"""

import numpy as np

from heisflow.core import koranyi_dist
from heisflow.grid import GridField, GridSpec
from heisflow.plap import OuterBC, PLapProblem, PLaplaceSolver, gradient_bound_check


def rel_margin(lam, n=24, p=1.5):
    spec = GridSpec((-1.35 * lam, -1.35 * lam, -0.55 * lam * lam),
                    (1.35 * lam, 1.35 * lam, 0.55 * lam * lam), (n, n, n))
    X = spec.mesh()
    d = np.asarray(koranyi_dist(X, (0.0, 0.0, 0.0)))
    phi = GridField(spec, d - lam)
    ob = OuterBC("barrier-matched", y0=(0.0, 0.0, 0.0), s=lam)
    prob = PLapProblem(p=p, eps=1e-6, spec=spec, inner_bc=phi, outer_bc=ob,
                       inner_ball=((0.0, 0.0, 0.0), lam), check_exterior=False)
    est = PLaplaceSolver(tol=1e-10, max_iters=120).fit(prob)
    rep = gradient_bound_check(est.solution_, lam)
    return rep["sup_grad0"], rep["bound"]


def main():
    margins = []
    for lam in (1.0, 1.5):
        sup, bound = rel_margin(lam)
        m = 1.0 - sup / bound
        margins.append(m)
        print("lambda=%.1f  sup=%.4f  bound=%.4f  rel_margin=%.6f" % (lam, sup, bound, m))
    print("|drift| = %.1e" % abs(margins[0] - margins[1]))


if __name__ == "__main__":
    main()
