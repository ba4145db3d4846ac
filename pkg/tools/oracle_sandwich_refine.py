"""Oracle for the sandwich refinement rate, run before freezing tests.

For the radial problem both barriers coincide with the exact solution,
so any sandwich violation is pure discretization error and must shrink
like O(h^2) as the grid doubles.  This measures the worst violation of
the lower/upper barrier pair at 24^3 and 48^3 for p = 1.5 on the
standard unit-ball box and prints the ratio; an exactly second-order
scheme gives 4.

Output of the run that froze the test values:

    n=24  viol=1.614e-03  (it=4, converged=True)
    n=48  viol=4.093e-04  (it=2, converged=True)
    ratio 24->48: 3.94

The ratio 3.94 sits on the second-order value 4; the test asserts
ratio >= 2.5 to leave room for grid phase effects while still ruling
out first order (which would give 2.0 with no such margin).
"""

import numpy as np

from heisflow.core import koranyi_dist
from heisflow.grid import GridField, GridSpec
from heisflow.plap import OuterBC, PLapProblem, PLaplaceSolver, sandwich_check


def worst_violation(n, p=1.5):
    spec = GridSpec((-1.35, -1.35, -0.55), (1.35, 1.35, 0.55), (n, n, n))
    X = spec.mesh()
    d = np.asarray(koranyi_dist(X, (0.0, 0.0, 0.0)))
    phi = GridField(spec, d - 1.0)
    ob = OuterBC("barrier-matched", y0=(0.0, 0.0, 0.0), s=1.0)
    prob = PLapProblem(p=p, eps=1e-6, spec=spec, inner_bc=phi, outer_bc=ob,
                       inner_ball=((0.0, 0.0, 0.0), 1.0), check_exterior=False)
    est = PLaplaceSolver(tol=1e-8, max_iters=120).fit(prob)
    sol = est.solution_
    rep = sandwich_check(sol, ((0.0, 0.0, 0.0), 1.0), ((0.0, 0.0, 0.0), 1.0))
    viol = max(rep["upper_violation"], rep["lower_violation"])
    return viol, sol


def main():
    v24, s24 = worst_violation(24)
    print("n=24  viol=%.3e  (it=%d, converged=%s)" % (v24, s24.n_iter, s24.converged))
    v48, s48 = worst_violation(48)
    print("n=48  viol=%.3e  (it=%d, converged=%s)" % (v48, s48.n_iter, s48.converged))
    print("ratio 24->48: %.2f" % (v24 / v48))


if __name__ == "__main__":
    main()
