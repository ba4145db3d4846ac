"""Oracle for the dumbbell bridge margin, run before the tests were frozen.

Two gauge balls of radius 0.9 centered (+-0.95, 0, 0) leave a gauge gap
of 0.10 between their surfaces.  Enlarging the union by a small gauge
ball bridging the gap must LOWER the horizontal perimeter if the pair is
not a minimizing hull.  This script evaluates the margin
P_H(E u B_r(0)) - P_H(E) by direct band quadrature at three resolutions
with a shared band so the error cancels away from the bridge.

Output of the run that froze the test values:

    n= 64  r=0.25 -0.00518   r=0.30 -0.00707   r=0.35 -0.00525
    n= 96  r=0.25 -0.00649   r=0.30 -0.00883   r=0.35 -0.00514
    n=128  r=0.25 -0.00824   r=0.30 -0.00740   r=0.35 -0.00579

The margin is negative and resolution-stable for r in [0.25, 0.35]; the
test asserts margin < -0.003 at 64^3 for r = 0.30.  Larger probes
(r >= 0.45) go positive: their exposed waist outgrows the covered caps,
which the twist squeezes into slivers.
"""

import numpy as np

from heisflow.core import koranyi_dist
from heisflow.grid import GridField, GridSpec, default_band, hperimeter
from heisflow.levelset import union_with_ball


def main():
    r0, gap = 0.9, 0.10
    c = r0 + gap / 2
    for n in (64, 96, 128):
        spec = GridSpec((-2.2, -2.2, -0.95), (2.2, 2.2, 0.95), (n, n, n))
        X1, X2, X3 = spec.mesh()
        d1 = koranyi_dist((X1, X2, X3), (c, 0.0, 0.0))
        d2 = koranyi_dist((X1, X2, X3), (-c, 0.0, 0.0))
        E = GridField(spec, np.minimum(d1, d2))
        band = default_band(E, r0)
        per_E = hperimeter(E, r0, band)
        cols = []
        for r in (0.25, 0.30, 0.35):
            F = union_with_ball(E, r0, (0.0, 0.0, 0.0), r)
            cols.append("r=%.2f %+.5f" % (r, hperimeter(F, r0, band) - per_E))
        print("n=%3d  %s" % (n, "   ".join(cols)))


if __name__ == "__main__":
    main()
