"""Closed-form expanding Koranyi sphere solution and its derived fields.

The arrival time u = (3/4) ln rho with rho = (x1^2+x2^2)^2 + 16 x3^2 solves
the level-set inverse mean curvature flow equation exactly: the horizontal
mean curvature of every level set equals the norm of the horizontal
gradient.  This module is the ground truth the discrete pipeline is
measured against.

All SmoothFn builders here use numpy arithmetic so grid sampling can hand
them whole coordinate arrays at once.
"""

import math
from typing import NamedTuple, Optional

import numpy as np

from .core import (
    HPoint,
    HVector,
    SmoothFn,
    compose_scalar,
    horiz_grad,
    horiz_hess_sym,
    left_translate,
)
from .validation import check_int, check_point

# points with x1^2 + x2^2 at or below this are treated as on the center
# axis during random sampling (the flag itself uses exact zero)
_AXIS_EXCLUSION = 1e-6


def rho_fn() -> SmoothFn:
    """Fourth power of the Koranyi gauge, a polynomial."""

    def value(x):
        q = x[0] * x[0] + x[1] * x[1]
        return q * q + 16.0 * x[2] * x[2]

    def partials(x):
        q = x[0] * x[0] + x[1] * x[1]
        return (4.0 * x[0] * q, 4.0 * x[1] * q, 32.0 * x[2])

    def second(x):
        q = x[0] * x[0] + x[1] * x[1]
        zero = 0.0 * q
        return (
            4.0 * q + 8.0 * x[0] * x[0],
            8.0 * x[0] * x[1],
            zero,
            4.0 * q + 8.0 * x[1] * x[1],
            zero,
            zero + 32.0,
        )

    return SmoothFn(value, partials, second)


def gauge4_fn(center=None) -> SmoothFn:
    """d(x, center)^4 with exact partials."""
    if center is None:
        return rho_fn()
    return left_translate(rho_fn(), check_point(center, "center"))


def gauge_fn(center=None) -> SmoothFn:
    """The gauge distance d(x, center); singular at the center."""
    tau = gauge4_fn(center)
    return compose_scalar(
        tau,
        lambda v: v ** 0.25,
        lambda v: 0.25 * v ** -0.75,
        lambda v: -0.1875 * v ** -1.75,
    )


def arrival_fn() -> SmoothFn:
    """u = (3/4) ln rho; singular at the origin."""
    return compose_scalar(
        rho_fn(),
        lambda v: 0.75 * np.log(v),
        lambda v: 0.75 / v,
        lambda v: -0.75 / (v * v),
    )


def trace_h0(f: SmoothFn, x) -> float:
    """Horizontal mean curvature of the level set of f through x, computed
    from the symmetrized Hessian: (q lap0 - lapInf) / q^(3/2)."""
    g = horiz_grad(f, x)
    q = g.a * g.a + g.b * g.b
    hess = horiz_hess_sym(f, x)
    lap0 = hess.h11 + hess.h22
    lap_inf = g.a * g.a * hess.h11 + 2.0 * g.a * g.b * hess.h12 + g.b * g.b * hess.h22
    return (q * lap0 - lap_inf) / q ** 1.5


class KoranyiEval(NamedTuple):
    u: float
    grad0: HVector
    h0: float
    characteristic: bool


class KoranyiSolution:
    """Stateless closed-form solution family.

    Level sets M_t are dilated Koranyi spheres of gauge radius e^(t/3);
    each carries two characteristic points on the center axis.
    """

    def rho(self, x) -> float:
        q = x[0] * x[0] + x[1] * x[1]
        return q * q + 16.0 * x[2] * x[2]

    def u(self, x) -> float:
        r = self.rho(x)
        if r == 0.0:
            raise ValueError("arrival time is undefined at the group identity")
        return 0.75 * math.log(r)

    def level_radius(self, t: float) -> float:
        return math.exp(t / 3.0)

    def characteristic_points(self, t: float):
        x3 = 0.25 * math.exp(2.0 * t / 3.0)
        return (HPoint(0.0, 0.0, x3), HPoint(0.0, 0.0, -x3))

    def eval(self, x) -> KoranyiEval:
        """Arrival time, horizontal gradient, and curvature H0 = |grad0 u|.

        On the center axis (x1 = x2 = 0) the horizontal normal degenerates:
        grad0 is zero there and h0 is reported as nan with the flag set.
        """
        p = x[0] * x[0] + x[1] * x[1]
        r = p * p + 16.0 * x[2] * x[2]
        if r == 0.0:
            raise ValueError("arrival time is undefined at the group identity")
        u = 0.75 * math.log(r)
        g = HVector(
            3.0 * (x[0] * p - 4.0 * x[1] * x[2]) / r,
            3.0 * (x[1] * p + 4.0 * x[0] * x[2]) / r,
        )
        if p == 0.0:
            return KoranyiEval(u, g, math.nan, True)
        return KoranyiEval(u, g, 3.0 * math.sqrt(p / r), False)

    def u_fn(self) -> SmoothFn:
        return arrival_fn()

    def residual_selftest(self, samples: int = 10000, seed: int = 0) -> dict:
        """Max |trace-form H0 - |grad0 u|| at random off-axis shell points.

        Both sides are evaluated from exact partials, so the residual is
        pure floating-point noise; the report flags pass at 1e-10.
        """
        samples = check_int(samples, "samples", minimum=1)
        seed = check_int(seed, "seed", minimum=0)
        rng = np.random.default_rng(seed)
        u = arrival_fn()

        kept = 0
        skipped = 0
        max_residual = 0.0
        while kept < samples:
            x = (rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1))
            p = x[0] * x[0] + x[1] * x[1]
            gauge = (p * p + 16.0 * x[2] * x[2]) ** 0.25
            if not 0.5 < gauge < 2.0:
                continue
            if p <= _AXIS_EXCLUSION:
                skipped += 1
                continue
            ev = self.eval(x)
            residual = abs(trace_h0(u, x) - ev.grad0.norm)
            max_residual = max(max_residual, residual)
            kept += 1

        threshold = 1e-10
        return {
            "samples": kept,
            "seed": seed,
            "excluded_near_axis": skipped,
            "max_residual": max_residual,
            "threshold": threshold,
            "pass": max_residual <= threshold,
        }


def exact_fields(center: Optional[tuple] = None):
    """Convenience bundle (u, rho, gauge) of SmoothFns used by the checks."""
    return arrival_fn(), rho_fn(), gauge_fn(center)
