"""Closed-form Heisenberg group operations and horizontal calculus.

Everything here is pointwise and analytic: the group law, Koranyi gauge,
and horizontal differential operators evaluated on caller-supplied smooth
functions.  Grid discretizations live elsewhere; this module is the exact
reference they are tested against.

Conventions.  Points are coordinate triples (x1, x2, x3) in the global
frame.  Horizontal vectors are always frame components along

    X1 = d/dx1 - (x2/2) d/dx3,    X2 = d/dx2 + (x1/2) d/dx3,

whose commutator is X1 X2 - X2 X1 = d/dx3.  Group multiplication makes
these left-invariant.  All functions accept any indexable length-3 point
and work elementwise when handed numpy arrays as coordinates.
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

from .errors import DegenerateGradientError
from .validation import check_positive

# Step for nested differencing of frame second derivatives, scaled by the
# gauge so the operator stays accurate away from the origin.
H_FD_SCALE = 1e-4

# Below this horizontal-gradient norm the p-Laplacian quotient is reported
# as degenerate instead of divided through.
GRADIENT_FLOOR = 1e-12


class HPoint(NamedTuple):
    x1: float
    x2: float
    x3: float


class HVector(NamedTuple):
    """Horizontal vector as frame components (along X1, along X2)."""

    a: float
    b: float

    @property
    def norm(self) -> float:
        return math.hypot(self.a, self.b)


class SymHess(NamedTuple):
    """Symmetrized horizontal Hessian entries."""

    h11: float
    h12: float
    h22: float


@dataclass(frozen=True)
class SmoothFn:
    """A scalar function bundled with its exact Euclidean partials.

    value(x) -> real and partials(x) -> (f1, f2, f3) are required.
    second_partials(x) -> (f11, f12, f13, f22, f23, f33) is optional; when
    absent, frame second derivatives fall back to central differencing of
    the exact first partials with step 1e-4 * max(1, ||x||_K).
    """

    value: Callable
    partials: Callable
    second_partials: Optional[Callable] = None


def group_mul(x, y) -> HPoint:
    """Group product (x1+y1, x2+y2, x3+y3+(x1 y2 - y1 x2)/2)."""
    return HPoint(
        x[0] + y[0],
        x[1] + y[1],
        x[2] + y[2] + 0.5 * (x[0] * y[1] - x[1] * y[0]),
    )


def group_inv(x) -> HPoint:
    return HPoint(-x[0], -x[1], -x[2])


def dilate(lam: float, x) -> HPoint:
    """Anisotropic dilation (lam x1, lam x2, lam^2 x3)."""
    check_positive(lam, "lambda")
    return HPoint(lam * x[0], lam * x[1], lam * lam * x[2])


def koranyi_norm(x) -> float:
    q = x[0] * x[0] + x[1] * x[1]
    return (q * q + 16.0 * x[2] * x[2]) ** 0.25


def koranyi_dist(x, y) -> float:
    return koranyi_norm(group_mul(group_inv(y), x))


def frame_vector(x, i: int):
    """Coordinate components of X_i at x (i is 1 or 2)."""
    if i == 1:
        return (1.0, 0.0, -0.5 * x[1])
    if i == 2:
        return (0.0, 1.0, 0.5 * x[0])
    raise ValueError(f"frame index must be 1 or 2, got {i}")


def frame_diff(fn: Callable, x, direction, h: float) -> float:
    """Central difference of a plain callable along a straight line."""
    xp = (x[0] + h * direction[0], x[1] + h * direction[1], x[2] + h * direction[2])
    xm = (x[0] - h * direction[0], x[1] - h * direction[1], x[2] - h * direction[2])
    return (fn(xp) - fn(xm)) / (2.0 * h)


def fd_step(x) -> float:
    return H_FD_SCALE * max(1.0, koranyi_norm(x))


def horiz_grad(f: SmoothFn, x) -> HVector:
    f1, f2, f3 = f.partials(x)
    return HVector(f1 - 0.5 * x[1] * f3, f2 + 0.5 * x[0] * f3)


def _frame_component(f: SmoothFn, y, j: int) -> float:
    f1, f2, f3 = f.partials(y)
    if j == 1:
        return f1 - 0.5 * y[1] * f3
    return f2 + 0.5 * y[0] * f3


def frame_second(f: SmoothFn, x, h: Optional[float] = None):
    """Unsymmetrized frame second derivatives ((X1X1, X1X2), (X2X1, X2X2)).

    X_i X_j f is the derivative of the scalar field X_j f along the frame
    vector of X_i frozen at x; the probe line is straight, the integrand
    re-reads the frame coefficients at each probe point.  With exact second
    partials the expansion is purely algebraic.
    """
    x1, x2 = x[0], x[1]
    if f.second_partials is not None:
        f11, f12, f13, f22, f23, f33 = f.second_partials(x)
        _, _, f3 = f.partials(x)
        h11 = f11 - x2 * f13 + 0.25 * x2 * x2 * f33
        h22 = f22 + x1 * f23 + 0.25 * x1 * x1 * f33
        h12 = f12 + 0.5 * (x1 * f13 - x2 * f23) - 0.25 * x1 * x2 * f33
        return (h11, h12 + 0.5 * f3), (h12 - 0.5 * f3, h22)

    if h is None:
        h = fd_step(x)
    out = [[0.0, 0.0], [0.0, 0.0]]
    for i in (1, 2):
        e = frame_vector(x, i)
        for j in (1, 2):
            out[i - 1][j - 1] = frame_diff(
                lambda y, jj=j: _frame_component(f, y, jj), x, e, h
            )
    return (out[0][0], out[0][1]), (out[1][0], out[1][1])


def horiz_hess_sym(f: SmoothFn, x, h: Optional[float] = None) -> SymHess:
    (a11, a12), (a21, a22) = frame_second(f, x, h)
    return SymHess(a11, 0.5 * (a12 + a21), a22)


def horiz_laplacians(f: SmoothFn, x, h: Optional[float] = None):
    """Pair (lap0, lapInf): trace of the symmetrized horizontal Hessian and
    the unnormalized quadratic form sum_ij h_ij X_i f X_j f."""
    hess = horiz_hess_sym(f, x, h)
    g = horiz_grad(f, x)
    lap0 = hess.h11 + hess.h22
    lap_inf = (
        g.a * g.a * hess.h11 + 2.0 * g.a * g.b * hess.h12 + g.b * g.b * hess.h22
    )
    return lap0, lap_inf


def horiz_p_laplacian(f: SmoothFn, x, p: float, h: Optional[float] = None) -> float:
    """Expanded p-Laplacian |g|^(p-2) lap0 + (p-2) |g|^(p-4) lapInf."""
    g = horiz_grad(f, x)
    gn = g.norm
    if gn <= GRADIENT_FLOOR:
        raise DegenerateGradientError(
            f"horizontal gradient norm {gn:.3e} at {tuple(x)} is below the "
            f"floor {GRADIENT_FLOOR:g}"
        )
    lap0, lap_inf = horiz_laplacians(f, x, h)
    return gn ** (p - 4.0) * (gn * gn * lap0 + (p - 2.0) * lap_inf)


def left_translate(f: SmoothFn, y) -> SmoothFn:
    """The function x -> f(y^-1 x) with partials pushed through the chain
    rule.  The change of variables z = y^-1 x has constant Jacobian, so
    exact second partials survive translation."""
    y1, y2, y3 = float(y[0]), float(y[1]), float(y[2])

    def shift(x):
        return (
            x[0] - y1,
            x[1] - y2,
            x[2] - y3 + 0.5 * (y2 * x[0] - y1 * x[1]),
        )

    def value(x):
        return f.value(shift(x))

    def partials(x):
        g1, g2, g3 = f.partials(shift(x))
        return (g1 + 0.5 * y2 * g3, g2 - 0.5 * y1 * g3, g3)

    second = None
    if f.second_partials is not None:

        def second(x):
            g11, g12, g13, g22, g23, g33 = f.second_partials(shift(x))
            c1, c2 = 0.5 * y2, -0.5 * y1
            s11 = g11 + 2.0 * c1 * g13 + c1 * c1 * g33
            s12 = g12 + c2 * g13 + c1 * g23 + c1 * c2 * g33
            s13 = g13 + c1 * g33
            s22 = g22 + 2.0 * c2 * g23 + c2 * c2 * g33
            s23 = g23 + c2 * g33
            s33 = g33
            return (s11, s12, s13, s22, s23, s33)

    return SmoothFn(value, partials, second)


def dilate_pullback(f: SmoothFn, lam: float) -> SmoothFn:
    """The function x -> f(delta_lam x); pulls dilations through partials."""
    check_positive(lam, "lambda")
    lam = float(lam)

    def at(x):
        return (lam * x[0], lam * x[1], lam * lam * x[2])

    def value(x):
        return f.value(at(x))

    def partials(x):
        g1, g2, g3 = f.partials(at(x))
        return (lam * g1, lam * g2, lam * lam * g3)

    second = None
    if f.second_partials is not None:

        def second(x):
            g11, g12, g13, g22, g23, g33 = f.second_partials(at(x))
            l2, l3, l4 = lam * lam, lam ** 3, lam ** 4
            return (l2 * g11, l2 * g12, l3 * g13, l2 * g22, l3 * g23, l4 * g33)

    return SmoothFn(value, partials, second)


def compose_scalar(f: SmoothFn, s: Callable, ds: Callable, d2s: Optional[Callable] = None) -> SmoothFn:
    """The composition s(f) with chain-rule partials."""

    def value(x):
        return s(f.value(x))

    def partials(x):
        v = f.value(x)
        f1, f2, f3 = f.partials(x)
        c = ds(v)
        return (c * f1, c * f2, c * f3)

    second = None
    if f.second_partials is not None and d2s is not None:

        def second(x):
            v = f.value(x)
            f1, f2, f3 = f.partials(x)
            f11, f12, f13, f22, f23, f33 = f.second_partials(x)
            c, c2 = ds(v), d2s(v)
            return (
                c * f11 + c2 * f1 * f1,
                c * f12 + c2 * f1 * f2,
                c * f13 + c2 * f1 * f3,
                c * f22 + c2 * f2 * f2,
                c * f23 + c2 * f2 * f3,
                c * f33 + c2 * f3 * f3,
            )

    return SmoothFn(value, partials, second)
