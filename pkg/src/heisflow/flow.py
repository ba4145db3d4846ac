"""Inverse-flow driver and the geometric verification reports.

The arrival time of the weak horizontal inverse mean curvature flow is
approached through a decreasing schedule of horizontal p-Laplace
problems: each stage is solved by ``plap`` and hands its substituted
unknown v = exp(u_p/(4 - p)) to the next as the starting iterate, which
works because v is p-independent for the radial profile the far field
settles into.  The final stage's u_p is reported as the arrival time.

The rest of the module turns an arrival-time field into the quantities
the flow is supposed to conserve or grow: exponential growth of the
horizontal perimeter of the sublevel sets, perimeter conservation of
the anisotropically rescaled sets, sublevel inclusion between nested
initial data, and the two surface-integral identities (the dilation
generator pairing against 3 P_H, and the curvature-reciprocal integral
against (4/3) of the volume).  Every check reports the characteristic
band weight alongside its verdict, since all band quadratures degrade
where the horizontal normal dies.
"""

import math

import numpy as np

from .core import koranyi_dist
from .errors import (
    ConfigError,
    DegenerateSurfaceError,
    DomainTruncationError,
    EmptyBandError,
    NonpositiveCurvatureError,
)
from .grid import (
    GridField,
    GridSpec,
    band_touches_faces,
    default_band,
    frame_gradient,
    hess_sym_fd,
    hperimeter,
    interp_field,
    surface_integral,
    surface_integral_euclidean,
    volume,
)
from .base import ParamsMixin
from .levelset import himcf_residual, mean_curvature_h, normals
from .plap import OuterBC, PLapProblem, PLaplaceSolver
from .validation import check_int, check_point, check_positive, check_real

# geometric approach of p toward 1; the last value balances the p-limit
# bias against the grid resolution the acceptance tolerances assume
P_SCHEDULE = (2.0, 1.5, 1.2, 1.1, 1.05)

# default observation window: below it the level band hugs the inner
# Dirichlet layer, above it the sublevel sets approach the box faces on
# the default geometry
T_WINDOW = (0.05, 0.5)

CSV_HEADER = "t,volume,hperimeter,log_perimeter,residual_linf,char_fraction"


class LevelSetSolution:
    """Arrival-time field with the schedule provenance attached.

    ``u`` vanishes on the initial boundary layer and is nonnegative
    outside (the flow only moves outward); inside the initial set it
    carries a negative continuation of the boundary profile, which is a
    convention, not data: the band quadrature near t = 0 needs to see a
    one-sided slope there, exactly as a closed-form arrival time would
    provide.  ``per_p_residuals`` holds the sup residual of the
    level-set equation H0 = |grad0 u| measured on a reference level
    after each schedule stage, and ``stage_converged`` the per-stage
    solver verdicts.  ``e0_level`` keeps the initial level-set field so
    later comparisons can see the initial set; it is None for solutions
    wrapped from closed-form fields.
    """

    def __init__(self, u, p_schedule, per_p_residuals, E0_descr,
                 e0_level=None, stage_converged=None, plap=None):
        if not isinstance(u, GridField):
            raise ConfigError("u", "expected a GridField")
        self.u = u
        self.p_schedule = list(p_schedule)
        self.per_p_residuals = list(per_p_residuals)
        self.E0_descr = str(E0_descr)
        self.e0_level = e0_level
        self.stage_converged = list(stage_converged or [])
        self.plap = plap
        if self.stage_converged:
            self.converged = all(self.stage_converged)
        else:
            self.converged = True
        if e0_level is not None:
            outside = e0_level.data > 0.0
            # tolerance covers solver noise, not sign errors
            if outside.any() and float(np.min(u.data[outside])) < -1e-6:
                raise ConfigError(
                    "u", "arrival time is negative outside the initial set")

    @classmethod
    def from_field(cls, u, descr="closed-form field"):
        """Wrap a bare arrival-time field (no schedule, no residual log)."""
        return cls(u, p_schedule=[], per_p_residuals=[], E0_descr=descr)

    def __repr__(self):
        return (f"LevelSetSolution(E0={self.E0_descr!r}, "
                f"p_schedule={self.p_schedule}, converged={self.converged})")


class FlowRow:
    __slots__ = ("t", "volume", "hperimeter", "log_perimeter",
                 "residual_linf", "char_fraction")

    def __init__(self, t, vol, per, logper, res, charf):
        self.t = float(t)
        self.volume = float(vol)
        self.hperimeter = float(per)
        self.log_perimeter = float(logper)
        self.residual_linf = float(res)
        self.char_fraction = float(charf)

    def astuple(self):
        return (self.t, self.volume, self.hperimeter, self.log_perimeter,
                self.residual_linf, self.char_fraction)


class FlowReport:
    """Per-level flow observables; constructor enforces the invariants.

    ``truncated`` is set when trailing levels were dropped because their
    band reached the box faces; ``reference_perimeter`` and
    ``max_drift`` are filled by the rescaling check.
    """

    def __init__(self, rows, truncated=False, reference_perimeter=None):
        self.rows = [r if isinstance(r, FlowRow) else FlowRow(*r) for r in rows]
        ts = [r.t for r in self.rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError("t_grid", "report levels must be strictly increasing")
        for r in self.rows:
            if not all(map(math.isfinite, r.astuple())):
                raise ConfigError("rows", f"non-finite entry at t = {r.t}")
        self.truncated = bool(truncated)
        self.reference_perimeter = reference_perimeter
        self.max_drift = None
        if reference_perimeter is not None:
            self.max_drift = max(
                abs(r.hperimeter - reference_perimeter) / reference_perimeter
                for r in self.rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in self.rows:
                fh.write(",".join("%.12g" % v for v in r.astuple()) + "\n")


class IdentityReport:
    """One verified surface identity; unpacks as (lhs, rhs, third).

    ``third`` is the headline comparison of the particular check (the
    relative error for equalities, the margin for inequalities); the
    characteristic band-weight fraction and the unreliable flag travel
    along so a passing number over a mostly-flagged band cannot be read
    as evidence.
    """

    def __init__(self, name, lhs, rhs, third_name, passed,
                 char_fraction, unreliable, extras=None):
        self.name = name
        self.lhs = float(lhs)
        self.rhs = float(rhs)
        self.third_name = third_name
        self.passed = bool(passed)
        self.char_fraction = float(char_fraction)
        self.unreliable = bool(unreliable)
        self.extras = dict(extras or {})

    @property
    def margin(self):
        return self.lhs - self.rhs

    @property
    def rel_err(self):
        if self.name == "heintze-karcher":
            return (self.lhs - self.rhs) / abs(self.rhs)
        return abs(self.lhs - self.rhs) / abs(self.lhs)

    def __iter__(self):
        yield self.lhs
        yield self.rhs
        yield getattr(self, self.third_name)

    def to_json(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rel_err": self.rel_err,
            "pass": self.passed,
        }

    def __repr__(self):
        return (f"IdentityReport({self.name!r}, lhs={self.lhs:.6g}, "
                f"rhs={self.rhs:.6g}, {self.third_name}="
                f"{getattr(self, self.third_name):.3g}, passed={self.passed})")


def bubble_quantities(R):
    """Closed forms for the CMC bubble set of radius R.

    Pure arithmetic used by the identity checks' equality cases:
    curvature 2/R, horizontal perimeter pi^2 R^3 / 2, volume
    3 pi^2 R^4 / 16, and the curvature-reciprocal surface integral
    (R/2) times the perimeter.
    """
    R = check_positive(R, "R")
    per = 0.5 * math.pi ** 2 * R ** 3
    return {
        "h0": 2.0 / R,
        "hperimeter": per,
        "volume": 3.0 * math.pi ** 2 * R ** 4 / 16.0,
        "hk_integral": 0.5 * R * per,
    }


# ------------------------------------------------------------- p-driver


def _parse_e0(E0, grid):
    """Accept (center, r) for a gauge ball or a level-set GridField."""
    if isinstance(E0, GridField):
        if E0.spec != grid:
            raise ConfigError("E0", "level-set field must live on the grid")
        return E0, None, "level-set field"
    try:
        center, r = E0
    except (TypeError, ValueError):
        raise ConfigError(
            "E0", "expected (center, r) or a level-set GridField") from None
    center = check_point(center, "E0.center")
    r = check_positive(r, "E0.r")
    X = grid.mesh()
    level = GridField(grid, np.asarray(koranyi_dist(X, center)) - r)
    descr = "koranyi_ball(center=(%g, %g, %g), r=%g)" % (center + (r,))
    return level, (center, r), descr


def _enclosing_ball(level):
    """Far-field anchor for a free-form initial set.

    Gauge-ball center at the volume centroid of the interior nodes and
    radius just covering them; the arrival time approaches the radial
    profile of some enclosing ball far away, and this is the tightest
    one the grid can see.
    """
    inside = level.data <= 0.0
    X = level.spec.mesh()
    wts = level.spec.node_weights()[inside]
    tot = float(np.sum(wts))
    center = tuple(float(np.sum(c[inside] * wts) / tot) for c in X)
    d = np.asarray(koranyi_dist(X, center))
    return center, float(np.max(d[inside]))


def _check_schedule(schedule):
    sched = [check_real(p, "schedule") for p in schedule]
    if not sched:
        raise ConfigError("schedule", "must not be empty")
    for p in sched:
        if not 1.0 < p < 3.0:
            raise ConfigError("schedule", f"p = {p} outside (1, 3)")
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("schedule", "must be strictly decreasing")
    return sched


class HimcfSolver(ParamsMixin):
    """Continuation driver over a decreasing p schedule.

    fit(E0, grid) solves one exterior problem per schedule entry,
    carrying v between stages, and exposes the final arrival time as
    ``solution_``.  A stage that exhausts its sweep budget does not
    abort the schedule: its best iterate still seeds the next stage and
    the failure is recorded in ``solution_.stage_converged``.

    ``residual_level`` is the level on which the per-stage residual of
    the level-set equation is measured; levels whose band cannot be
    formed record NaN rather than failing the run.
    """

    def __init__(self, schedule=P_SCHEDULE, tol=1e-8, eps=1e-6,
                 max_iters=60, residual_level=0.25):
        self.schedule = schedule
        self.tol = tol
        self.eps = eps
        self.max_iters = max_iters
        self.residual_level = residual_level

    def fit(self, E0, grid):
        if not isinstance(grid, GridSpec):
            raise ConfigError("grid", "expected a GridSpec")
        sched = _check_schedule(self.schedule)
        tol = check_positive(self.tol, "tol")
        eps = check_positive(self.eps, "eps")
        max_iters = check_int(self.max_iters, "max_iters", minimum=1)
        t_ref = check_real(self.residual_level, "residual_level")

        level, ball, descr = _parse_e0(E0, grid)
        if ball is None:
            y0, s = _enclosing_ball(level)
        else:
            y0, s = ball
        outer = OuterBC("barrier-matched", y0=y0, s=s)

        # interior continuation profile: log of the radial unknown for a
        # declared ball, the scaled level data otherwise; clamped so the
        # deep interior stays finite and far below every reported level
        inside = level.data <= 0.0
        if ball is not None:
            din = np.asarray(koranyi_dist(grid.mesh(), ball[0]))
            base = np.log(np.maximum(din / ball[1], math.exp(-1.0)))
        else:
            base = np.maximum(level.data / s, -1.0)

        def continued(u_p, p):
            data = u_p.data.copy()
            data[inside] = (4.0 - p) * base[inside]
            return GridField(grid, data)

        v = None
        residuals, flags = [], []
        sol, u_field = None, None
        for k, p in enumerate(sched):
            prob = PLapProblem(p=p, eps=eps, spec=grid, inner_bc=level,
                               outer_bc=outer, inner_ball=ball,
                               check_exterior=(k == 0))
            est = PLaplaceSolver(tol=tol, max_iters=max_iters)
            est.fit(prob, v0=v)
            sol = est.solution_
            flags.append(bool(est.converged_))
            v = GridField(grid, np.exp(sol.u_p.data / (4.0 - p)))
            u_field = continued(sol.u_p, p)
            residuals.append(self._stage_residual(u_field, t_ref))

        self.solution_ = LevelSetSolution(
            u=u_field, p_schedule=sched, per_p_residuals=residuals,
            E0_descr=descr, e0_level=level, stage_converged=flags, plap=sol)
        self.n_stages_ = len(sched)
        self.converged_ = self.solution_.converged
        return self

    @staticmethod
    def _stage_residual(u, t_ref):
        try:
            band = default_band(u, t_ref)
            return himcf_residual(u, band, t_ref)[0]
        except (EmptyBandError, DegenerateSurfaceError, DomainTruncationError):
            return float("nan")


def himcf_solve(E0, grid, schedule=P_SCHEDULE, tol=1e-8):
    """One-call front end around HimcfSolver; returns the LevelSetSolution."""
    est = HimcfSolver(schedule=schedule, tol=tol)
    return est.fit(E0, grid).solution_


# ------------------------------------------------------------ reporting


def _coerce(sol, name):
    if isinstance(sol, LevelSetSolution):
        return sol
    if isinstance(sol, GridField):
        return LevelSetSolution.from_field(sol)
    raise ConfigError(name, "expected a LevelSetSolution or GridField")


def _check_t_grid(t_grid, minimum=2):
    ts = [check_real(t, "t_grid") for t in t_grid]
    if len(ts) < minimum:
        raise ConfigError("t_grid", f"need at least {minimum} levels")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ConfigError("t_grid", "levels must be strictly increasing")
    return ts


def _flow_rows(u, ts):
    """Rows up to the first level whose band reaches the box faces."""
    rows, truncated = [], False
    for t in ts:
        try:
            band = default_band(u, t)
            if band_touches_faces(u, t, band):
                truncated = True
                break
            vol = volume(u, t)
        except (EmptyBandError, DomainTruncationError):
            truncated = True
            break
        per = hperimeter(u, t, band)
        res, _ = himcf_residual(u, band, t)
        charf = normals(u, band, t).characteristic_fraction()
        rows.append(FlowRow(t, vol, per, math.log(per), res, charf))
    return rows, truncated


def perimeter_growth(sol, t_grid):
    """Least-squares growth rate of log P_H({u < t}) against t.

    Returns (slope, r2, FlowReport); the exponential growth law makes
    the slope 1 with r2 near 1 for a genuine arrival time.  Levels past
    the first whose band reaches the box faces are dropped and the
    report is flagged truncated; fewer than two surviving levels leave
    no slope to fit and raise.
    """
    sol = _coerce(sol, "sol")
    ts = _check_t_grid(t_grid)
    rows, truncated = _flow_rows(sol.u, ts)
    if len(rows) < 2:
        raise DomainTruncationError(
            "fewer than two levels fit inside the box; shrink t_grid")
    t = np.array([r.t for r in rows])
    y = np.array([r.log_perimeter for r in rows])
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2), FlowReport(rows, truncated=truncated)


def inclusion_check(solA, solB, t_grid):
    """Sublevel monotonicity for nested initial sets.

    With E0 of A contained in E0 of B, every flowed sublevel must stay
    nested; the report counts nodes with uA < t but uB >= t as
    violations, as a fraction of the A sublevel.  The initial inclusion
    is a precondition and raises when it fails on the grid.
    """
    A = _coerce(solA, "solA")
    B = _coerce(solB, "solB")
    if A.u.spec != B.u.spec:
        raise ConfigError("solB", "solutions live on different grids")
    ts = _check_t_grid(t_grid, minimum=1)

    insideA = A.e0_level.data <= 0.0 if A.e0_level is not None else A.u.data < 0.0
    insideB = B.e0_level.data <= 0.0 if B.e0_level is not None else B.u.data < 0.0
    if np.any(insideA & ~insideB):
        raise ConfigError("E0", "initial sets are not nested on the grid")

    fractions = []
    for t in ts:
        EA = A.u.data < t
        EB = B.u.data < t
        viol = int(np.count_nonzero(EA & ~EB))
        fractions.append(viol / max(int(np.count_nonzero(EA)), 1))
    return {
        "t_grid": ts,
        "fractions": fractions,
        "max_fraction": max(fractions),
        "ok": max(fractions) <= 0.01,
    }


def rescaled_flow(sol, t_grid):
    """Perimeter conservation under the compensating dilation.

    Each flowed set is pulled back by the dilation of factor e^{-t/3}:
    the pullback field is sampled on the correspondingly shrunk grid,
    whose nodes are exactly the dilated images of the original ones, so
    the interpolation points land inside the box by construction and the
    escape guard in the interpolator stays a defensive check.  Negative
    levels are rejected: below t = 0 a solver field holds only the
    interior continuation convention, not flow data.  ``max_drift`` is
    the worst relative deviation of the rescaled horizontal perimeter
    from the initial one.
    """
    sol = _coerce(sol, "sol")
    ts = _check_t_grid(t_grid, minimum=1)
    if ts[0] < 0.0:
        raise ConfigError("t_grid", "rescaled levels must be nonnegative")
    u = sol.u

    if sol.e0_level is not None:
        p0 = hperimeter(sol.e0_level, 0.0)
    else:
        p0 = hperimeter(u, 0.0)

    spec = u.spec
    lo, hi = np.asarray(spec.lo), np.asarray(spec.hi)
    rows, truncated = [], False
    for t in ts:
        lam = math.exp(-t / 3.0)
        scale = np.array([lam, lam, lam * lam])
        back = GridSpec(tuple(lo * scale), tuple(hi * scale), spec.n)
        Y = back.mesh()
        pts = np.stack([Y[0].ravel() / lam, Y[1].ravel() / lam,
                        Y[2].ravel() / (lam * lam)], axis=1)
        uhat = GridField(back, interp_field(
            u, pts, context="rescaled_flow").reshape(spec.n))
        try:
            band = default_band(uhat, t)
            if band_touches_faces(uhat, t, band):
                truncated = True
                break
            vol = volume(uhat, t)
        except (EmptyBandError, DomainTruncationError):
            truncated = True
            break
        per = hperimeter(uhat, t, band)
        res, _ = himcf_residual(uhat, band, t)
        charf = normals(uhat, band, t).characteristic_fraction()
        rows.append(FlowRow(t, vol, per, math.log(per), res, charf))
    if not rows:
        raise DomainTruncationError("no rescaled level fits inside the box")
    return FlowReport(rows, truncated=truncated, reference_perimeter=p0)


# ----------------------------------------------------------- identities


def _surface_fields(u):
    """Full-grid H0, <y', nu> and their guards, trace-form arithmetic."""
    a, b, g3 = frame_gradient(u)
    gh = np.hypot(a, b)
    gframe = np.hypot(gh, g3)
    h11, h12, h22 = hess_sym_fd(u)
    q = gh * gh
    lap0 = h11 + h22
    lap_inf = a * a * h11 + 2.0 * a * b * h12 + b * b * h22
    with np.errstate(divide="ignore", invalid="ignore"):
        h0 = np.where(q > 0.0, (q * lap0 - lap_inf) / np.where(q > 0.0, q, 1.0) ** 1.5, 0.0)
    X1, X2, X3 = u.spec.mesh()
    # frame components of the dilation generator are (y1, y2, 2 y3), so
    # the pairing against the full unit normal is this quotient
    ydot = X1 * a + X2 * b + 2.0 * X3 * g3
    with np.errstate(divide="ignore", invalid="ignore"):
        ydot_nu = np.where(gframe > 0.0, ydot / np.where(gframe > 0.0, gframe, 1.0), 0.0)
    return h0, ydot_nu


def minkowski_check(u, t, band=None, tol=0.02):
    """Dilation-generator identity: 3 P_H against the curvature pairing.

    lhs = 3 hperimeter, rhs integrates H0 <y', nu> over the level
    surface in the full-gradient measure.  The report also carries the
    plain flux cross-check (integral of <y', nu> against 4 volume, the
    divergence theorem for the generator) in ``extras``.  A
    characteristic band-weight fraction above 5% sets ``unreliable``.
    """
    if not isinstance(u, GridField):
        raise ConfigError("u", "expected a GridField")
    t = check_real(t, "t")
    if band is None:
        band = default_band(u, t)
    sset = mean_curvature_h(u, band, t)
    charf = sset.characteristic_fraction()

    lhs = 3.0 * hperimeter(u, t, band)
    h0, ydot_nu = _surface_fields(u)
    rhs = surface_integral_euclidean(u, t, band, h0 * ydot_nu)
    rel = abs(lhs - rhs) / abs(lhs)

    flux = surface_integral_euclidean(u, t, band, ydot_nu)
    vol4 = 4.0 * volume(u, t)
    return IdentityReport(
        name="minkowski",
        lhs=lhs,
        rhs=rhs,
        third_name="rel_err",
        passed=rel <= tol,
        char_fraction=charf,
        unreliable=charf > 0.05,
        extras={
            "flux_lhs": flux,
            "flux_rhs": vol4,
            "flux_rel_err": abs(flux - vol4) / abs(vol4),
        },
    )


def heintze_karcher_check(u, t, band=None, tol=0.01):
    """Curvature-reciprocal inequality against (4/3) of the volume.

    lhs integrates 1/H0 in the horizontal surface measure; positivity of
    H0 on the non-flagged band nodes is a precondition and its failure
    raises.  ``passed`` allows the margin to dip to -tol * rhs, the
    quadrature allowance; equality is reserved for CMC surfaces, so the
    sphere of the gauge should pass strictly.
    """
    if not isinstance(u, GridField):
        raise ConfigError("u", "expected a GridField")
    t = check_real(t, "t")
    if band is None:
        band = default_band(u, t)
    sset = mean_curvature_h(u, band, t)
    ok = ~sset.char_flag
    if not ok.any():
        raise DegenerateSurfaceError(
            "every band node is characteristic; no curvature to integrate")
    if float(np.min(sset.h0[ok])) <= 0.0:
        raise NonpositiveCurvatureError(
            "H0 <= 0 on a non-flagged band node; the integrand 1/H0 needs "
            "strictly positive curvature")
    charf = sset.characteristic_fraction()

    h0, _ = _surface_fields(u)
    with np.errstate(divide="ignore"):
        inv = np.where(h0 > 0.0, 1.0 / np.where(h0 > 0.0, h0, 1.0), 0.0)
    lhs = surface_integral(u, t, band, inv)
    rhs = (4.0 / 3.0) * volume(u, t)
    margin = lhs - rhs
    return IdentityReport(
        name="heintze-karcher",
        lhs=lhs,
        rhs=rhs,
        third_name="margin",
        passed=margin >= -tol * rhs,
        char_fraction=charf,
        unreliable=charf > 0.05,
    )
