"""Regularized horizontal p-Laplace Dirichlet problems outside a compact set.

The arrival-time candidate u_p solves a degenerate horizontal p-Laplace
equation in the exterior of the initial set E0, with u_p = 0 on its
boundary and barrier data far away.  Solving for u_p directly is hostile
(it is unbounded, and the equation degenerates where grad0 u_p vanishes),
so everything here works in the substituted unknown

    v = exp(u_p / (4 - p)),        w = v^m,   m = (4 - p)/(1 - p) < 0,

for which the exact radial solution is v(x) = d(x, x0)/r at every p: a
cone-like, Lipschitz, strictly positive field that the Q1 elements in
``_fem`` approximate well.  In the v variable the equation becomes the
reduced divergence form div0(v^-3 (q+eps^2)^((p-2)/2) grad0 v) = 0 with
every coefficient O(1), and that system, not the energy, is what the
solver drives to a root: the discrete energy at small p is minimized by
a collapsed one-cell ramp (its total-variation-like cost h^(1-p) beats
the true profile's at any affordable h), so energy descent converges to
garbage precisely in the regime the p-schedule needs.  Damped
lagged-diffusivity sweeps freeze the SPD diffusion tensor at the
current iterate, update all free nodes through a Jacobi-scaled CG (or
direct) solve, and backtrack on the scaled residual norm.  The energy
is evaluated at accepted iterates for the reported history.

Boundary layout.  Every node with level <= 0 is pinned at v = 1, so
u_p = 0 and w = 1 hold exactly on E0.  The inner Dirichlet layer is the
set of exterior nodes sharing a grid cell with an interior node; active
cells therefore never touch the interior, and the discrete energy only
integrates where the solution is genuinely exterior.  When E0 is
declared as a gauge ball the layer values are sharpened to the sub-cell
profile d/r (> 1 there); without that, the O(h) displacement of the
layer enters u_p multiplied by |m| and dominates the error budget at
small p.  The outer data either matches the radial barrier on the box
faces or imposes a constant w on the faces or on an interior gauge
sphere, handled with the same cell-wise layer rule.
"""

import numpy as np

from ._fem import FrameEnergy, Q1Workspace, _CORNER_SLICES, solve_spd
from .base import ParamsMixin
from .core import koranyi_dist
from .errors import (
    ConfigError,
    DomainTruncationError,
    NonpositiveFieldError,
)
from .grid import GridField, GridSpec, _second_diff, euclid_grad, grad0_fd, to_vtk
from .validation import (
    check_choice,
    check_in_open_interval,
    check_int,
    check_point,
    check_positive,
    check_real,
)

OUTER_MODES = ("barrier-matched", "constant")

_TINY = 1e-300


def barrier_upper(x, x0, r, p):
    """Radial comparison profile (d(x, x0)/r)^((4-p)/(1-p)).

    Decreasing in d since the exponent is negative; equals 1 on the gauge
    sphere of radius r.  ``x`` may hold arrays, in which case the profile
    is evaluated pointwise.  Overflow near the center saturates to inf;
    d = 0 itself is rejected because the profile has no value there.
    """
    check_in_open_interval(p, "p", 1.0, 4.0)
    check_positive(r, "r")
    d = np.asarray(koranyi_dist(x, x0), dtype=float)
    if np.any(d == 0.0):
        raise ConfigError("x", "zero gauge distance to the profile center")
    expo = (4.0 - p) / (1.0 - p)
    with np.errstate(over="ignore"):
        out = (d / r) ** expo
    if d.ndim == 0:
        return float(out)
    return out


class OuterBC:
    """Far-field Dirichlet data for the exterior problem.

    mode "barrier-matched": impose v = d(x, y0)/s on the box faces, the
    trace of the exact radial profile for the gauge ball (y0, s).  mode
    "constant": impose the value ``w_value`` either on the box faces
    (default) or, when (y0, s) are given, on the outward node layer of
    the gauge sphere {d(x, y0) = s}, with nodes beyond the sphere dropped
    from the computational domain.  ``slope_matched`` extends constant
    sphere data off the layer along the radial profile, removing the
    O(h) layer-displacement error when the data agrees with an exact
    radial solution.
    """

    def __init__(self, mode, y0=None, s=None, w_value=None, slope_matched=False):
        check_choice(mode, "outer.mode", OUTER_MODES)
        self.mode = mode
        self.slope_matched = bool(slope_matched)
        if mode == "barrier-matched":
            self.y0 = check_point(y0, "outer.y0")
            self.s = check_positive(s, "outer.s")
            self.w_value = None
        else:
            w = check_real(w_value, "outer.w_value")
            if not 0.0 < w <= 1.0:
                raise ConfigError("outer.w_value", f"must lie in (0, 1], got {w}")
            self.w_value = w
            if (y0 is None) != (s is None):
                raise ConfigError("outer.s", "sphere data needs both y0 and s")
            self.y0 = None if y0 is None else check_point(y0, "outer.y0")
            self.s = None if s is None else check_positive(s, "outer.s")

    def __repr__(self):
        return (f"OuterBC(mode={self.mode!r}, y0={self.y0}, s={self.s}, "
                f"w_value={self.w_value}, slope_matched={self.slope_matched})")


def _face_mask(shape):
    out = np.zeros(shape, dtype=bool)
    out[0, :, :] = out[-1, :, :] = True
    out[:, 0, :] = out[:, -1, :] = True
    out[:, :, 0] = out[:, :, -1] = True
    return out


def _any_neighbor(mask):
    """Nodes with at least one True 6-neighbor in ``mask``."""
    out = np.zeros_like(mask)
    out[1:, :, :] |= mask[:-1, :, :]
    out[:-1, :, :] |= mask[1:, :, :]
    out[:, 1:, :] |= mask[:, :-1, :]
    out[:, :-1, :] |= mask[:, 1:, :]
    out[:, :, 1:] |= mask[:, :, :-1]
    out[:, :, :-1] |= mask[:, :, 1:]
    return out


def _cell_neighbor(mask):
    """Nodes sharing a grid cell with a True node (26-neighborhood)."""
    out = mask.copy()
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(1, None)
        hi[axis] = slice(None, -1)
        grown = out.copy()
        grown[tuple(lo)] |= out[tuple(hi)]
        grown[tuple(hi)] |= out[tuple(lo)]
        out = grown
    return out


class PLapProblem:
    """Exterior Dirichlet problem for the horizontal p-Laplace substitute v.

    ``inner_bc`` is a level-set field for E0 (nonpositive inside); the
    initial set must stay strictly inside the box, and by default its
    shape is screened with the exterior gauge ball proxy so that the
    comparison arguments behind the error bounds actually apply.
    ``inner_ball = (center, r)`` declares E0 as an exact gauge ball and
    sharpens the inner layer values accordingly.
    """

    def __init__(self, p, eps, spec, inner_bc, outer_bc, inner_ball=None,
                 check_exterior=True):
        self.p = check_in_open_interval(p, "p", 1.0, 3.0)
        self.eps = check_positive(eps, "eps")
        if not isinstance(spec, GridSpec):
            raise ConfigError("spec", "expected a GridSpec")
        self.spec = spec
        if not isinstance(inner_bc, GridField) or inner_bc.spec != spec:
            raise ConfigError("inner_bc", "level-set field must live on the problem grid")
        self.inner_bc = inner_bc
        if not isinstance(outer_bc, OuterBC):
            raise ConfigError("outer", "expected an OuterBC")
        self.outer_bc = outer_bc
        if inner_ball is not None:
            try:
                x0, r = inner_ball
            except (TypeError, ValueError):
                raise ConfigError("inner", "inner_ball must be (center, r)") from None
            inner_ball = (check_point(x0, "inner.center"), check_positive(r, "inner.r"))
        self.inner_ball = inner_ball
        self.check_exterior = bool(check_exterior)

        inside = inner_bc.data <= 0.0
        if not inside.any():
            raise ConfigError("inner_bc", "level set has an empty interior")
        if (inside & _face_mask(spec.n)).any():
            raise DomainTruncationError(
                "the initial set reaches the box faces; enlarge the box")
        if self.check_exterior:
            r_ext = inner_ball[1] if inner_ball is not None else 3.0 * spec.max_h
            rep = exterior_ball_check(inner_bc, r_ext)
            if not rep["ok"]:
                raise ConfigError(
                    "inner_bc",
                    "exterior gauge ball proxy fails: worst penetration "
                    f"{rep['penetration']:.3g} exceeds {rep['allowed']:.3g} "
                    f"at R_ext = {r_ext:.3g}")

    @property
    def m_exponent(self):
        return (4.0 - self.p) / (1.0 - self.p)

    def __repr__(self):
        return (f"PLapProblem(p={self.p}, eps={self.eps}, spec={self.spec}, "
                f"outer_bc={self.outer_bc}, inner_ball={self.inner_ball})")


class PLapSolution:
    """Converged (or best-effort) minimizer, reported as w and u_p.

    w stays in (0, 1] on the domain up to the sharpened layer values, and
    u_p = (1 - p) log w nodewise.  ``energy_history`` holds the energy
    after each accepted sweep; the sweeps drive the residual, not the
    energy, so the history decreases only up to float noise near the
    root.  ``converged`` is False when the iteration budget ran out or
    the line search stalled, in which case the fields hold the best
    iterate reached.
    """

    def __init__(self, w, u_p, p, eps, energy_history, final_residual,
                 converged, n_iter, problem=None):
        self.w = w
        self.u_p = u_p
        self.p = p
        self.eps = eps
        self.energy_history = list(energy_history)
        self.final_residual = float(final_residual)
        self.converged = bool(converged)
        self.n_iter = int(n_iter)
        self.problem = problem

    def __repr__(self):
        return (f"PLapSolution(p={self.p}, eps={self.eps}, converged={self.converged}, "
                f"n_iter={self.n_iter}, final_residual={self.final_residual:.3e})")


class _Layout:
    # free: unknowns; dirichlet: pinned boundary layers; vfill: values on
    # every non-free node (deep interior v = 1, dropped exterior nodes
    # carry their data value so the energy stays finite); active: cells
    # touching at least one free node.
    def __init__(self, free, dirichlet, vfill, active, domain, d_inner, d_outer):
        self.free = free
        self.dirichlet = dirichlet
        self.vfill = vfill
        self.active = active
        self.domain = domain
        self.d_inner = d_inner
        self.d_outer = d_outer


def _build_layout(prob):
    spec = prob.spec
    phi = prob.inner_bc.data
    inside = phi <= 0.0
    outside = ~inside
    inner_layer = outside & _cell_neighbor(inside)
    X = spec.mesh()
    mm = prob.m_exponent

    d_inner = None
    inner_vals = 1.0
    if prob.inner_ball is not None:
        x0, r = prob.inner_ball
        d_inner = np.asarray(koranyi_dist(X, x0))
        # the declared ball is a sub-cell sharpening hint; clip so a
        # slightly mismatched hint cannot push w above 1 on the layer
        inner_vals = np.maximum(d_inner / r, 1.0)

    ob = prob.outer_bc
    d_outer = None
    excluded = np.zeros(spec.n, dtype=bool)
    if ob.mode == "barrier-matched":
        d_outer = np.asarray(koranyi_dist(X, ob.y0))
        outer_set = _face_mask(spec.n)
        if np.any(d_outer[outer_set] < ob.s * (1.0 - 1e-12)):
            raise ConfigError("outer.s", "barrier data exceeds 1 on the box faces; "
                                         "the enclosing gauge ball must fit inside the box")
        outer_vals = d_outer / ob.s
    elif ob.y0 is not None:
        base = float(np.exp(np.log(ob.w_value) / mm))
        d_outer = np.asarray(koranyi_dist(X, ob.y0))
        faces = _face_mask(spec.n)
        if np.any(d_outer[faces] <= ob.s):
            raise ConfigError("outer.s", "gauge sphere must fit strictly inside the box")
        if np.any(inside & (d_outer >= ob.s)):
            raise ConfigError("outer.s", "initial set is not contained in the gauge sphere")
        beyond = d_outer >= ob.s
        outer_set = beyond & _cell_neighbor(~beyond)
        excluded = beyond & ~outer_set
        outer_vals = base * (d_outer / ob.s) if ob.slope_matched else base
    else:
        base = float(np.exp(np.log(ob.w_value) / mm))
        outer_set = _face_mask(spec.n)
        outer_vals = base

    if (inner_layer & outer_set).any():
        raise ConfigError("outer", "inner and outer Dirichlet layers overlap; "
                                   "the region between them is too thin for this grid")
    free = outside & ~inner_layer & ~outer_set & ~excluded
    if not free.any():
        raise ConfigError("outer", "no free nodes remain between the Dirichlet layers")
    dirichlet = inner_layer | outer_set

    vfill = np.ones(spec.n)
    if np.ndim(inner_vals):
        vfill[inner_layer] = inner_vals[inner_layer]
    if np.ndim(outer_vals):
        vfill[outer_set] = outer_vals[outer_set]
        vfill[excluded] = outer_vals[excluded]
    else:
        vfill[outer_set] = outer_vals
        vfill[excluded] = outer_vals

    active = np.zeros(tuple(k - 1 for k in spec.n), dtype=bool)
    for sl in _CORNER_SLICES:
        active |= free[sl]
    return _Layout(free, dirichlet, vfill, active, outside, d_inner, d_outer)


# horizontal radii of candidate touching-ball directions; with the
# paired vertical component they sweep the unit gauge sphere from the
# vertical axis to the equator
_PROBE_U = (0.0, 0.35, 0.5, 0.65, 0.8, 0.92, 1.0)


def exterior_ball_check(inner_bc, r_ext, n_samples=48, seed=0, slack=0.25):
    """Probe the exterior gauge ball condition of the domain outside E0.

    The comparison arguments behind the barrier sandwich and the
    gradient bound need the complement of the solve domain to contain,
    at each boundary point, a touching gauge ball of radius r_ext: a
    ball inside E0 whose boundary passes through the point.  For a
    sample of boundary-layer nodes this places candidate centers at
    exact gauge distance r_ext from the node (group translation of
    dilated unit-sphere directions, oriented inward along the level-set
    gradient) and measures how far the best candidate ball sticks out of
    E0.  Penetration beyond ``slack * r_ext`` plus two grid cells fails
    the check.  This screens necks and waists thinner than r_ext; it is
    a sampled heuristic, not a certificate.
    """
    check_positive(r_ext, "r_ext")
    spec = inner_bc.spec
    phi = inner_bc.data
    inside = phi <= 0.0
    if not inside.any():
        raise ConfigError("inner_bc", "level set has an empty interior")
    outside = ~inside
    layer = inside & _any_neighbor(outside)
    idx = np.argwhere(layer)
    if idx.shape[0] == 0:
        raise ConfigError("inner_bc", "level set has no boundary layer")
    rng = np.random.default_rng(seed)
    if idx.shape[0] > n_samples:
        idx = idx[rng.choice(idx.shape[0], size=n_samples, replace=False)]

    g1, g2, g3 = euclid_grad(inner_bc)
    ax = spec.axes()
    out_idx = np.argwhere(outside)
    po = (ax[0][out_idx[:, 0]], ax[1][out_idx[:, 1]], ax[2][out_idx[:, 2]])

    worst = -np.inf
    for i, j, k in idx:
        x1, x2, x3 = ax[0][i], ax[1][j], ax[2][k]
        n1, n2, n3 = g1.data[i, j, k], g2.data[i, j, k], g3.data[i, j, k]
        nh = float(np.hypot(n1, n2))
        if nh > 0.0:
            e1, e2 = -n1 / nh, -n2 / nh
        else:
            e1, e2 = 1.0, 0.0
        signs = (1.0, -1.0) if abs(n3) < _TINY else (-np.sign(n3),)
        best = -np.inf
        for u in _PROBE_U:
            w3 = 0.25 * np.sqrt(max(1.0 - u ** 4, 0.0))
            for sg in signs if w3 > 0.0 else (1.0,):
                o1 = r_ext * u * e1
                o2 = r_ext * u * e2
                o3 = r_ext * r_ext * sg * w3
                c = (x1 + o1, x2 + o2,
                     x3 + o3 + 0.5 * (x1 * o2 - x2 * o1))
                dmin = float(np.min(koranyi_dist(po, c)))
                best = max(best, dmin)
        worst = max(worst, r_ext - best)
    allowed = slack * r_ext + 2.0 * spec.max_h
    return {
        "ok": bool(worst <= allowed),
        "penetration": float(worst),
        "allowed": float(allowed),
        "r_ext": float(r_ext),
        "n_samples": int(idx.shape[0]),
    }


class PLaplaceSolver(ParamsMixin):
    """Damped lagged-diffusivity sweeps on the reduced divergence form.

    Each sweep freezes the diffusion tensor of
    div0(v^-3 (q+eps^2)^((p-2)/2) grad0 v) = 0 at the current iterate,
    solves the SPD linear system for the update, and backtracks on the
    Jacobi-scaled residual norm.  Driving the iteration by the equation
    residual rather than by energy descent is deliberate: for p near 1
    the discrete energy is minimized by a collapsed one-cell ramp whose
    cost undercuts the true profile at any practical grid, so a descent
    method converges to garbage there; the reduced form has no such
    root.  The energy is still evaluated at every accepted iterate for
    the reported history.  Parameters follow the knobs of ``fit`` and
    are validated there, not in the constructor.
    """

    def __init__(self, tol=1e-8, max_iters=60, sigma_v=0.25, v_floor_frac=0.2,
                 armijo_c1=1e-4, armijo_min_step=1e-6, aa_depth=4,
                 cg_rtol=1e-8, cg_maxiter=1500, direct_limit=6000):
        self.tol = tol
        self.max_iters = max_iters
        self.sigma_v = sigma_v
        self.v_floor_frac = v_floor_frac
        self.armijo_c1 = armijo_c1
        self.armijo_min_step = armijo_min_step
        self.aa_depth = aa_depth
        self.cg_rtol = cg_rtol
        self.cg_maxiter = cg_maxiter
        self.direct_limit = direct_limit

    def _initial(self, prob, layout, v0, floor):
        if v0 is not None:
            if not isinstance(v0, GridField) or v0.spec != prob.spec:
                raise ConfigError("v0", "initial guess must live on the problem grid")
            v = v0.data.astype(float).copy()
            np.maximum(v, floor, out=v)
        elif layout.d_inner is not None:
            v = layout.d_inner / prob.inner_ball[1]
        elif layout.d_outer is not None:
            v = np.maximum(layout.d_outer / prob.outer_bc.s, 1.0)
        else:
            v = np.ones(prob.spec.n)
        v = np.array(v, dtype=float)
        nonfree = ~layout.free
        v[nonfree] = layout.vfill[nonfree]
        return v

    # preliminary p values a cold start runs through before the target;
    # see fit
    _CONT_STAGES = (1.5, 1.2)

    def _drive(self, model, ws, layout, v, tol, max_iters, floor, aa_depth):
        """Damped sweeps from ``v``; returns (v, history, resid, converged, accepted)."""
        free_flat = layout.free.ravel()

        energy = model.energy(v)
        if not np.isfinite(energy):
            raise ConfigError("v0", "initial iterate has non-finite energy")
        history = [energy]
        converged = False
        accepted = 0

        def scaled_rms(t, dg):
            r = model.vform_residual(t).ravel()[free_flat] / dg
            return float(np.sqrt(np.mean(r * r)))

        # Anderson memory over the fixed-point map G(v) = v + step(v):
        # the dropped chain term makes the plain sweeps linearly
        # convergent with an O(1) factor near p = 1, and the smooth slow
        # modes it leaves behind are exactly what a short least-squares
        # extrapolation removes
        hist_f, hist_g = [], []

        dg = None
        for _ in range(max_iters):
            Ff = model.vform_residual(v).ravel()[free_flat]
            H = ws.build_matrix(model.vform_tensor(v))
            Hff = H[free_flat, :][:, free_flat]
            dg = Hff.diagonal()
            resid = float(np.sqrt(np.mean((Ff / dg) ** 2)))
            if resid <= tol:
                converged = True
                break

            # far from the root the linear systems only need a digit or
            # two; tighten with the outer residual (inexact Newton)
            rtol_k = max(self.cg_rtol, min(1e-2, 0.1 * resid))
            step, _clean = solve_spd(
                Hff, -Ff, direct_limit=self.direct_limit,
                rtol=rtol_k, maxiter=self.cg_maxiter)

            base = v.ravel()[free_flat]

            def candidate(vals):
                t = v.copy()
                tf = t.ravel()
                tf[free_flat] = vals
                if float(np.min(tf[free_flat])) <= floor:
                    return np.inf, t
                return scaled_rms(t, dg), t

            alpha = 1.0
            accepted_step = False
            while alpha >= self.armijo_min_step:
                r_t, trial = candidate(base + alpha * step)
                if r_t <= (1.0 - self.armijo_c1 * alpha) * resid:
                    accepted_step = True
                    break
                alpha *= 0.5

            if aa_depth > 0:
                hist_f.append(step)
                hist_g.append(base + step)
                if len(hist_f) > aa_depth + 1:
                    hist_f.pop(0)
                    hist_g.pop(0)
                if len(hist_f) >= 2:
                    M = np.stack([hist_f[-1] - f for f in hist_f[:-1]], axis=1)
                    gam, *_ = np.linalg.lstsq(M, hist_f[-1], rcond=None)
                    x_aa = hist_g[-1].copy()
                    for j, gj in enumerate(gam):
                        x_aa -= gj * (hist_g[-1] - hist_g[j])
                    r_aa, t_aa = candidate(x_aa)
                    if r_aa < min(r_t, resid):
                        r_t, trial = r_aa, t_aa
                        accepted_step = True

            if not accepted_step:
                break

            v = trial
            accepted += 1
            prev = energy
            energy = model.energy(v)
            history.append(energy)
            scale = max(abs(prev), abs(energy), _TINY)
            # near p = 1 the energy is flat across a wide neighborhood of
            # the root, so a small energy change alone is not evidence of
            # convergence; require the residual to be at least plausible
            if abs(prev - energy) / scale < tol and r_t <= np.sqrt(tol):
                converged = True
                break

        Ff = model.vform_residual(v).ravel()[free_flat]
        if dg is None:
            dg = ws.build_matrix(model.vform_tensor(v))[free_flat, :][:, free_flat].diagonal()
        resid = float(np.sqrt(np.mean((Ff / dg) ** 2)))
        if resid <= tol:
            converged = True
        return v, history, resid, converged, accepted

    def fit(self, prob, v0=None):
        """Solve ``prob``; sets solution_, w_, u_p_, n_iter_, converged_.

        Stops when the Jacobi-scaled residual of the discrete system or
        the relative energy change between accepted sweeps drops below
        ``tol``.  Running out of sweeps or stalling the backtracking
        leaves ``converged_`` False with the best iterate retained.

        Cold starts below the continuation stages (1.5, 1.2) first solve
        those easier problems to a loose tolerance and carry v over: v is
        p-independent for radial data, and below p ~ 1.2 the reaction
        term the sweeps drop dominates the (p - 1)-sized curvature along
        grad0 v, so no damping of the sweep direction descends from cold
        data and the iteration would stall on the spot.  A supplied
        ``v0`` skips the continuation; n_iter_ and energy_history_ cover
        the target-p stage only.
        """
        if not isinstance(prob, PLapProblem):
            raise ConfigError("prob", "expected a PLapProblem")
        tol = check_positive(self.tol, "tol")
        max_iters = check_int(self.max_iters, "max_iters", minimum=1)
        sigma = check_real(self.sigma_v, "sigma_v")
        if sigma < 0.0:
            raise ConfigError("sigma_v", "must be nonnegative")
        floor_frac = check_in_open_interval(self.v_floor_frac, "v_floor_frac", 0.0, 1.0)
        aa_depth = check_int(self.aa_depth, "aa_depth", minimum=0)

        layout = _build_layout(prob)
        spec = prob.spec
        floor = floor_frac * float(np.min(layout.vfill[layout.dirichlet]))
        v = self._initial(prob, layout, v0, floor)
        ws = Q1Workspace(spec, layout.active)

        if v0 is None:
            for pk in self._CONT_STAGES:
                if pk <= prob.p + 1e-12:
                    break
                stage = FrameEnergy(spec, layout.active, pk, prob.eps, sigma)
                v, _, _, _, _ = self._drive(
                    stage, ws, layout, v, max(tol, 1e-5), max_iters, floor, aa_depth)

        model = FrameEnergy(spec, layout.active, prob.p, prob.eps, sigma)
        v, history, resid, converged, accepted = self._drive(
            model, ws, layout, v, tol, max_iters, floor, aa_depth)

        logv = np.log(v)
        w = np.exp(prob.m_exponent * logv)
        u_p = (4.0 - prob.p) * logv
        sol = PLapSolution(
            w=GridField(spec, w),
            u_p=GridField(spec, u_p),
            p=prob.p,
            eps=prob.eps,
            energy_history=history,
            final_residual=resid,
            converged=converged,
            n_iter=accepted,
            problem=prob,
        )
        self.solution_ = sol
        self.w_ = sol.w
        self.u_p_ = sol.u_p
        self.n_iter_ = sol.n_iter
        self.converged_ = sol.converged
        return self


def solve(prob, tol=1e-8, max_iters=60, v0=None):
    """One-call front end around PLaplaceSolver; returns the PLapSolution."""
    est = PLaplaceSolver(tol=tol, max_iters=max_iters)
    return est.fit(prob, v0=v0).solution_


def to_arrival_time(sol):
    """u_p = (1 - p) log w, nodewise; w must be strictly positive."""
    w = sol.w.data
    if np.any(w <= 0.0):
        ijk = tuple(int(c) for c in np.argwhere(w <= 0.0)[0])
        raise NonpositiveFieldError(f"w is not positive at node {ijk}")
    return GridField(sol.w.spec, (1.0 - sol.p) * np.log(w))


def sandwich_check(sol, inner, outer):
    """Compare u_p against the two-sided radial barrier envelope.

    ``inner = (x0, r)`` must have its gauge ball inside E0, ``outer =
    (y0, s)`` must contain it; both containments are checked against the
    level set up to a 3-cell margin and violated placements raise
    ConfigError.  On the exterior domain the barriers enforce

        (4 - p) log(d(x, y0)/s) <= u_p(x) <= (4 - p) log(d(x, x0)/r),

    and the report records the worst violation of each side together
    with a second-difference truncation estimate for calibrating how
    much violation discretization alone can produce.
    """
    prob = sol.problem
    if prob is None:
        raise ConfigError("sol", "solution carries no problem description")
    x0, r = inner
    x0 = check_point(x0, "inner.center")
    r = check_positive(r, "inner.r")
    y0, s = outer
    y0 = check_point(y0, "outer.y0")
    s = check_positive(s, "outer.s")

    spec = prob.spec
    X = spec.mesh()
    phi = prob.inner_bc.data
    margin = 3.0 * spec.max_h
    d_in = np.asarray(koranyi_dist(X, x0))
    d_out = np.asarray(koranyi_dist(X, y0))
    if np.any((d_in <= r - margin) & (phi > 0.0)):
        raise ConfigError("inner", "barrier ball (x0, r) is not inside the initial set")
    if np.any((phi <= 0.0) & (d_out >= s + margin)):
        raise ConfigError("outer", "initial set is not inside the barrier ball (y0, s)")

    domain = phi > 0.0
    scale = 4.0 - sol.p
    u = sol.u_p.data
    with np.errstate(divide="ignore"):
        upper = scale * np.log(d_in / r)
        lower = scale * np.log(d_out / s)
    up_viol = float(np.max((u - upper)[domain], initial=0.0))
    low_viol = float(np.max((lower - u)[domain], initial=0.0))

    # calibrate against pure discretization: kinks at the pinned layer
    # inflate one-sided second differences, so measure curvature two
    # cells into the smooth region
    core = domain & ~_any_neighbor(_any_neighbor(~domain))
    if not core.any():
        core = domain
    est = 0.0
    for a in range(3):
        d2 = _second_diff(u, a, spec.h[a])
        est += spec.h[a] ** 2 * float(np.max(np.abs(d2[core]), initial=0.0))
    est /= 8.0

    return {
        "upper_violation": up_viol,
        "lower_violation": low_viol,
        "truncation_estimate": est,
        "p": sol.p,
        "r": r,
        "s": s,
        "scale": scale,
        "nodes_checked": int(np.count_nonzero(domain)),
    }


def gradient_bound_check(sol, r_ball):
    """Sup of |grad0 u_p| over the exterior domain against (4 - p)/r.

    The bound is the interior-ball gradient estimate for initial data
    containing a gauge ball of radius ``r_ball``; the caller asserts that
    containment.  Reports the measured sup, the bound, and the margin
    (positive when the bound holds).
    """
    prob = sol.problem
    if prob is None:
        raise ConfigError("sol", "solution carries no problem description")
    r = check_positive(r_ball, "r_ball")
    a, b = grad0_fd(sol.u_p)
    gh = np.hypot(a.data, b.data)
    domain = prob.inner_bc.data > 0.0
    sup = float(np.max(gh[domain], initial=0.0))
    bound = (4.0 - sol.p) / r
    return {
        "sup_grad0": sup,
        "bound": bound,
        "margin": bound - sup,
        "p": sol.p,
        "r": r,
        "nodes_checked": int(np.count_nonzero(domain)),
    }


def max_principle_check(sol, rel_tol=1e-10):
    """Free values of w must stay inside the Dirichlet data range."""
    prob = sol.problem
    if prob is None:
        raise ConfigError("sol", "solution carries no problem description")
    layout = _build_layout(prob)
    mm = prob.m_exponent
    with np.errstate(divide="ignore"):
        w_bc = np.exp(mm * np.log(layout.vfill[layout.dirichlet]))
    w_free = sol.w.data[layout.free]
    lo, hi = float(np.min(w_bc)), float(np.max(w_bc))
    span = max(hi - lo, abs(hi), _TINY)
    over = float(np.max(w_free, initial=lo) - hi)
    under = float(lo - np.min(w_free, initial=hi))
    return {
        "ok": bool(over <= rel_tol * span and under <= rel_tol * span),
        "w_bc_range": (lo, hi),
        "w_free_range": (float(np.min(w_free)), float(np.max(w_free))),
        "overshoot": max(over, 0.0),
        "undershoot": max(under, 0.0),
        "rel_tol": rel_tol,
    }


def problem_from_config(cfg):
    """Build (PLapProblem, solver_options) from a plain JSON-style dict.

    Unknown keys are rejected so typos fail loudly; every error names the
    offending field.  Layout::

        {"p": 1.5, "eps": 1e-6, "tol": 1e-8, "max_iters": 60,
         "grid": {"lo": [...], "hi": [...], "n": [...]},
         "inner": {"type": "koranyi_ball", "center": [...], "r": 1.0}
                  or {"type": "field_file", "path": "phi.npy"},
         "outer": {"mode": "barrier-matched", "y0": [...], "s": 1.0}
                  or {"mode": "constant", "w_value": 0.1, ...}}
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config", "expected a mapping")
    known = {"p", "eps", "tol", "max_iters", "grid", "inner", "outer"}
    for key in cfg:
        if key not in known:
            raise ConfigError(str(key), "unknown configuration key")
    for key in ("p", "grid", "inner", "outer"):
        if key not in cfg:
            raise ConfigError(key, "missing required key")

    p = check_real(cfg["p"], "p")
    eps = check_positive(cfg.get("eps", 1e-6), "eps")
    g = cfg["grid"]
    if not isinstance(g, dict):
        raise ConfigError("grid", "expected a mapping")
    for key in ("lo", "hi", "n"):
        if key not in g:
            raise ConfigError(f"grid.{key}", "missing required key")
    spec = GridSpec(tuple(g["lo"]), tuple(g["hi"]), tuple(g["n"]))

    inner = cfg["inner"]
    if not isinstance(inner, dict):
        raise ConfigError("inner", "expected a mapping")
    itype = check_choice(inner.get("type"), "inner.type",
                         ("koranyi_ball", "field_file"))
    if itype == "koranyi_ball":
        center = check_point(inner.get("center"), "inner.center")
        r = check_positive(inner.get("r"), "inner.r")
        X = spec.mesh()
        level = GridField(spec, np.asarray(koranyi_dist(X, center)) - r)
        ball = (center, r)
    else:
        path = inner.get("path")
        if not isinstance(path, str):
            raise ConfigError("inner.path", "missing file path")
        try:
            arr = np.load(path)
        except (OSError, ValueError) as exc:
            raise ConfigError("inner.path", f"cannot load level set: {exc}") from None
        try:
            level = GridField(spec, np.asarray(arr, dtype=float))
        except ConfigError as exc:
            raise ConfigError("inner.path", str(exc)) from None
        ball = None

    outer = cfg["outer"]
    if not isinstance(outer, dict):
        raise ConfigError("outer", "expected a mapping")
    okeys = {"mode", "y0", "s", "w_value", "slope_matched"}
    for key in outer:
        if key not in okeys:
            raise ConfigError(f"outer.{key}", "unknown configuration key")
    ob = OuterBC(
        mode=outer.get("mode"),
        y0=tuple(outer["y0"]) if "y0" in outer else None,
        s=outer.get("s"),
        w_value=outer.get("w_value"),
        slope_matched=bool(outer.get("slope_matched", False)),
    )

    prob = PLapProblem(p=p, eps=eps, spec=spec, inner_bc=level,
                       outer_bc=ob, inner_ball=ball)
    opts = {
        "tol": check_positive(cfg.get("tol", 1e-8), "tol"),
        "max_iters": check_int(cfg.get("max_iters", 60), "max_iters", minimum=1),
    }
    return prob, opts


def solution_to_vtk(sol, path):
    """Dump w and u_p to a legacy VTK structured-points file."""
    to_vtk(path, {"w": sol.w, "u_p": sol.u_p})


def solution_meta(sol):
    """JSON-ready run summary (floats and plain lists only)."""
    return {
        "p": float(sol.p),
        "eps": float(sol.eps),
        "converged": bool(sol.converged),
        "n_iter": int(sol.n_iter),
        "final_residual": float(sol.final_residual),
        "energy_history": [float(e) for e in sol.energy_history],
    }
