"""Q1 trilinear elements for the horizontal p-Laplace solve.

Everything is phrased in the substituted variable v = w^(1/m) with
m = (4-p)/(1-p).  Substituting w = v^m into the p-form equation kills
every m-dependent weight: (m-1)(p-1) = -3 for all p, so

    div0( v^-3 (q_eff + eps^2)^((p-2)/2) grad0 v ) = 0

with q_eff the regularized squared frame gradient of v.  The radial
profile v = d/r solves this at every p with v and the weight both O(1),
which is what makes p near 1 tractable: the plain w-energy on a grid is
minimized by a collapsed one-cell ramp whose discrete cost undercuts the
true profile once p - 1 is small, so this module drives the solve off
the reduced divergence form (residual + frozen-coefficient SPD sweeps)
and keeps the energy only for reporting.

Fields are evaluated on node-centered boxes with full 2x2x2 Gauss
quadrature; one-point quadrature is ruled out because the cell-averaged
horizontal gradient annihilates the checkerboard mode.  The frame vectors
X1 = d1 - (x2/2) d3 and X2 = d2 + (x1/2) d3 enter through the gauss-point
coordinates only, so the assembled forms transform cleanly under the
anisotropic dilations.

The reported energy (1/p) integral of (A(v) q_eff + eps^2)^(p/2) - eps^p
still carries A(v) = m^2 v^(2m-2), which spans dozens of decades near
p = 1; it is evaluated in log space, harmless for exp/log but fatal for
naive powers.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import LinearSolveError

_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _reference_tables():
    """Basis values/derivatives at the 8 Gauss points, plus exact
    reference integrals KK[a][b][i, j] = int d_a phi_i d_b phi_j.

    Corner c and gauss point g are both packed i-major: bit 2 is the x1
    offset, bit 1 the x2 offset, bit 0 the x3 offset.
    """
    N = np.empty((8, 8))
    D = np.empty((3, 8, 8))
    for g in range(8):
        gx = (_GAUSS[(g >> 2) & 1], _GAUSS[(g >> 1) & 1], _GAUSS[g & 1])
        for c in range(8):
            bits = ((c >> 2) & 1, (c >> 1) & 1, c & 1)
            f = [gx[a] if bits[a] else 1.0 - gx[a] for a in range(3)]
            df = [1.0 if bits[a] else -1.0 for a in range(3)]
            N[g, c] = f[0] * f[1] * f[2]
            D[0, g, c] = df[0] * f[1] * f[2]
            D[1, g, c] = f[0] * df[1] * f[2]
            D[2, g, c] = f[0] * f[1] * df[2]
    # 2-point Gauss per axis is exact here: every integrand is at most
    # quadratic in each reference coordinate
    KK = np.empty((3, 3, 8, 8))
    for a in range(3):
        for b in range(3):
            KK[a, b] = sum(np.outer(D[a, g], D[b, g]) for g in range(8)) / 8.0
    return N, D, KK


_N, _D, _KK = _reference_tables()

_CORNER_SLICES = [
    (slice(di, None) if di else slice(None, -1),
     slice(dj, None) if dj else slice(None, -1),
     slice(dk, None) if dk else slice(None, -1))
    for di, dj, dk in (((c >> 2) & 1, (c >> 1) & 1, c & 1) for c in range(8))
]


def corner_views(data):
    """The 8 per-cell corner views of a node array, in table order."""
    return [data[s] for s in _CORNER_SLICES]


class FrameEnergy:
    """Integrand (1/p) [ (A(v) q_eff + eps^2)^(p/2) - eps^p ] per gauss point.

    q_eff = (X1 v)^2 + (X2 v)^2 + sigma h3^2 (X3 v)^2.  The sigma term is an
    O(h^2)-consistent vertical viscosity: without it the quadratic form
    loses control of d3 v on cells hugging the x1 = x2 = 0 axis.  The eps^p
    subtraction is done with the bitwise-identical expression so exactly
    constant fields score exactly zero.
    """

    def __init__(self, spec, active, p, eps, sigma):
        self.spec = spec
        self.p = float(p)
        self.mm = (4.0 - p) / (1.0 - p)
        self.eps2 = float(eps) ** 2
        self.epsp = float(np.exp(0.5 * self.p * np.log(self.eps2)))
        self.logm2 = float(np.log(self.mm * self.mm))
        h1, h2, h3 = spec.h
        self.h = (h1, h2, h3)
        self.visc = float(sigma) * h3 * h3
        # active-cell quadrature weight |J|/8, zero on inactive cells
        self.wq = np.where(active, spec.cell_volume / 8.0, 0.0)
        ax = spec.axes()
        # gauss-point coordinates per axis: [low offset, high offset]
        self.x1g = [(ax[0][:-1] + t * h1)[:, None, None] for t in _GAUSS]
        self.x2g = [(ax[1][:-1] + t * h2)[None, :, None] for t in _GAUSS]

    def _gp_fields(self, vdata, g):
        V = corner_views(vdata)
        h1, h2, h3 = self.h
        v = sum(_N[g, c] * V[c] for c in range(8))
        d1 = sum(_D[0, g, c] * V[c] for c in range(8)) / h1
        d2 = sum(_D[1, g, c] * V[c] for c in range(8)) / h2
        d3 = sum(_D[2, g, c] * V[c] for c in range(8)) / h3
        x1 = self.x1g[(g >> 2) & 1]
        x2 = self.x2g[(g >> 1) & 1]
        a = d1 - 0.5 * x2 * d3
        b = d2 + 0.5 * x1 * d3
        return v, a, b, d3, x1, x2

    def _common(self, v, a, b, z):
        """(logA, Aq, s) with s = A q_eff + eps^2; q = 0 maps to s = eps^2."""
        q = a * a + b * b + self.visc * z * z
        logA = self.logm2 + (2.0 * self.mm - 2.0) * np.log(v)
        Aq = np.exp(logA + np.log(q))
        return logA, Aq, Aq + self.eps2

    def energy(self, vdata):
        total = 0.0
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            for g in range(8):
                v, a, b, z, _, _ = self._gp_fields(vdata, g)
                _, _, s = self._common(v, a, b, z)
                integ = (np.exp(0.5 * self.p * np.log(s)) - self.epsp) / self.p
                total += float(np.sum(integ * self.wq))
        return total if np.isfinite(total) else np.inf

    def gradient(self, vdata):
        out = np.zeros_like(vdata)
        h1, h2, h3 = self.h
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            for g in range(8):
                v, a, b, z, x1, x2 = self._gp_fields(vdata, g)
                logA, Aq, s = self._common(v, a, b, z)
                logs = np.log(s)
                spm1 = np.exp((0.5 * self.p - 1.0) * logs)
                # d f / d v at fixed gradient: (1/2) s^(p/2-1) A'(v) q
                dfdv = 0.5 * spm1 * Aq * (2.0 * self.mm - 2.0) / v
                diff = np.exp(logA + (0.5 * self.p - 1.0) * logs)
                fa = (diff * a) * self.wq
                fb = (diff * b) * self.wq
                fz = (diff * self.visc * z) * self.wq
                fv = dfdv * self.wq
                f3 = fz - 0.5 * x2 * fa + 0.5 * x1 * fb
                for c in range(8):
                    out[_CORNER_SLICES[c]] += (
                        _N[g, c] * fv
                        + (_D[0, g, c] / h1) * fa
                        + (_D[1, g, c] / h2) * fb
                        + (_D[2, g, c] / h3) * f3
                    )
        if not np.all(np.isfinite(out)):
            raise LinearSolveError("gradient assembly produced non-finite entries")
        return out

    def _vform_weight(self, v, a, b, z):
        """Diffusion weight c = v^-3 (q_eff + eps^2)^((p-2)/2) and q_eff."""
        q = a * a + b * b + self.visc * z * z
        return (q + self.eps2) ** (0.5 * self.p - 1.0) / (v * v * v), q

    def vform_residual(self, vdata):
        """Galerkin residual of the reduced divergence form.

        F_i = sum_cells int c(v) [X1v X1phi_i + X2v X2phi_i
                                  + visc X3v X3phi_i]; a root of F on the
        free nodes is the discrete solution.  Unlike the energy gradient
        this system has no collapsed-ramp root: the weight is algebraic
        in v, so a sharp transition leaves an O(1) flux imbalance.
        """
        out = np.zeros_like(vdata)
        h1, h2, h3 = self.h
        for g in range(8):
            v, a, b, z, x1, x2 = self._gp_fields(vdata, g)
            c, _ = self._vform_weight(v, a, b, z)
            fa = (c * a) * self.wq
            fb = (c * b) * self.wq
            f3 = (c * self.visc * z) * self.wq - 0.5 * x2 * fa + 0.5 * x1 * fb
            for cn in range(8):
                out[_CORNER_SLICES[cn]] += (
                    (_D[0, g, cn] / h1) * fa
                    + (_D[1, g, cn] / h2) * fb
                    + (_D[2, g, cn] / h3) * f3
                )
        if not np.all(np.isfinite(out)):
            raise LinearSolveError("residual assembly produced non-finite entries")
        return out

    def vform_tensor(self, vdata):
        """Gauss-averaged SPD tensor of the frozen-coefficient sweep.

        Linearizing the reduced form in the gradient slot gives

            T = c [ diag(1, 1, visc) + (p-2)/(q+eps^2) ghat ghat' ],

        ghat = (a, b, visc z).  Cauchy-Schwarz in the metric
        diag(1, 1, visc) bounds the negative rank-one part:
        e'Te >= (p-1) c m(e) > 0, so T is SPD without clipping; keeping
        it matters near p = 1, where the scalar surrogate overestimates
        curvature along the gradient by 1/(p-1) and the sweeps stall.
        The nonsymmetric v^-3 chain term is lower order and dropped.
        Returned as the 6 components (11, 22, 33, 12, 13, 23).
        """
        vi = self.visc
        Tsum = [0.0] * 6
        for g in range(8):
            v, a, b, z, _, _ = self._gp_fields(vdata, g)
            c, q = self._vform_weight(v, a, b, z)
            k = (self.p - 2.0) * c / (q + self.eps2)
            Tsum[0] = Tsum[0] + c + k * a * a
            Tsum[1] = Tsum[1] + c + k * b * b
            Tsum[2] = Tsum[2] + c * vi + k * (vi * z) ** 2
            Tsum[3] = Tsum[3] + k * a * b
            Tsum[4] = Tsum[4] + k * a * vi * z
            Tsum[5] = Tsum[5] + k * b * vi * z
        return [t / 8.0 for t in Tsum]


class Q1Workspace:
    """Per-grid assembly of the frozen-coefficient SPD surrogate.

    The frame metric is frozen at cell centers while the reference blocks
    KK are exact, so each local matrix is an exactly integrated Q1
    stiffness for a constant PSD metric; with the viscosity it is PD.
    """

    def __init__(self, spec, active):
        self.spec = spec
        n1, n2, n3 = spec.n
        idx = np.arange(n1 * n2 * n3, dtype=np.int64).reshape(n1, n2, n3)
        flat_active = np.asarray(active, dtype=bool)
        corners = [idx[s][flat_active] for s in _CORNER_SLICES]
        self.corner_idx = np.stack(corners).astype(np.int32)  # (8, nact)
        self.nact = int(self.corner_idx.shape[1])
        ax = spec.axes()
        h1, h2, h3 = spec.h
        c1 = np.broadcast_to((ax[0][:-1] + 0.5 * h1)[:, None, None], flat_active.shape)
        c2 = np.broadcast_to((ax[1][:-1] + 0.5 * h2)[None, :, None], flat_active.shape)
        self.x1c = c1[flat_active]
        self.x2c = c2[flat_active]
        self.nnodes = n1 * n2 * n3
        self.active = flat_active

    def build_matrix(self, T, chunk=65536):
        """CSR of sum_cells |J| (grad phi)' G (grad phi).

        T holds the 6 frame-basis tensor components (11, 22, 33, 12, 13,
        23) per cell; G = B' T B pulls them back to grid derivatives with
        the frame map B frozen at the cell center, a congruence that
        preserves positive definiteness.
        """
        spec = self.spec
        h1, h2, h3 = spec.h
        vol = spec.cell_volume
        t11, t22, t33, t12, t13, t23 = (np.asarray(t)[self.active] for t in T)
        fin = np.all([np.all(np.isfinite(t)) for t in (t11, t22, t33, t12, t13, t23)])
        if not fin:
            raise LinearSolveError("non-finite cell coefficients in the sweep matrix")
        y1, y2 = 0.5 * self.x1c, 0.5 * self.x2c
        g11 = t11
        g22 = t22
        g12 = t12
        g13 = -t11 * y2 + t12 * y1 + t13
        g23 = -t12 * y2 + t22 * y1 + t23
        g33 = (t11 * y2 * y2 + t22 * y1 * y1 + t33
               - 2.0 * t12 * y1 * y2 - 2.0 * t13 * y2 + 2.0 * t23 * y1)
        m11 = g11 / (h1 * h1)
        m22 = g22 / (h2 * h2)
        m33 = g33 / (h3 * h3)
        m12 = g12 / (h1 * h2)
        m13 = g13 / (h1 * h3)
        m23 = g23 / (h2 * h3)
        K12 = _KK[0, 1] + _KK[1, 0]
        K13 = _KK[0, 2] + _KK[2, 0]
        K23 = _KK[1, 2] + _KK[2, 1]
        parts = None
        for lo in range(0, self.nact, chunk):
            sl = slice(lo, min(lo + chunk, self.nact))
            Kc = (
                m11[sl, None, None] * _KK[0, 0]
                + m22[sl, None, None] * _KK[1, 1]
                + m33[sl, None, None] * _KK[2, 2]
                + m12[sl, None, None] * K12
                + m13[sl, None, None] * K13
                + m23[sl, None, None] * K23
            ) * vol
            ci = self.corner_idx[:, sl].T  # (L, 8)
            rows = np.broadcast_to(ci[:, :, None], Kc.shape)
            cols = np.broadcast_to(ci[:, None, :], Kc.shape)
            part = sp.coo_matrix(
                (Kc.ravel(), (rows.ravel(), cols.ravel())),
                shape=(self.nnodes, self.nnodes),
            ).tocsr()
            parts = part if parts is None else parts + part
        return parts


def _cg_compat(A, b, rtol, maxiter):
    try:
        return spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter)
    except TypeError:  # older scipy spells the relative tolerance "tol"
        return spla.cg(A, b, tol=rtol, atol=0.0, maxiter=maxiter)


def solve_spd(H, b, *, direct_limit=40000, rtol=1e-8, maxiter=1500):
    """Jacobi-scaled direct or CG solve; returns (x, clean_convergence)."""
    d = H.diagonal()
    if not np.all(np.isfinite(H.data)):
        raise LinearSolveError("surrogate Hessian has non-finite entries")
    if np.any(d <= 0.0):
        raise LinearSolveError("surrogate Hessian lost positive diagonal")
    S = 1.0 / np.sqrt(d)
    Ds = sp.diags(S)
    Hs = (Ds @ H @ Ds).tocsr()
    bs = S * b
    if H.shape[0] <= direct_limit:
        x = spla.spsolve(Hs.tocsc(), bs)
        ok = bool(np.all(np.isfinite(x)))
        if not ok:
            raise LinearSolveError("direct solve returned non-finite step")
        return S * x, True
    x, info = _cg_compat(Hs, bs, rtol, maxiter)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("conjugate gradients diverged to non-finite values")
    return S * x, info == 0
