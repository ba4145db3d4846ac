"""Level-set geometry of sampled fields.

Normals (horizontal and full-frame), horizontal mean curvature in trace
form, characteristic-node detection, the inverse-flow residual, the two
comparison functionals, and a randomized minimizing-hull falsifier.

Conventions shared with the band quadrature in :mod:`heisflow.grid`:
surface measure nodes are the support of the edge-ramped band weight,
the characteristic threshold is relative to the band-median full
gradient, and flagged nodes carry zero dsigma_H weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import HPoint, HVector, koranyi_dist
from .errors import (
    ConfigError,
    DegenerateSurfaceError,
    DomainTruncationError,
    EmptyBandError,
)
from .grid import (
    _CHAR_REL,
    _band_fraction,
    _sublevel_weight,
    BandSpec,
    GridField,
    default_band,
    frame_gradient,
    grad0_fd,
    hess_sym_fd,
    hperimeter,
    surface_integral,
)
from .validation import check_int, check_real, check_same_spec

# a node can only be oriented if the full frame gradient is nonzero
_FRAME_FLOOR = 1e-12


class SurfaceNode(NamedTuple):
    point: HPoint
    grad0: HVector
    grad_frame: tuple
    h0: float
    char_flag: bool
    weight: float


@dataclass(frozen=True)
class SurfaceSampleSet:
    """Per-node level-set geometry over a band's support.

    Parallel arrays, one row per contributing node.  ``nu_frame`` is the
    unit normal in the left-invariant frame (X1, X2, X3 components) and
    ``nu0`` the unit horizontal normal; both are NaN on characteristic
    rows, as is ``h0``.  ``weight`` holds the node's dsigma_H quadrature
    weight (zero on characteristic rows), so the weights sum to the band
    perimeter estimate.  ``h0`` is NaN everywhere when the set was built
    by ``normals``.
    """

    t: float
    band: BandSpec
    eta_char: float
    points: np.ndarray
    grad0: np.ndarray
    grad_frame: np.ndarray
    nu0: np.ndarray
    nu_frame: np.ndarray
    h0: np.ndarray
    char_flag: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def nodes(self):
        """Row view as a list of named tuples (convenience, not for bulk math)."""
        return [
            SurfaceNode(
                HPoint(*self.points[i]),
                HVector(*self.grad0[i]),
                tuple(self.grad_frame[i]),
                float(self.h0[i]),
                bool(self.char_flag[i]),
                float(self.weight[i]),
            )
            for i in range(len(self))
        ]

    def pairing(self) -> np.ndarray:
        """<nu0, nu> per node: ratio of horizontal to full gradient norm."""
        gh = np.hypot(self.grad0[:, 0], self.grad0[:, 1])
        gframe = np.hypot(gh, self.grad_frame[:, 2])
        out = np.full(len(self), np.nan)
        ok = ~self.char_flag
        out[ok] = gh[ok] / gframe[ok]
        return out

    def characteristic_fraction(self) -> float:
        """Band-weight fraction lost to flagged nodes.

        Flagged rows carry zero dsigma_H weight, so the fraction is taken
        against the full-gradient measure, which does not vanish there.
        """
        gframe = np.hypot(
            np.hypot(self.grad_frame[:, 0], self.grad_frame[:, 1]),
            self.grad_frame[:, 2],
        )
        tot = float(np.sum(gframe))
        if tot == 0.0:
            return 1.0
        return float(np.sum(gframe[self.char_flag])) / tot

    def to_csv(self, path) -> None:
        cols = "x1,x2,x3,nu1,nu2,nu3,nu01,nu02,H0,char_flag,weight"
        with open(path, "w") as fh:
            fh.write(cols + "\n")
            for i in range(len(self)):
                row = (
                    tuple(self.points[i])
                    + tuple(self.nu_frame[i])
                    + tuple(self.nu0[i])
                    + (self.h0[i], float(self.char_flag[i]), self.weight[i])
                )
                fh.write(",".join("%.12g" % v for v in row) + "\n")


def _sample_band(u: GridField, band: BandSpec, t: float, with_h0: bool) -> SurfaceSampleSet:
    t = check_real(t, "t")
    frac, gh_all, gframe_all = _band_fraction(u, t, band)
    mask = frac > 0.0
    if not mask.any():
        raise EmptyBandError(f"band |u - {t}| < {band.halfwidth:g} contains no nodes")

    a, b, g3 = frame_gradient(u)
    X1, X2, X3 = u.spec.mesh()
    pts = np.stack([X1[mask], X2[mask], X3[mask]], axis=1)
    grad0 = np.stack([a[mask], b[mask]], axis=1)
    grad_frame = np.stack([a[mask], b[mask], g3[mask]], axis=1)
    gh = gh_all[mask]
    gframe = gframe_all[mask]

    eta = _CHAR_REL * float(np.median(gframe))
    char = (gh < eta) | (gframe <= _FRAME_FLOOR)
    if char.all():
        raise DegenerateSurfaceError("every band node is characteristic")

    n = int(mask.sum())
    nu0 = np.full((n, 2), np.nan)
    nu_frame = np.full((n, 3), np.nan)
    ok = ~char
    nu0[ok] = grad0[ok] / gh[ok, None]
    nu_frame[ok] = grad_frame[ok] / gframe[ok, None]

    h0 = np.full(n, np.nan)
    if with_h0:
        h11, h12, h22 = hess_sym_fd(u)
        av, bv = a[mask][ok], b[mask][ok]
        p11, p12, p22 = h11[mask][ok], h12[mask][ok], h22[mask][ok]
        q = av * av + bv * bv
        lap0 = p11 + p22
        lap_inf = av * av * p11 + 2.0 * av * bv * p12 + bv * bv * p22
        h0[ok] = (q * lap0 - lap_inf) / q**1.5

    # same arithmetic as the band quadrature, so the weights sum to the
    # band's perimeter estimate
    weight = np.where(char, 0.0, gh) * frac[mask] * u.spec.node_weights()[mask]
    weight *= u.spec.cell_volume / (2.0 * band.halfwidth)
    return SurfaceSampleSet(
        t=t,
        band=band,
        eta_char=eta,
        points=pts,
        grad0=grad0,
        grad_frame=grad_frame,
        nu0=nu0,
        nu_frame=nu_frame,
        h0=h0,
        char_flag=char,
        weight=weight,
    )


def normals(u: GridField, band: BandSpec, t: float) -> SurfaceSampleSet:
    """Unit frame and horizontal normals over the band, with flags.

    Nodes whose horizontal gradient norm falls below eta_char (1e-3 of
    the band-median full gradient norm) are flagged characteristic and
    carry no normal.
    """
    return _sample_band(u, band, t, with_h0=False)


def mean_curvature_h(u: GridField, band: BandSpec, t: float) -> SurfaceSampleSet:
    """Horizontal mean curvature via the trace form of the symmetrized Hessian.

    H0 = (q tr S - <grad0, S grad0>) / q^{3/2} with q = |grad0|^2, from
    the discrete symmetrized horizontal Hessian; differencing the unit
    normal would hit its removable singularity at characteristic points.
    """
    return _sample_band(u, band, t, with_h0=True)


def himcf_residual(
    u: GridField, band: BandSpec, t: float, *, min_grad0: float = 0.0
) -> tuple:
    """Residual H0 - |grad0 u| over non-flagged band nodes.

    Returns (linf, l2) where l2 is the dsigma_H-weighted root mean
    square.  ``min_grad0`` optionally restricts to nodes with horizontal
    gradient above a floor (used by convergence checks that must stay
    clear of the characteristic tube).
    """
    sset = mean_curvature_h(u, band, t)
    gh = np.hypot(sset.grad0[:, 0], sset.grad0[:, 1])
    ok = ~sset.char_flag
    if min_grad0 > 0.0:
        ok &= gh > min_grad0
    if not ok.any():
        raise DegenerateSurfaceError("no band node clears the gradient floor")
    r = sset.h0[ok] - gh[ok]
    w = sset.weight[ok]
    wsum = float(np.sum(w))
    l2 = float(np.sqrt(np.sum(w * r * r) / wsum)) if wsum > 0.0 else float(np.max(np.abs(r)))
    return float(np.max(np.abs(r))), l2


# ------------------------------------------------------------- functionals


def _check_mask(maskK: GridField) -> np.ndarray:
    m = maskK.data
    if not bool(np.all((m == 0.0) | (m == 1.0))):
        raise ConfigError("maskK", "mask must be 0/1 valued")
    return m


def functional_Ju(u: GridField, v: GridField, maskK: GridField) -> float:
    """Comparison functional: integral over K of |grad0 v| + v |grad0 u|."""
    check_same_spec(u, v, "v")
    check_same_spec(u, maskK, "maskK")
    m = _check_mask(maskK)
    if bool(np.any((v.data != u.data) & (m == 0.0))):
        raise ConfigError("maskK", "{v != u} is not contained in the masked set")
    g1u, g2u = grad0_fd(u)
    g1v, g2v = grad0_fd(v)
    ghu = np.hypot(g1u.data, g2u.data)
    ghv = np.hypot(g1v.data, g2v.data)
    integrand = (ghv + v.data * ghu) * m
    return float(np.sum(integrand * u.spec.node_weights())) * u.spec.cell_volume


def functional_JuSet(
    u: GridField, F_indicator: GridField, t: float, band: BandSpec, maskK: GridField
) -> float:
    """Set version: relative perimeter of {F < t} in K minus the bulk term.

    The bulk term integrates |grad0 u| against the smoothed sublevel
    indicator of F, masked to K.  An empty F contributes no perimeter
    and no bulk, so the value is 0.
    """
    t = check_real(t, "t")
    check_same_spec(u, F_indicator, "F_indicator")
    check_same_spec(u, maskK, "maskK")
    m = _check_mask(maskK)
    try:
        per = surface_integral(F_indicator, t, band, m)
    except EmptyBandError:
        per = 0.0
    chi = _sublevel_weight(F_indicator, t)
    g1u, g2u = grad0_fd(u)
    ghu = np.hypot(g1u.data, g2u.data)
    bulk = float(np.sum(chi * m * ghu * u.spec.node_weights())) * u.spec.cell_volume
    return per - bulk


# -------------------------------------------------------------- hull probe


def _ball_fits_box(spec, center, r) -> bool:
    # conservative: horizontal extent r, vertical extent bounded by
    # r^2/4 plus the twist term r(|c1|+|c2|)/2
    c1, c2, c3 = center
    if r > min(spec.hi[0] - c1, c1 - spec.lo[0], spec.hi[1] - c2, c2 - spec.lo[1]):
        return False
    vert = 0.25 * r * r + 0.5 * r * (abs(c1) + abs(c2))
    return vert <= min(spec.hi[2] - c3, c3 - spec.lo[2])


def union_with_ball(E_field: GridField, t: float, center, r: float) -> GridField:
    """Level-set field of the union of {E < t} with a gauge ball.

    Built as the pointwise min of the two level-set fields, shifted back
    to level t.  A zero radius returns E_field itself (empty ball).
    """
    t = check_real(t, "t")
    r = check_real(r, "r")
    if r < 0.0:
        raise ConfigError("r", "probe radius must be nonnegative")
    if r == 0.0:
        return E_field
    if not _ball_fits_box(E_field.spec, center, r):
        raise DomainTruncationError(
            f"probe ball of radius {r:g} at {tuple(center)} escapes the box"
        )
    X1, X2, X3 = E_field.spec.mesh()
    d = koranyi_dist((X1, X2, X3), tuple(center))
    data = np.minimum(E_field.data - t, d - r) + t
    return GridField(E_field.spec, data)


def _probe_radius_cap(spec, center) -> float:
    # largest gauge ball at this center that stays inside the box: the
    # horizontal faces bound r directly; the vertical ones bound
    # r^2/4 + r B with B = (|c1|+|c2|)/2
    c1, c2, c3 = center
    horiz = min(spec.hi[0] - c1, c1 - spec.lo[0], spec.hi[1] - c2, c2 - spec.lo[1])
    d3 = min(spec.hi[2] - c3, c3 - spec.lo[2])
    B = 0.5 * (abs(c1) + abs(c2))
    vert = 2.0 * (-B + np.sqrt(B * B + d3))
    return min(horiz, float(vert))


def hull_probe(
    E_field: GridField, t: float, probes: int, seed: int, *, extra_probes=()
) -> dict:
    """Randomized falsifier for the minimizing-hull property of {E < t}.

    Each probe enlarges E by a random gauge ball kept inside the box and
    measures the perimeter change.  A negative margin certifies that E
    is not a minimizing hull; nonnegative margins are evidence only (the
    true property quantifies over all enlargements).  Probe 0 is always
    the empty enlargement, whose margin is exactly zero.  Candidate
    enlargements a caller already suspects (a bridging ball between two
    components, say) can be passed as ``extra_probes``, a sequence of
    (center, r) pairs appended after the random draws.

    All perimeters use the band derived from E: the fields agree away
    from the probe ball, so a shared band cancels the quadrature error
    there and the margin measures only the local change.
    """
    t = check_real(t, "t")
    probes = check_int(probes, "probes", minimum=1)
    seed = check_int(seed, "seed", minimum=0)
    spec = E_field.spec
    for face in (
        E_field.data[0],
        E_field.data[-1],
        E_field.data[:, 0],
        E_field.data[:, -1],
        E_field.data[:, :, 0],
        E_field.data[:, :, -1],
    ):
        if np.any(face < t):
            raise DomainTruncationError("probed set reaches the box faces")

    band = default_band(E_field, t)
    per_E = hperimeter(E_field, t, band)
    rng = np.random.default_rng(seed)
    ext = [spec.hi[i] - spec.lo[i] for i in range(3)]
    draws = []
    for k in range(probes):
        if k == 0:
            center = tuple(0.5 * (spec.lo[i] + spec.hi[i]) for i in range(3))
            draws.append((center, 0.0))
        else:
            # multiplicative margins keep the sampler dilation-equivariant
            center = tuple(
                rng.uniform(spec.lo[i] + 0.15 * ext[i], spec.hi[i] - 0.15 * ext[i])
                for i in range(3)
            )
            r = 0.98 * _probe_radius_cap(spec, center) * (0.05 + 0.85 * rng.uniform())
            draws.append((center, r))
    draws.extend((tuple(c), float(r)) for c, r in extra_probes)

    rows = []
    for center, r in draws:
        F = union_with_ball(E_field, t, center, r)
        per_F = hperimeter(F, t, band)
        rows.append(
            {
                "center": [float(c) for c in center],
                "r": float(r),
                "perimeter": per_F,
                "margin": per_F - per_E,
            }
        )
    margins = [row["margin"] for row in rows]
    best = int(np.argmin(margins))
    return {
        "perimeter_E": per_E,
        "probes": rows,
        "min_margin": margins[best],
        "argmin": best,
        "seed": seed,
        "certified_not_hull": margins[best] < 0.0,
    }
