"""Uniform box grids, sampled fields, discrete horizontal operators, and
band quadrature for volume, H-perimeter, and surface integrals.

Axis order: data[i, j, k] indexes (x1, x2, x3).  All reductions go through
numpy sums, which use pairwise accumulation over a fixed tree, so results
are bit-stable across runs and thread counts.

Quadrature strategy: a level set {u = t} is represented by the coarea band
{|u - t| < delta}.  Surface integrals are band averages weighted by the
appropriate gradient norm; volumes use a C1 smoothed indicator.  Both
smoothing widths are resolution-scaled in field units via the local
gradient, so the effective geometric width stays a fixed number of cells.
"""

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import SmoothFn
from .errors import (
    ConfigError,
    DegenerateGradientError,
    DomainTruncationError,
    EmptyBandError,
    NonFiniteSampleError,
    PullbackEscapesBoxError,
)
from .validation import check_positive, check_real, check_triple

# cells-across-the-layer factor shared by the band half-width and the
# volume indicator smoothing
_LAYER_FACTOR = 1.5

# dsigma_H contributions with horizontal norm below eta_char times the
# band-median full-gradient norm are zeroed (characteristic set carries no
# H-perimeter)
_CHAR_REL = 1e-3


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centered grid on a box; n counts nodes per axis."""

    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", check_triple(self.lo, "grid.lo"))
        object.__setattr__(self, "hi", check_triple(self.hi, "grid.hi"))
        object.__setattr__(self, "n", check_triple(self.n, "grid.n", kind=int))
        for a in range(3):
            if self.n[a] < 8:
                raise ConfigError("grid.n", f"need at least 8 nodes per axis, got {self.n[a]}")
            if not self.hi[a] > self.lo[a]:
                raise ConfigError(
                    "grid.hi", f"axis {a}: hi {self.hi[a]} must exceed lo {self.lo[a]}"
                )

    @property
    def h(self) -> tuple:
        return tuple((self.hi[a] - self.lo[a]) / (self.n[a] - 1) for a in range(3))

    @property
    def max_h(self) -> float:
        return max(self.h)

    @property
    def cell_volume(self) -> float:
        h = self.h
        return h[0] * h[1] * h[2]

    def axes(self):
        return tuple(np.linspace(self.lo[a], self.hi[a], self.n[a]) for a in range(3))

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def node_weights(self) -> np.ndarray:
        """Trapezoidal product weights: 1 inside, 1/2 per touched face."""
        ws = []
        for a in range(3):
            w = np.ones(self.n[a])
            w[0] = w[-1] = 0.5
            ws.append(w)
        return ws[0][:, None, None] * ws[1][None, :, None] * ws[2][None, None, :]


@dataclass(frozen=True)
class GridField:
    spec: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if data.shape != tuple(self.spec.n):
            raise ConfigError(
                "data", f"shape {data.shape} does not match grid {tuple(self.spec.n)}"
            )
        bad = ~np.isfinite(data)
        if bad.any():
            idx = tuple(int(v) for v in np.argwhere(bad)[0])
            raise NonFiniteSampleError(f"non-finite value {data[idx]!r} at node {idx}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class BandSpec:
    """Coarea band {|u - center| < halfwidth} in field units."""

    center: float
    halfwidth: float

    def __post_init__(self):
        object.__setattr__(self, "center", check_real(self.center, "band.center"))
        object.__setattr__(self, "halfwidth", check_positive(self.halfwidth, "band.halfwidth"))


def sample(f: SmoothFn, spec: GridSpec) -> GridField:
    """Evaluate f.value at every node; vectorized when f allows it."""
    X = spec.mesh()
    with np.errstate(all="ignore"):
        try:
            data = np.asarray(f.value(X), dtype=float)
            data = np.broadcast_to(data, X[0].shape).copy()
        except (TypeError, ValueError):
            data = np.empty(X[0].shape)
            it = np.nditer(X[0], flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                data[i] = f.value((X[0][i], X[1][i], X[2][i]))
    return GridField(spec, data)


def field_from_callable(fn: Callable, spec: GridSpec) -> GridField:
    """Sample a bare callable of mesh arrays (no SmoothFn wrapper)."""
    X = spec.mesh()
    return GridField(spec, np.broadcast_to(np.asarray(fn(*X), dtype=float), X[0].shape).copy())


# ------------------------------------------------------------ differencing


def euclid_grad(u: GridField):
    """Second-order Euclidean partials (central inside, one-sided at faces)."""
    h = u.spec.h
    return np.gradient(u.data, h[0], h[1], h[2], edge_order=2)


def frame_gradient(u: GridField):
    """Arrays (X1 u, X2 u, X3 u) of frame components of the full gradient."""
    g1, g2, g3 = euclid_grad(u)
    X1c, X2c, _ = u.spec.mesh()
    return g1 - 0.5 * X2c * g3, g2 + 0.5 * X1c * g3, g3


def grad0_fd(u: GridField):
    """Horizontal gradient components as two GridFields."""
    a, b, _ = frame_gradient(u)
    return GridField(u.spec, a), GridField(u.spec, b)


def _second_diff(data: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Compact second derivative; second-order one-sided rows at the faces."""
    out = np.empty_like(data)
    d = np.moveaxis(data, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (d[2:] - 2.0 * d[1:-1] + d[:-2]) / (h * h)
    o[0] = (2.0 * d[0] - 5.0 * d[1] + 4.0 * d[2] - d[3]) / (h * h)
    o[-1] = (2.0 * d[-1] - 5.0 * d[-2] + 4.0 * d[-3] - d[-4]) / (h * h)
    return out


def hess_sym_fd(u: GridField):
    """Arrays (h11, h12, h22) of the symmetrized horizontal Hessian."""
    h = u.spec.h
    g1, g2, g3 = euclid_grad(u)
    f11 = _second_diff(u.data, 0, h[0])
    f22 = _second_diff(u.data, 1, h[1])
    f33 = _second_diff(u.data, 2, h[2])
    f12 = 0.5 * (np.gradient(g1, h[1], axis=1) + np.gradient(g2, h[0], axis=0))
    f13 = 0.5 * (np.gradient(g1, h[2], axis=2) + np.gradient(g3, h[0], axis=0))
    f23 = 0.5 * (np.gradient(g2, h[2], axis=2) + np.gradient(g3, h[1], axis=1))
    X1c, X2c, _ = u.spec.mesh()
    h11 = f11 - X2c * f13 + 0.25 * X2c * X2c * f33
    h22 = f22 + X1c * f23 + 0.25 * X1c * X1c * f33
    h12 = f12 + 0.5 * (X1c * f13 - X2c * f23) - 0.25 * X1c * X2c * f33
    return h11, h12, h22


# ------------------------------------------------------------- band plumbing


def band_mask(u: GridField, t: float, band: BandSpec) -> np.ndarray:
    if abs(band.center - t) > 1e-12 * max(1.0, abs(t)):
        raise ConfigError("band.center", f"band centered at {band.center}, level is {t}")
    return np.abs(u.data - t) < band.halfwidth


def band_touches_faces(u: GridField, t: float, band: BandSpec) -> bool:
    """True when the band (including its edge ramps) reaches any box face."""
    frac, _, _ = _band_fraction(u, t, band)
    m = frac > 0.0
    return bool(
        m[0].any() or m[-1].any()
        or m[:, 0].any() or m[:, -1].any()
        or m[:, :, 0].any() or m[:, :, -1].any()
    )


def default_band(u: GridField, t: float) -> BandSpec:
    """Band half-width 1.5 max(h) times the local gradient scale.

    Two passes: a provisional width from the full-gradient norm of the
    nodes nearest the level seeds the band, then the half-width is set from
    the band-median horizontal norm, which is the weight the perimeter
    quadrature actually uses.
    """
    t = check_real(t, "t")
    a, b, g3 = frame_gradient(u)
    # hypot keeps the norms exact when a component vanishes identically
    gh = np.hypot(a, b)
    gframe = np.hypot(gh, g3)
    dist = np.abs(u.data - t).ravel()
    k = max(1000, dist.size // 100)
    k = min(k, dist.size)
    near = np.argpartition(dist, k - 1)[:k]
    s0 = float(np.median(gh.ravel()[near]))
    if s0 <= _CHAR_REL * float(np.median(gframe.ravel()[near])):
        s0 = float(np.median(gframe.ravel()[near]))
    if s0 <= 0.0:
        raise DegenerateGradientError(f"gradient vanishes around level {t}")
    band1 = np.abs(u.data - t) < _LAYER_FACTOR * u.spec.max_h * s0
    if not band1.any():
        raise EmptyBandError(f"no nodes within provisional band around level {t}")
    s1 = float(np.median(gh[band1]))
    if s1 <= _CHAR_REL * float(np.median(gframe[band1])):
        s1 = float(np.median(gframe[band1]))
    return BandSpec(t, _LAYER_FACTOR * u.spec.max_h * s1)


def _band_fraction(u: GridField, t: float, band: BandSpec):
    """Node weights for the band indicator with one-cell edge ramps.

    A node within the band counts fully; across the band edge the weight
    falls linearly over one cell's worth of field variation (max h times
    the local gradient norm).  The ramp is symmetric about the edge, so the
    weight function still integrates to exactly 2 delta in the level
    variable and the estimator keeps the plain band-average meaning while
    losing the node-popping jitter of a hard cutoff.
    """
    if abs(band.center - t) > 1e-12 * max(1.0, abs(t)):
        raise ConfigError("band.center", f"band centered at {band.center}, level is {t}")
    a, b, g3 = frame_gradient(u)
    gh = np.hypot(a, b)
    gframe = np.hypot(gh, g3)
    s = np.abs(u.data - t)
    # ramp width from the horizontal norm: it scales like 1/lambda under
    # dilations (the full frame norm does not), which keeps every band
    # quadrature exactly dilation-equivariant; the characteristic tube
    # falls back to a sliver of the full norm.  Capped at 2 delta so the
    # weight profile always integrates to exactly 2 delta.
    w = u.spec.max_h * np.maximum(gh, _CHAR_REL * gframe)
    w = np.minimum(w, 2.0 * band.halfwidth)
    hard = (s < band.halfwidth).astype(float)
    frac = np.where(
        w > 0.0,
        np.clip((band.halfwidth + 0.5 * w - s) / np.where(w > 0.0, w, 1.0), 0.0, 1.0),
        hard,
    )
    return frac, gh, gframe


def _band_integral(u: GridField, t: float, band: BandSpec, phi_vals, euclidean: bool) -> float:
    frac, gh_all, gframe_all = _band_fraction(u, t, band)
    mask = frac > 0.0
    if not mask.any():
        raise EmptyBandError(f"band |u - {t}| < {band.halfwidth:g} contains no nodes")
    frac = frac[mask]
    gh = gh_all[mask]
    gframe = gframe_all[mask]
    eta = _CHAR_REL * float(np.median(gframe))
    if euclidean:
        if np.any(gframe <= 1e-12):
            raise DegenerateGradientError("full gradient vanishes inside the band")
        weight = gframe
    else:
        # characteristic nodes carry no dsigma_H measure
        weight = np.where(gh >= eta, gh, 0.0)
    phi = np.broadcast_to(np.asarray(phi_vals, dtype=float), u.data.shape)[mask]
    active = weight > 0.0
    if not np.isfinite(phi[active]).all():
        raise NonFiniteSampleError("phi is non-finite on contributing band nodes")
    contrib = np.zeros(weight.shape)
    contrib[active] = phi[active] * weight[active] * frac[active]
    w = u.spec.node_weights()[mask]
    return float(np.sum(contrib * w)) * u.spec.cell_volume / (2.0 * band.halfwidth)


def hperimeter(u: GridField, t: float, band: Optional[BandSpec] = None) -> float:
    """Coarea band average of the horizontal perimeter of {u < t}.

    This is the perimeter relative to the open box: a level set leaving
    through the faces contributes its inside-the-box area and no error is
    raised (planar interfaces are legitimate).  Closed-surface callers
    should consult band_touches_faces first.
    """
    if band is None:
        band = default_band(u, t)
    return _band_integral(u, t, band, 1.0, euclidean=False)


def surface_integral(u: GridField, t: float, band: BandSpec, phi) -> float:
    """Band quadrature of int phi dsigma_H over {u = t}."""
    phi_vals = phi.data if isinstance(phi, GridField) else phi
    return _band_integral(u, t, band, phi_vals, euclidean=False)


def surface_integral_euclidean(u: GridField, t: float, band: BandSpec, phi) -> float:
    """Band quadrature of int phi dH^2 (full-gradient coarea weight)."""
    phi_vals = phi.data if isinstance(phi, GridField) else phi
    return _band_integral(u, t, band, phi_vals, euclidean=True)


def _sublevel_weight(u: GridField, t: float) -> np.ndarray:
    """Smoothed indicator of {u < t} as a node array (no face check)."""
    data = u.data
    a, b, g3 = frame_gradient(u)
    gh = np.hypot(a, b)
    gframe = np.hypot(gh, g3)
    eps = _LAYER_FACTOR * u.spec.max_h * np.maximum(gh, _CHAR_REL * gframe)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(eps > 0.0, (t - data) / np.where(eps > 0.0, eps, 1.0), np.sign(t - data) * 2.0)
    s = np.clip(s, -1.0, 1.0)
    return 0.25 * (2.0 + 3.0 * s - s ** 3)


def volume(u: GridField, t: float) -> float:
    """Smoothed-indicator volume of the sublevel set {u < t}."""
    t = check_real(t, "t")
    data = u.data
    for face in (data[0], data[-1], data[:, 0], data[:, -1], data[:, :, 0], data[:, :, -1]):
        if np.any(face < t):
            raise DomainTruncationError(
                f"sublevel set of level {t} reaches the box faces (face min {face.min():g})"
            )
    chi = _sublevel_weight(u, t)
    return float(np.sum(chi * u.spec.node_weights())) * u.spec.cell_volume


# ----------------------------------------------------------- interpolation


def interp_field(u: GridField, points: np.ndarray, *, context: str = "points") -> np.ndarray:
    """Trilinear interpolation at an (m, 3) array of points.

    Points outside the box raise PullbackEscapesBoxError naming the caller
    context, since this is how rescaling detects an escaping pullback.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    lo, hi = np.asarray(u.spec.lo), np.asarray(u.spec.hi)
    pad = 1e-9 * (hi - lo)
    inside = np.all(pts >= lo - pad, axis=1) & np.all(pts <= hi + pad, axis=1)
    if not inside.all():
        first = pts[np.argmin(inside)]
        raise PullbackEscapesBoxError(
            f"{context}: point {tuple(first)} lies outside the grid box"
        )
    rgi = RegularGridInterpolator(u.spec.axes(), u.data, method="linear", bounds_error=False, fill_value=None)
    return rgi(np.clip(pts, lo, hi))


# -------------------------------------------------------------------- dumps


def to_vtk(path, fields: dict):
    """Legacy-VTK structured-points ASCII dump of one or more fields."""
    first = next(iter(fields.values()))
    for f in fields.values():
        if f.spec != first.spec:
            raise ConfigError("fields", "all fields in one VTK dump must share a grid")
    spec = first.spec
    lines = [
        "# vtk DataFile Version 3.0",
        "heisflow field dump",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS {} {} {}".format(*spec.n),
        "ORIGIN {!r} {!r} {!r}".format(*spec.lo),
        "SPACING {!r} {!r} {!r}".format(*spec.h),
        f"POINT_DATA {spec.n[0] * spec.n[1] * spec.n[2]}",
    ]
    for name, f in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        flat = f.data.ravel(order="F")
        for i in range(0, flat.size, 6):
            lines.append(" ".join(repr(float(v)) for v in flat[i : i + 6]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def from_vtk(path) -> dict:
    """Read back a to_vtk dump; returns {name: GridField}."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    n = origin = spacing = None
    i = 0
    while i < len(tokens):
        line = tokens[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "DIMENSIONS":
            n = tuple(int(v) for v in line[1:4])
        elif line[0] == "ORIGIN":
            origin = tuple(float(v) for v in line[1:4])
        elif line[0] == "SPACING":
            spacing = tuple(float(v) for v in line[1:4])
        elif line[0] == "POINT_DATA":
            i += 1
            break
        i += 1
    if n is None or origin is None or spacing is None:
        raise ConfigError("path", f"{path} is not a structured-points dump")
    hi = tuple(origin[a] + spacing[a] * (n[a] - 1) for a in range(3))
    spec = GridSpec(origin, hi, n)
    total = n[0] * n[1] * n[2]
    out = {}
    while i < len(tokens):
        line = tokens[i].split()
        if line and line[0] == "SCALARS":
            name = line[1]
            i += 2  # skip LOOKUP_TABLE
            vals = []
            while len(vals) < total:
                vals.extend(float(v) for v in tokens[i].split())
                i += 1
            data = np.array(vals).reshape(n, order="F")
            out[name] = GridField(spec, data)
        else:
            i += 1
    return out


def to_csv(path, u: GridField):
    """Flat node table (index, x1, x2, x3, value) for external plotting."""
    X1c, X2c, X3c = u.spec.mesh()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "x1", "x2", "x3", "value"])
        flat = u.data.ravel()
        for idx, (c1, c2, c3, v) in enumerate(
            zip(X1c.ravel(), X2c.ravel(), X3c.ravel(), flat)
        ):
            wr.writerow([idx, "%.12g" % c1, "%.12g" % c2, "%.12g" % c3, "%.12g" % v])
