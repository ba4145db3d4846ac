"""Grid sampling, discrete horizontal operators, and band quadrature."""

import csv
import math

import numpy as np
import pytest

from heisflow.core import SmoothFn, dilate_pullback
from heisflow.errors import (
    ConfigError,
    DomainTruncationError,
    EmptyBandError,
    NonFiniteSampleError,
    PullbackEscapesBoxError,
)
from heisflow.exact import arrival_fn, gauge_fn, rho_fn
from heisflow.grid import (
    BandSpec,
    GridField,
    GridSpec,
    band_touches_faces,
    default_band,
    frame_gradient,
    from_vtk,
    grad0_fd,
    hess_sym_fd,
    hperimeter,
    interp_field,
    sample,
    surface_integral,
    surface_integral_euclidean,
    to_csv,
    to_vtk,
    volume,
)

# frozen before the build in tools/oracle_gauge_sphere.py: unit-ball volume
# pi^2/8 (closed-form cylindrical integral, Monte Carlo confirmed), sphere
# H-perimeter pi^(3/2) Gamma(3/4) / (2 Gamma(5/4)) (256^3 quadrature with
# Richardson extrapolation agrees to 4 digits)
V_K = math.pi ** 2 / 8.0
P_K = 3.7640685594156866

SPHERE_SPEC = GridSpec((-1.3, -1.3, -0.42), (1.3, 1.3, 0.42), (64, 64, 64))


@pytest.fixture(scope="module")
def gauge64():
    return sample(gauge_fn(), SPHERE_SPEC)


def plane_field(n=64):
    spec = GridSpec((-1, -1, -1), (1, 1, 1), (n, n, n))
    zero = lambda x: 0.0 * x[0]
    return sample(SmoothFn(lambda x: x[0], lambda x: (1.0 + zero(x), zero(x), zero(x))), spec)


# ------------------------------------------------------------------- grids


def test_gridspec_validation():
    with pytest.raises(ConfigError, match="grid.n"):
        GridSpec((-1, -1, -1), (1, 1, 1), (2, 16, 16))
    with pytest.raises(ConfigError, match="grid.hi"):
        GridSpec((-1, -1, 1), (1, 1, -1), (16, 16, 16))
    with pytest.raises(ConfigError, match=r"grid.lo\[1\]"):
        GridSpec((-1, math.nan, -1), (1, 1, 1), (16, 16, 16))
    spec = GridSpec((0, 0, 0), (1, 2, 3), (11, 21, 31))
    assert spec.h == pytest.approx((0.1, 0.1, 0.1))


def test_node_weights_integrate_box():
    spec = GridSpec((0, 0, 0), (1, 2, 3), (9, 13, 17))
    total = float(np.sum(spec.node_weights())) * spec.cell_volume
    assert total == pytest.approx(6.0, rel=1e-13)


def test_sample_examples():
    spec = GridSpec((-2, -2, -2), (2, 2, 2), (9, 9, 9))
    zero = SmoothFn(lambda x: 0.0 * x[0], lambda x: (0.0 * x[0],) * 3)
    assert not sample(zero, spec).data.any()

    rho = sample(rho_fn(), spec)
    assert rho.data[-1, -1, -1] == pytest.approx(128.0)  # rho(2,2,2)

    x1 = sample(SmoothFn(lambda x: x[0], lambda x: (1.0, 0.0, 0.0)), spec)
    np.testing.assert_allclose(x1.data, spec.mesh()[0])


def test_sample_scalar_fallback():
    # a value callable that rejects arrays still samples nodewise
    spec = GridSpec((0, 0, 0), (1, 1, 1), (8, 8, 8))
    f = SmoothFn(lambda x: math.sin(x[0]), lambda x: (math.cos(x[0]), 0.0, 0.0))
    u = sample(f, spec)
    assert u.data[3, 0, 0] == pytest.approx(math.sin(spec.axes()[0][3]))


def test_sample_nonfinite_reports_node():
    # arrival time is -inf at the origin, which an odd symmetric grid hits
    spec = GridSpec((-1, -1, -1), (1, 1, 1), (9, 9, 9))
    with pytest.raises(NonFiniteSampleError, match=r"\(4, 4, 4\)"):
        sample(arrival_fn(), spec)


def test_field_shape_mismatch():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (8, 8, 8))
    with pytest.raises(ConfigError, match="shape"):
        GridField(spec, np.zeros((8, 8, 7)))


# --------------------------------------------------------------- operators


def test_grad0_on_x3_is_exact():
    spec = GridSpec((-2, -2, -2), (2, 2, 2), (16, 16, 16))
    u = sample(SmoothFn(lambda x: x[2], lambda x: (0.0, 0.0, 1.0)), spec)
    a, b = grad0_fd(u)
    X1c, X2c, _ = spec.mesh()
    np.testing.assert_allclose(a.data, -0.5 * X2c, atol=1e-12)
    np.testing.assert_allclose(b.data, 0.5 * X1c, atol=1e-12)


def test_grad0_constant_field():
    spec = GridSpec((-1, -1, -1), (1, 1, 1), (12, 12, 12))
    u = GridField(spec, np.full((12, 12, 12), 3.7))
    a, b = grad0_fd(u)
    assert not a.data.any() and not b.data.any()


def test_grad0_refinement_ratio():
    # O(h^2) interior convergence on the quartic rho
    errs = {}
    for n in (32, 64):
        spec = GridSpec((-2, -2, -2), (2, 2, 2), (n, n, n))
        u = sample(rho_fn(), spec)
        X1c, X2c, X3c = spec.mesh()
        exact = 4.0 * X1c * (X1c ** 2 + X2c ** 2) - 16.0 * X2c * X3c
        got = grad0_fd(u)[0].data
        errs[n] = np.abs(got - exact)[1:-1, 1:-1, 1:-1].max()
    assert 3.5 <= errs[32] / errs[64] <= 4.5


def test_grad0_rho_near_unit_point():
    spec = GridSpec((-2, -2, -2), (2, 2, 2), (64, 64, 64))
    u = sample(rho_fn(), spec)
    ax = spec.axes()
    i = int(np.argmin(np.abs(ax[0] - 1.0)))
    j = k = int(np.argmin(np.abs(ax[1])))
    a, _ = grad0_fd(u)
    exact = 4.0 * ax[0][i] * (ax[0][i] ** 2 + ax[1][j] ** 2) - 16.0 * ax[1][j] * ax[2][k]
    assert a.data[i, j, k] == pytest.approx(exact, abs=0.02)


def test_hess_sym_fd_on_rho():
    spec = GridSpec((-1.5, -1.5, -0.6), (1.5, 1.5, 0.6), (48, 48, 48))
    u = sample(rho_fn(), spec)
    h11, h12, h22 = hess_sym_fd(u)
    X1c, X2c, _ = spec.mesh()
    P = X1c ** 2 + X2c ** 2
    inner = (slice(2, -2),) * 3
    assert np.abs((h11 - 12.0 * P))[inner].max() <= 0.02
    assert np.abs((h22 - 12.0 * P))[inner].max() <= 0.02
    assert np.abs(h12)[inner].max() <= 0.02


# ------------------------------------------------------------------ volume


def test_volume_korangi_ball(gauge64):
    v = volume(gauge64, 1.0)
    assert v == pytest.approx(V_K, rel=0.01)


def test_volume_empty():
    spec = GridSpec((0, 0, 0), (1, 1, 1), (8, 8, 8))
    u = GridField(spec, np.full((8, 8, 8), 5.0))
    assert volume(u, 1.0) == 0.0


def test_volume_truncation_error(gauge64):
    with pytest.raises(DomainTruncationError):
        volume(gauge64, 1.35)  # sublevel set reaches the x3 faces


def test_volume_dilation_equivariance(gauge64):
    # anisotropically dilated box reproduces lambda^4 exactly: every scale
    # in the quadrature is built from the homogeneous horizontal norm
    v = volume(gauge64, 1.0)
    for lam in (0.5, 1.5):
        spec = GridSpec(
            (-1.3 * lam, -1.3 * lam, -0.42 * lam * lam),
            (1.3 * lam, 1.3 * lam, 0.42 * lam * lam),
            (64, 64, 64),
        )
        ul = sample(dilate_pullback(gauge_fn(), 1.0 / lam), spec)
        assert volume(ul, 1.0) / v == pytest.approx(lam ** 4, rel=1e-12)


# --------------------------------------------------------------- perimeter


def test_hperimeter_plane():
    u = plane_field()
    band = default_band(u, 0.0)
    assert hperimeter(u, 0.0, band) == pytest.approx(4.0, abs=1e-12)
    # and under an explicit wider band
    h = u.spec.h[0]
    assert hperimeter(u, 0.0, BandSpec(0.0, 2 * h)) == pytest.approx(4.0, abs=1e-12)


def test_hperimeter_korangi_sphere(gauge64):
    P = hperimeter(gauge64, 1.0, default_band(gauge64, 1.0))
    assert P == pytest.approx(P_K, rel=0.01)


def test_hperimeter_delta_doubling(gauge64):
    band = default_band(gauge64, 1.0)
    P1 = hperimeter(gauge64, 1.0, band)
    P2 = hperimeter(gauge64, 1.0, BandSpec(1.0, 2.0 * band.halfwidth))
    assert abs(P2 - P1) / P1 < 0.01


def test_hperimeter_dilation_equivariance(gauge64):
    P = hperimeter(gauge64, 1.0, default_band(gauge64, 1.0))
    for lam in (0.5, 1.5):
        spec = GridSpec(
            (-1.3 * lam, -1.3 * lam, -0.42 * lam * lam),
            (1.3 * lam, 1.3 * lam, 0.42 * lam * lam),
            (64, 64, 64),
        )
        ul = sample(dilate_pullback(gauge_fn(), 1.0 / lam), spec)
        Pl = hperimeter(ul, 1.0, default_band(ul, 1.0))
        assert Pl / P == pytest.approx(lam ** 3, rel=1e-12)


def test_empty_band_raises(gauge64):
    with pytest.raises(EmptyBandError):
        hperimeter(gauge64, 1.0, BandSpec(1.0, 1e-9))


def test_band_center_mismatch(gauge64):
    with pytest.raises(ConfigError, match="band.center"):
        hperimeter(gauge64, 1.0, BandSpec(0.9, 0.05))


def test_band_touches_faces(gauge64):
    u = plane_field()
    assert band_touches_faces(u, 0.0, default_band(u, 0.0))
    assert not band_touches_faces(gauge64, 1.0, default_band(gauge64, 1.0))


def test_coarea_consistency(gauge64):
    # sum of band perimeters over a t-partition vs the bulk integral of the
    # horizontal gradient norm between the extreme levels
    ts = np.linspace(0.55, 1.15, 41)
    dt = ts[1] - ts[0]
    total = sum(hperimeter(gauge64, float(t), default_band(gauge64, float(t))) * dt for t in ts)
    a, b, _ = frame_gradient(gauge64)
    gh = np.sqrt(a * a + b * b)
    m = (gauge64.data > ts[0] - dt / 2) & (gauge64.data < ts[-1] + dt / 2)
    bulk = float(np.sum((gh * gauge64.spec.node_weights())[m])) * gauge64.spec.cell_volume
    assert total == pytest.approx(bulk, rel=0.02)


# --------------------------------------------------------- surface integrals


def test_surface_integral_linearity(gauge64):
    band = default_band(gauge64, 1.0)
    P = hperimeter(gauge64, 1.0, band)
    assert surface_integral(gauge64, 1.0, band, 1.0) == pytest.approx(P, rel=1e-13)
    assert surface_integral(gauge64, 1.0, band, 2.5) == pytest.approx(2.5 * P, rel=1e-13)


def test_surface_integral_euclidean_plane():
    u = plane_field()
    band = default_band(u, 0.0)
    assert surface_integral_euclidean(u, 0.0, band, 1.0) == pytest.approx(4.0, abs=1e-12)


def test_euclidean_with_nu_angle_recovers_hperimeter(gauge64):
    # <nu0, nu> dH^2 = dsigma_H
    band = default_band(gauge64, 1.0)
    a, b, g3 = frame_gradient(gauge64)
    gh = np.sqrt(a * a + b * b)
    gf = np.sqrt(gh * gh + g3 * g3)
    phi = np.where(gf > 0, gh / np.where(gf > 0, gf, 1.0), 0.0)
    got = surface_integral_euclidean(gauge64, 1.0, band, phi)
    assert got == pytest.approx(hperimeter(gauge64, 1.0, band), rel=1e-12)


def test_divergence_identity(gauge64):
    # flux of the dilation generator y' = (x1, x2, 2 x3): div y' = 4, so the
    # closed-surface flux equals 4 |E|
    band = default_band(gauge64, 1.0)
    a, b, g3 = frame_gradient(gauge64)
    gf = np.sqrt(a * a + b * b + g3 * g3)
    X1c, X2c, X3c = gauge64.spec.mesh()
    flux = X1c * a + X2c * b + 2.0 * X3c * g3
    phi = np.where(gf > 0, flux / np.where(gf > 0, gf, 1.0), 0.0)
    got = surface_integral_euclidean(gauge64, 1.0, band, phi)
    assert got == pytest.approx(4.0 * volume(gauge64, 1.0), rel=0.01)


def test_nonfinite_phi_rejected(gauge64):
    band = default_band(gauge64, 1.0)
    phi = np.full(gauge64.data.shape, np.nan)
    with pytest.raises(NonFiniteSampleError):
        surface_integral(gauge64, 1.0, band, phi)


# ------------------------------------------------------------------- io


def test_interp_field_and_escape(gauge64):
    pts = np.array([[0.9, 0.1, 0.05], [1.02, -0.3, -0.2]])
    vals = interp_field(gauge64, pts)
    for p, v in zip(pts, vals):
        assert v == pytest.approx(gauge_fn().value(p), abs=5e-4)
    with pytest.raises(PullbackEscapesBoxError, match="rescale"):
        interp_field(gauge64, np.array([[2.0, 0.0, 0.0]]), context="rescale")


def test_vtk_roundtrip(tmp_path, gauge64):
    path = tmp_path / "fields.vtk"
    small_spec = GridSpec((-1, -1, -1), (1, 1, 1), (9, 8, 10))
    u = sample(rho_fn(), small_spec)
    w = GridField(small_spec, np.arange(9 * 8 * 10, dtype=float).reshape(9, 8, 10))
    to_vtk(path, {"u": u, "w": w})
    back = from_vtk(path)
    assert set(back) == {"u", "w"}
    np.testing.assert_array_equal(back["u"].data, u.data)
    np.testing.assert_array_equal(back["w"].data, w.data)
    assert back["u"].spec == small_spec


def test_csv_dump(tmp_path):
    spec = GridSpec((0, 0, 0), (1, 1, 1), (8, 8, 8))
    u = sample(rho_fn(), spec)
    path = tmp_path / "field.csv"
    to_csv(path, u)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "x1", "x2", "x3", "value"]
    assert len(rows) == 1 + 8 ** 3
    idx, x1, x2, x3, val = rows[1 + 7]  # node (0, 0, 7)
    assert float(x3) == pytest.approx(1.0)
    assert float(val) == pytest.approx(rho_fn().value((0.0, 0.0, 1.0)))
