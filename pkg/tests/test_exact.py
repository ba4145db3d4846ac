"""Closed-form solution oracle."""

import math

import numpy as np
import pytest

from heisflow.core import dilate, horiz_grad, horiz_p_laplacian, koranyi_norm
from heisflow.exact import (
    KoranyiSolution,
    arrival_fn,
    gauge4_fn,
    gauge_fn,
    rho_fn,
    trace_h0,
)

SOL = KoranyiSolution()


def test_eval_unit_sphere_point():
    ev = SOL.eval((1.0, 0.0, 0.0))
    assert ev.u == 0.0
    assert ev.h0 == pytest.approx(3.0, abs=1e-14)
    assert ev.grad0 == pytest.approx((3.0, 0.0), abs=1e-14)
    assert not ev.characteristic


def test_eval_characteristic_flag():
    ev = SOL.eval((0.0, 0.0, 0.25))
    # t = 0 level set touches the axis at x3 = 1/4
    assert ev.u == pytest.approx(0.0, abs=1e-14)
    assert ev.characteristic
    assert math.isnan(ev.h0)


def test_eval_origin_raises():
    with pytest.raises(ValueError):
        SOL.eval((0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        SOL.u((0.0, 0.0, 0.0))


def test_dilation_shifts_arrival_time():
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = tuple(rng.normal(0, 1.0, 3))
        lam = rng.uniform(0.2, 4.0)
        assert SOL.u(dilate(lam, x)) == pytest.approx(
            SOL.u(x) + 3.0 * math.log(lam), abs=1e-12
        )


def test_level_timing_and_radius():
    t = 0.37
    r = SOL.level_radius(t)
    x = (r, 0.0, 0.0)
    assert SOL.rho(x) == pytest.approx(math.exp(4.0 * t / 3.0), rel=1e-14)
    assert SOL.u(x) == pytest.approx(t, abs=1e-14)


def test_characteristic_points_on_level_set():
    for t in (0.0, 0.4, 1.0):
        for c in SOL.characteristic_points(t):
            assert SOL.u(c) == pytest.approx(t, abs=1e-12)
            assert c.x1 == c.x2 == 0.0
    top, bottom = SOL.characteristic_points(0.0)
    assert top == (0.0, 0.0, 0.25)
    assert bottom == (0.0, 0.0, -0.25)


def test_residual_selftest():
    report = SOL.residual_selftest(samples=10000, seed=0)
    assert report["pass"]
    assert report["max_residual"] <= 1e-10
    assert report["samples"] == 10000


def test_trace_h0_matches_gradient_norm():
    u = arrival_fn()
    rng = np.random.default_rng(9)
    for _ in range(30):
        x = tuple(rng.normal(0, 1.0, 3))
        if x[0] ** 2 + x[1] ** 2 < 1e-3 or SOL.rho(x) < 1e-3:
            continue
        assert trace_h0(u, x) == pytest.approx(horiz_grad(u, x).norm, rel=1e-9)


def test_gauge_fn_matches_norm_and_curvature():
    g = gauge_fn()
    x = (1.0, 0.0, 0.0)
    assert g.value(x) == pytest.approx(1.0, abs=1e-14)
    # the gauge level set is the same surface as the arrival-time level set,
    # so the trace curvature agrees: H0 = 3 at (1,0,0), while |grad0 g| = 1
    # (verified symbolically in tools/oracle_symbolic.py)
    assert trace_h0(g, x) == pytest.approx(3.0, rel=1e-10)
    assert horiz_grad(g, x).norm == pytest.approx(1.0, abs=1e-12)

    rng = np.random.default_rng(4)
    for _ in range(20):
        y = tuple(rng.normal(0, 1.0, 3))
        if SOL.rho(y) < 1e-2:
            continue
        assert g.value(y) == pytest.approx(koranyi_norm(y), rel=1e-13)


def test_gauge4_centered_p_harmonicity():
    # tau = d(x,y)^4 satisfies lap_p tau = (3p/4)|grad0 tau|^p / tau, hence
    # u_p built on it is p-harmonic; spot check the shifted builder
    y = (0.3, -0.2, 0.1)
    tau = gauge4_fn(y)
    x = (1.1, 0.4, -0.25)
    p = 1.5
    gn = horiz_grad(tau, x).norm
    assert horiz_p_laplacian(tau, x, p) == pytest.approx(
        0.75 * p * gn ** p / tau.value(x), rel=1e-11
    )


def test_fields_vectorize():
    shape = (4, 5, 6)
    rng = np.random.default_rng(1)
    X = tuple(rng.uniform(0.3, 1.5, size=shape) for _ in range(3))
    for fn in (rho_fn(), arrival_fn(), gauge_fn((0.1, 0.2, -0.3))):
        v = fn.value(X)
        assert v.shape == shape
        p1, p2, p3 = fn.partials(X)
        assert p1.shape == p2.shape == p3.shape == shape
        # agree with pointwise evaluation at a probe index
        idx = (2, 3, 1)
        x = (X[0][idx], X[1][idx], X[2][idx])
        assert v[idx] == pytest.approx(fn.value(x), rel=1e-14)
        assert p2[idx] == pytest.approx(fn.partials(x)[1], rel=1e-14)
