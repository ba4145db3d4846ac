"""Flow driver and report checks: growth, rescaling, inclusion, identities."""

import math

import numpy as np
import pytest

from heisflow.errors import (
    ConfigError,
    DomainTruncationError,
    NonpositiveCurvatureError,
)
from heisflow.exact import arrival_fn
from heisflow.flow import (
    CSV_HEADER,
    FlowReport,
    FlowRow,
    HimcfSolver,
    IdentityReport,
    LevelSetSolution,
    P_SCHEDULE,
    T_WINDOW,
    bubble_quantities,
    heintze_karcher_check,
    himcf_solve,
    inclusion_check,
    minkowski_check,
    perimeter_growth,
    rescaled_flow,
)
from heisflow.grid import GridField, GridSpec, hperimeter, sample, volume

ORIGIN = (0.0, 0.0, 0.0)
BOX_LO, BOX_HI = (-1.35, -1.35, -0.55), (1.35, 1.35, 0.55)
V_K = math.pi ** 2 / 8
P_K = 3.7640685594156866  # tools/oracle_gauge_sphere.py
HK_L = math.pi ** 2 / 6   # tools/oracle_gauge_sphere.py

T_GRID = np.linspace(0.05, 0.5, 10)


def gauge_data(spec, center=ORIGIN):
    X = spec.mesh()
    q = (X[0] - center[0]) ** 2 + (X[1] - center[1]) ** 2
    return (q * q + 16.0 * (X[2] - center[2]) ** 2) ** 0.25


@pytest.fixture(scope="module")
def exact48():
    spec = GridSpec(BOX_LO, BOX_HI, (48, 48, 48))
    return sample(arrival_fn(), spec)


@pytest.fixture(scope="module")
def exact32():
    spec = GridSpec(BOX_LO, BOX_HI, (32, 32, 32))
    return sample(arrival_fn(), spec)


@pytest.fixture(scope="module")
def ball32(exact32):
    sol = himcf_solve((ORIGIN, 1.0), exact32.spec)
    return sol


# ----------------------------------------------------------- pure structure


def test_schedule_constants():
    assert P_SCHEDULE == (2.0, 1.5, 1.2, 1.1, 1.05)
    assert all(b < a for a, b in zip(P_SCHEDULE, P_SCHEDULE[1:]))
    assert all(1.0 < p < 3.0 for p in P_SCHEDULE)
    assert T_WINDOW == (0.05, 0.5)


def test_bubble_quantities_closed_forms():
    b = bubble_quantities(1.0)
    assert b["h0"] == 2.0
    assert b["hperimeter"] == pytest.approx(math.pi ** 2 / 2, rel=1e-15)
    assert b["volume"] == pytest.approx(3 * math.pi ** 2 / 16, rel=1e-15)
    assert b["hk_integral"] == pytest.approx(math.pi ** 2 / 4, rel=1e-15)
    # CMC arithmetic: 3 P_H = 4 H0 |B| and the curvature-reciprocal
    # integral equals (R/2) P_H, the equality case of the inequality
    assert 3 * b["hperimeter"] == pytest.approx(4 * b["h0"] * b["volume"], rel=1e-15)
    assert b["hk_integral"] == pytest.approx((4.0 / 3.0) * b["volume"], rel=1e-15)

    b2 = bubble_quantities(2.0)
    assert b2["hperimeter"] == pytest.approx(8 * b["hperimeter"], rel=1e-15)
    assert b2["volume"] == pytest.approx(16 * b["volume"], rel=1e-15)
    assert b2["h0"] == 1.0

    with pytest.raises(ConfigError):
        bubble_quantities(0.0)


def test_flow_report_csv_roundtrip(tmp_path):
    rows = [
        FlowRow(0.1, 1.25, 3.9, math.log(3.9), 0.02, 0.0),
        (0.2, 1.43, 4.31, math.log(4.31), 0.018, 0.001),
    ]
    rep = FlowReport(rows)
    assert len(rep) == 2
    assert [r.t for r in rep] == [0.1, 0.2]
    assert rep.column("hperimeter") == pytest.approx([3.9, 4.31])

    path = tmp_path / "flow.csv"
    rep.to_csv(path)
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == CSV_HEADER
    assert "\r" not in text
    vals = [float(v) for v in lines[1].split(",")]
    assert vals == pytest.approx(list(rep.rows[0].astuple()))


def test_flow_report_validation():
    good = FlowRow(0.1, 1.0, 2.0, math.log(2.0), 0.0, 0.0)
    with pytest.raises(ConfigError):
        FlowReport([good, FlowRow(0.1, 1.0, 2.0, 0.7, 0.0, 0.0)])
    with pytest.raises(ConfigError):
        FlowReport([good, FlowRow(0.2, math.nan, 2.0, 0.7, 0.0, 0.0)])


def test_identity_report_protocol():
    mk = IdentityReport("minkowski", 12.0, 11.8, "rel_err", True, 0.01, False,
                        extras={"flux_lhs": 4.9})
    lhs, rhs, third = mk
    assert (lhs, rhs) == (12.0, 11.8)
    assert third == pytest.approx(abs(12.0 - 11.8) / 12.0)
    payload = mk.to_json()
    assert set(payload) == {"name", "lhs", "rhs", "rel_err", "pass"}
    assert payload["pass"] is True
    assert mk.extras["flux_lhs"] == 4.9

    hk = IdentityReport("heintze-karcher", 1.60, 1.64, "margin", False, 0.2, True)
    _, _, margin = hk
    assert margin == pytest.approx(-0.04)
    # inequality checks report a signed relative error
    assert hk.rel_err == pytest.approx(-0.04 / 1.64)
    assert hk.unreliable


def test_levelset_solution_validation():
    spec = GridSpec(BOX_LO, BOX_HI, (12, 12, 12))
    with pytest.raises(ConfigError):
        LevelSetSolution(np.zeros(spec.n), [], [], "raw array")

    level = GridField(spec, gauge_data(spec) - 1.0)
    wrong = GridField(spec, np.full(spec.n, -0.1))
    with pytest.raises(ConfigError):
        LevelSetSolution(wrong, [1.5], [0.1], "bad", e0_level=level)

    sol = LevelSetSolution.from_field(GridField(spec, gauge_data(spec)))
    assert sol.converged and sol.p_schedule == [] and sol.e0_level is None
    assert "closed-form" in repr(sol)


# -------------------------------------------------------------- growth law


def test_perimeter_growth_exact(exact48):
    # measured at 48^3: slope 0.99447, r2 0.999434
    slope, r2, rep = perimeter_growth(LevelSetSolution.from_field(exact48), T_GRID)
    assert slope == pytest.approx(1.0, abs=0.05)
    assert r2 >= 0.999
    assert not rep.truncated
    assert rep.column("t") == pytest.approx(T_GRID)
    assert np.all(np.diff(rep.column("volume")) > 0)
    assert np.all(np.diff(rep.column("hperimeter")) > 0)


def test_perimeter_growth_accepts_bare_field(exact32):
    slope, _, _ = perimeter_growth(exact32, [0.1, 0.2, 0.3])
    assert slope == pytest.approx(1.0, abs=0.1)


def test_perimeter_growth_validation(exact32):
    sol = LevelSetSolution.from_field(exact32)
    with pytest.raises(ConfigError):
        perimeter_growth(sol, [0.2])
    with pytest.raises(ConfigError):
        perimeter_growth(sol, [0.3, 0.2])
    with pytest.raises(ConfigError):
        perimeter_growth(42, [0.1, 0.2])


def test_perimeter_growth_truncates_at_faces(exact32):
    sol = LevelSetSolution.from_field(exact32)
    # level radius e^{t/3} approaches the face gauge distance 1.35
    _, _, rep = perimeter_growth(sol, [0.3, 0.5, 0.7, 0.9, 1.1])
    assert rep.truncated
    assert len(rep) == 2
    with pytest.raises(DomainTruncationError):
        perimeter_growth(sol, [1.0, 1.1, 1.2])


# ------------------------------------------------------------ rescaled flow


def test_rescaled_flow_exact(exact48):
    # measured at 48^3: max_drift 6.8e-3, volume spread 2.6e-3
    rep = rescaled_flow(LevelSetSolution.from_field(exact48), T_GRID)
    assert not rep.truncated
    assert rep.max_drift <= 0.02
    assert rep.reference_perimeter == pytest.approx(P_K, rel=0.02)
    vols = rep.column("volume")
    assert np.max(np.abs(vols - vols[0])) / vols[0] <= 0.01
    assert vols[0] == pytest.approx(V_K, rel=0.02)


def test_rescaled_flow_domain(exact32):
    sol = LevelSetSolution.from_field(exact32)
    with pytest.raises(ConfigError):
        rescaled_flow(sol, [-0.1, 0.1])
    # far levels shrink the pullback grid until the band meets its faces
    with pytest.raises(DomainTruncationError):
        rescaled_flow(sol, [1.1, 1.2])


# ------------------------------------------------------------- identities


def test_minkowski_exact_sphere(exact48):
    # measured at 48^3: rel_err 6.5e-4, flux rel 1.0e-3
    mk = minkowski_check(exact48, 0.0)
    assert mk.passed and not mk.unreliable
    assert mk.rel_err <= 0.02
    assert mk.char_fraction < 0.05
    assert mk.lhs == pytest.approx(3 * P_K, rel=0.02)
    assert mk.extras["flux_rel_err"] <= 0.01
    assert mk.extras["flux_rhs"] == pytest.approx(4 * volume(exact48, 0.0), rel=1e-12)
    assert mk.to_json()["name"] == "minkowski"


def test_minkowski_validation():
    with pytest.raises(ConfigError):
        minkowski_check(np.zeros((8, 8, 8)), 0.0)


def test_heintze_karcher_exact_sphere(exact48):
    # measured at 48^3: lhs 1.65529 (HK_L + 0.63%), margin +6.0e-4
    hk = heintze_karcher_check(exact48, 0.0)
    assert hk.passed and not hk.unreliable
    assert abs(hk.lhs - HK_L) / HK_L <= 0.02
    assert hk.rhs == pytest.approx((4.0 / 3.0) * volume(exact48, 0.0), rel=1e-12)
    assert hk.margin >= -0.01 * hk.rhs

    # larger sphere, same inequality; measured margin -9.5e-3 vs bound -2.3e-2
    hk2 = heintze_karcher_check(exact48, 0.25)
    assert hk2.passed
    assert hk2.margin >= -0.01 * hk2.rhs


def test_heintze_karcher_nonpositive_curvature(exact32):
    inward = GridField(exact32.spec, -exact32.data)
    with pytest.raises(NonpositiveCurvatureError):
        heintze_karcher_check(inward, -0.25)


def test_scaling_laws_dilated_grids(exact48):
    # band quadrature is exactly dilation-equivariant, so the measured
    # ratios hit the homogeneity exponents to float precision
    v1 = volume(exact48, 0.0)
    p1 = hperimeter(exact48, 0.0)
    for lam in (0.5, 1.5):
        scale = np.array([lam, lam, lam * lam])
        sc = GridSpec(tuple(np.array(BOX_LO) * scale),
                      tuple(np.array(BOX_HI) * scale), exact48.spec.n)
        ul = GridField(sc, 3.0 * np.log(gauge_data(sc) / lam))
        assert volume(ul, 0.0) / v1 == pytest.approx(lam ** 4, rel=1e-12)
        assert hperimeter(ul, 0.0) / p1 == pytest.approx(lam ** 3, rel=1e-12)


# ------------------------------------------------------------ himcf driver


def test_himcf_unit_ball_solution(ball32, exact32):
    sol = ball32
    assert sol.converged
    assert sol.stage_converged == [True] * len(P_SCHEDULE)
    assert sol.p_schedule == list(P_SCHEDULE)
    assert sol.E0_descr.startswith("koranyi_ball")
    assert sol.plap is not None and sol.plap.converged
    assert sol.e0_level is not None

    # level-set equation residual falls along the schedule; measured
    # 1.008 -> 0.092 at 32^3
    res = sol.per_p_residuals
    assert len(res) == len(P_SCHEDULE)
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-1] <= 0.15

    # arrival time against the closed form; measured sup rel 0.0177
    win = (exact32.data >= 0.05) & (exact32.data <= 0.5)
    rel = np.abs(sol.u.data - exact32.data)[win] / exact32.data[win]
    assert float(rel.max()) <= 0.03

    outside = sol.e0_level.data > 0.0
    assert float(sol.u.data[outside].min()) >= -1e-6


def test_himcf_growth_and_rescaling(ball32):
    # measured at 32^3: slope 1.0123, r2 0.99930, rescaled drift 1.01e-2
    slope, r2, rep = perimeter_growth(ball32, T_GRID)
    assert slope == pytest.approx(1.0, abs=0.08)
    assert r2 >= 0.995
    assert not rep.truncated
    assert np.all(rep.column("char_fraction") < 0.05)

    rrep = rescaled_flow(ball32, T_GRID)
    assert rrep.max_drift <= 0.02


def test_himcf_field_e0_enclosing_ball():
    spec = GridSpec((-1.7, -1.7, -0.8), (1.7, 1.7, 0.8), (24, 24, 24))
    level = GridField(spec, gauge_data(spec) - 0.9)
    sol = himcf_solve(level, spec, schedule=(2.0, 1.5))
    assert sol.converged
    assert sol.E0_descr == "level-set field"
    assert np.isfinite(sol.u.data).all()
    outside = level.data > 0.0
    assert float(sol.u.data[outside].min()) >= -1e-6


def test_himcf_field_e0_partial_result():
    # a free-form initial set resolves its boundary only to first order,
    # which can stall the small-p sweeps; the schedule must then return
    # the flagged partial result instead of raising
    spec = GridSpec((-1.7, -1.7, -0.8), (1.7, 1.7, 0.8), (24, 24, 24))
    level = GridField(spec, gauge_data(spec) - 0.9)
    sol = himcf_solve(level, spec, schedule=(1.5, 1.2))
    assert isinstance(sol, LevelSetSolution)
    assert sol.stage_converged[0] is True
    assert sol.converged == all(sol.stage_converged)
    assert np.isfinite(sol.u.data).all()


def test_himcf_residual_level_out_of_range():
    spec = GridSpec(BOX_LO, BOX_HI, (16, 16, 16))
    est = HimcfSolver(schedule=(1.5,), residual_level=25.0)
    est.fit((ORIGIN, 1.0), spec)
    assert math.isnan(est.solution_.per_p_residuals[0])


def test_himcf_estimator_params():
    est = HimcfSolver(schedule=(1.5, 1.2), tol=1e-7)
    params = est.get_params()
    assert params["schedule"] == (1.5, 1.2)
    assert params["tol"] == 1e-7
    assert set(params) == {"schedule", "tol", "eps", "max_iters", "residual_level"}
    est.set_params(tol=1e-6)
    assert est.tol == 1e-6
    with pytest.raises(ConfigError):
        est.set_params(verbose=True)


def test_himcf_validation():
    spec = GridSpec(BOX_LO, BOX_HI, (12, 12, 12))
    with pytest.raises(ConfigError):
        himcf_solve((ORIGIN, 1.0), spec, schedule=())
    with pytest.raises(ConfigError):
        himcf_solve((ORIGIN, 1.0), spec, schedule=(1.2, 1.5))
    with pytest.raises(ConfigError):
        himcf_solve((ORIGIN, 1.0), spec, schedule=(3.0, 1.5))
    with pytest.raises(ConfigError):
        himcf_solve((ORIGIN, 1.0), "grid")
    with pytest.raises(ConfigError):
        himcf_solve("ball", spec)
    other = GridSpec(BOX_LO, BOX_HI, (16, 16, 16))
    with pytest.raises(ConfigError):
        himcf_solve(GridField(other, gauge_data(other) - 1.0), spec)


# --------------------------------------------------------------- inclusion


def test_inclusion_exact_nested_balls(exact32):
    bigger = GridField(exact32.spec, exact32.data - 3.0 * math.log(1.2))
    rep = inclusion_check(exact32, bigger, np.linspace(0.05, 0.5, 6))
    assert rep["max_fraction"] == 0.0
    assert rep["ok"]
    assert len(rep["fractions"]) == 6


def test_inclusion_solver_pair():
    # measured at 24^3 with radii 0.8 / 1.2: zero violating nodes
    spec = GridSpec((-1.7, -1.7, -0.8), (1.7, 1.7, 0.8), (24, 24, 24))
    solA = himcf_solve((ORIGIN, 0.8), spec, schedule=(1.5, 1.2))
    solB = himcf_solve((ORIGIN, 1.2), spec, schedule=(1.5, 1.2))
    rep = inclusion_check(solA, solB, np.linspace(0.05, 0.4, 6))
    assert rep["max_fraction"] <= 1e-3
    assert rep["ok"]

    with pytest.raises(ConfigError):
        inclusion_check(solB, solA, [0.1, 0.2])


def test_inclusion_validation(exact32, exact48):
    with pytest.raises(ConfigError):
        inclusion_check(exact32, exact48, [0.1, 0.2])
    rep = inclusion_check(exact32, exact32, [0.2])
    assert rep["max_fraction"] == 0.0
