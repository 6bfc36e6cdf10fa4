import math

import numpy as np
import pytest

from critneumann.asymptotics import test_function_totals
from critneumann.landscape import FiberCurve, FunctionalParams, fiber_max, threshold_A
from critneumann.solver import (
    AnalyticField,
    AxisymField,
    Grid,
    SolverConfig,
    bubble_consistency,
    directional_derivative,
    functional_gradient,
    functional_value,
    hardy_check,
    initial_direction,
    load_field,
    mountain_pass_solve,
    nonexistence_certificate,
    pohozaev_report,
    random_smooth_field,
    rayleigh_min,
    rayleigh_quotient,
    save_field,
)

SMALL = Grid(n_rho=32, n_xN=32, grading=3.0)
COARSE = Grid(n_rho=64, n_xN=64, grading=8.0)
FP = FunctionalParams(1.0, 1.0, 3.0, 4)


@pytest.fixture(scope="module")
def coarse_solution():
    return mountain_pass_solve(FP, COARSE)


def test_grid():
    g = Grid()
    assert g.rho[0] == 0.0 and g.xN[0] == 0.0
    assert g.rho[-1] == pytest.approx(g.R_rho)
    assert np.all(np.diff(g.rho) > 0)
    assert g.refined().n_rho == 2 * g.n_rho
    with pytest.raises(ValueError):
        Grid(n_rho=16)
    with pytest.raises(ValueError):
        Grid(R_rho=-1.0)


def test_field_validation():
    vals = np.ones(SMALL.shape)
    with pytest.raises(ValueError, match="outer truncation"):
        AxisymField(vals, SMALL, 4)
    vals = np.zeros(SMALL.shape)
    vals[0, 0] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        AxisymField(vals, SMALL, 4)
    with pytest.raises(ValueError):
        AxisymField(np.zeros((3, 3)), SMALL, 4)


def test_functional_basics():
    z = AxisymField.zeros(SMALL, 4)
    assert functional_value(z, FP) == 0.0
    assert np.all(functional_gradient(z, FP).values == 0.0)
    g = AxisymField.from_function(lambda r, x: np.exp(-(r**2 + x**2) / 4), SMALL, 4)
    quad = functional_value(g, FunctionalParams(1e-12, 0.0, 3.0, 4))
    assert quad > 0
    rng = np.random.default_rng(0)
    u = random_smooth_field(SMALL, 4, rng)
    assert functional_value(-u, FP) == pytest.approx(functional_value(u, FP), rel=1e-14)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = random_smooth_field(SMALL, 4, rng)
        v = random_smooth_field(SMALL, 4, rng)
        h = 1e-4
        up = AxisymField(u.values + h * v.values, SMALL, 4)
        um = AxisymField(u.values - h * v.values, SMALL, 4)
        fd = (functional_value(up, FP) - functional_value(um, FP)) / (2 * h)
        an = directional_derivative(functional_gradient(u, FP), v)
        assert fd == pytest.approx(an, rel=1e-5)


def test_rayleigh_quotient_gaussian():
    for N in (3, 4, 5):
        assert rayleigh_quotient(AnalyticField.gaussian(N)) == pytest.approx(N / 2, rel=1e-12)


def test_rayleigh_min_is_a_lower_bound():
    ev = rayleigh_min(4, COARSE)
    assert ev.converged
    assert ev.value <= 2.0 * 1.06
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = random_smooth_field(COARSE, 4, rng)
        assert rayleigh_quotient(u) >= ev.value * (1 - 1e-10)


def test_hardy():
    lhs, rhs = hardy_check(AnalyticField.gaussian(3))
    assert rhs / lhs == pytest.approx(5 / 3, rel=1e-9)
    assert hardy_check(AxisymField.zeros(SMALL, 3)) == (0.0, 0.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        lhs, rhs = hardy_check(random_smooth_field(SMALL, 5, rng))
        assert lhs <= rhs


def test_pohozaev_zero_field():
    rep = pohozaev_report(AxisymField.zeros(SMALL, 4), FP)
    assert all(v == 0.0 for v in rep.residuals.values())
    assert rep.id_a2_lhs == rep.id_a2_rhs == 0.0


def test_bubble_consistency_improves():
    coarse = bubble_consistency(4, Grid(n_rho=64, n_xN=64, grading=2.5))
    fine = bubble_consistency(4, Grid(n_rho=128, n_xN=128, grading=2.5))
    assert fine < coarse < 1e-2


def test_initial_level_matches_fiber_analysis():
    # the grid level of the eps = 0.1 test function against the quadrature fiber
    u = initial_direction(FP, Grid(), eps=0.1)
    from critneumann.solver import _ray_max

    _, grid_level = _ray_max(u, FP, SolverConfig())
    tot = test_function_totals(0.1, 4, 3.0)
    _, quad_level = fiber_max(FiberCurve.from_breakdown(tot, FP.mu_weight))
    assert grid_level == pytest.approx(quad_level, rel=0.01)


def test_solver_coarse(coarse_solution):
    res = coarse_solution
    assert res.converged and res.monotone
    v = res.u.values
    assert v.min() >= -1e-10 * v.max()
    assert 0 < res.level
    assert res.grad_norm <= 1e-6 * res.grad_norm0
    d = res.diagnostics()
    assert d["status"] == "converged"


def test_truncation_stability(coarse_solution):
    # doubling R (grading raised to keep the spacing near the origin) moves the
    # level by less than the coarse-to-default two-grid change
    wide = mountain_pass_solve(FP, Grid(16.0, 16.0, 72, 72, 8.75))
    default = mountain_pass_solve(FP, Grid(n_rho=128, n_xN=128, grading=8.0), SolverConfig(grad_tol=1e-5))
    two_grid = abs(coarse_solution.level - default.level)
    assert abs(wide.level - coarse_solution.level) < two_grid


def test_certificate():
    fp0 = FunctionalParams(1.0, 0.0, 3.0, 4)
    c = nonexistence_certificate(AxisymField.zeros(SMALL, 4), fp0)
    assert c.verdict.startswith("trivial") and not c.violated
    c = nonexistence_certificate(AnalyticField.gaussian(4), fp0)
    assert c.violated and c.gap >= c.lower_bound > 0
    with pytest.raises(ValueError):
        nonexistence_certificate(AnalyticField.gaussian(4), FP)


def test_certificate_on_flipped_solution(coarse_solution):
    fp = FunctionalParams(1.0, -1.0, 3.0, 4)
    c = nonexistence_certificate(coarse_solution.u, fp)
    assert c.violated and c.gap > c.lower_bound


def test_negative_mu_descent_collapses():
    fp = FunctionalParams(1.0, -0.1, 3.0, 4)
    res = mountain_pass_solve(fp, COARSE, SolverConfig(max_outer=200))
    assert res.monotone
    assert res.l2_norms[-1] < 0.1 * res.l2_norms[0]
    assert min(res.levels) > threshold_A(4)
    assert nonexistence_certificate(res.u, fp).violated


def test_save_load_roundtrip(tmp_path, coarse_solution):
    path = tmp_path / "sub" / "u.txt"
    side = save_field(path, coarse_solution.u, FP, {"level": coarse_solution.level})
    assert side.exists()
    u, meta = load_field(path)
    assert np.array_equal(u.values, coarse_solution.u.values)
    assert meta["N"] == 4 and meta["mu"] == 1.0 and meta["grid"]["n_rho"] == 64
