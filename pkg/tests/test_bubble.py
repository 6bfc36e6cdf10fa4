import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critneumann.bubble import (
    BoundaryPointError,
    BubbleParams,
    Dimension,
    HalfSpacePoint,
    WeightOverflowError,
    boundary_residual,
    bubble_gradient,
    bubble_laplacian,
    bubble_value,
    cutoff,
    laplacian_fd,
    pde_residual,
    test_function,
    test_function_gradient,
    weight,
)


def test_dimension_exponents():
    for N in range(3, 9):
        d = Dimension(N)
        assert d.two_star - 2 == pytest.approx(2 * (d.two_lower - 2))
        assert d.x0 > 1
    with pytest.raises(ValueError):
        Dimension(2)


def test_params_validation():
    with pytest.raises(ValueError):
        BubbleParams(3, eps=0.0)
    with pytest.raises(ValueError):
        BubbleParams(3, tau=-1.0)
    with pytest.raises(ValueError):
        HalfSpacePoint(-1.0, 0.0)


def test_bubble_value_examples():
    assert bubble_value(BubbleParams(4, 1.0, 1.0), 0.0, 0.0) == pytest.approx(2 * math.sqrt(2) / 3, rel=1e-14)
    assert bubble_value(BubbleParams(3, 1.0, 0.0), 0.0, 0.0) == pytest.approx(3**0.25, rel=1e-14)
    assert bubble_value(BubbleParams(5, 0.5, 1.0), 1e8, 0.0) < 1e-20


def test_gradient_examples():
    bp = BubbleParams(4, 1.0, 1.0)
    dr, dz = bubble_gradient(bp, 0.0, 0.7)
    assert dr == 0.0
    assert bubble_gradient(bp, 0.0, 0.0)[1] == pytest.approx(-8.0 / 9.0, rel=1e-14)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_gradient_matches_central_differences(N):
    rng = np.random.default_rng(N)
    h = 1e-5
    for _ in range(100):
        bp = BubbleParams(N, rng.uniform(0.3, 2.0), rng.uniform(0.0, 2.0))
        r, z = rng.uniform(0.1, 3.0, 2)
        dr, dz = bubble_gradient(bp, r, z)
        fr = (bubble_value(bp, r + h, z) - bubble_value(bp, r - h, z)) / (2 * h)
        fz = (bubble_value(bp, r, z + h) - bubble_value(bp, r, z - h)) / (2 * h)
        scale = math.hypot(dr, dz)
        assert abs(fr - dr) <= 1e-6 * scale
        assert abs(fz - dz) <= 1e-6 * scale


def test_laplacian_analytic_vs_stencil():
    bp = BubbleParams(5, 0.3, 0.0)
    lap = bubble_laplacian(bp, 1.0, 1.0)
    fd = laplacian_fd(lambda r, z: bubble_value(bp, r, z), 5, 1.0, 1.0)
    assert fd == pytest.approx(lap, rel=1e-6)


@pytest.mark.parametrize("N,eps,tau,x", [(3, 1.0, 1.0, (0.5, 0.5)), (5, 0.3, 0.0, (1.0, 1.0))])
def test_pde_residual_examples(N, eps, tau, x):
    bp = BubbleParams(N, eps, tau)
    phi = bubble_value(bp, *x)
    assert abs(pde_residual(bp, *x)) <= 1e-6 * phi ** (bp.dim.two_star - 1)


def test_pde_residual_scaling():
    N, eps = 4, 0.4
    x = np.array([0.3, 0.2])
    r_eps = pde_residual(BubbleParams(N, eps, 1.0), *x)
    r_one = pde_residual(BubbleParams(N, 1.0, 1.0), *(x / eps))
    assert r_eps == pytest.approx(eps ** (-(N + 2) / 2) * r_one, abs=1e-8)


def test_pde_residual_rejects_boundary():
    with pytest.raises(BoundaryPointError, match="boundary point"):
        pde_residual(BubbleParams(3), 0.5, 0.0)


@pytest.mark.parametrize("N,eps,tau,rho", [(4, 1.0, 1.0, 0.0), (3, 0.5, 2.0, 1.0), (6, 0.2, 0.7, 3.0)])
def test_boundary_residual_vanishes(N, eps, tau, rho):
    bp = BubbleParams(N, eps, tau)
    scale = tau * bubble_value(bp, rho, 0.0) ** (bp.dim.two_lower - 1)
    assert abs(boundary_residual(bp, rho)) <= 1e-10 * scale


def test_boundary_residual_tau_zero():
    assert boundary_residual(BubbleParams(4, 0.7, 0.0), np.linspace(0, 3, 7)) == pytest.approx(0.0, abs=1e-15)


def test_boundary_exponent_must_be_trace_exponent():
    # with the volume exponent 2* - 1 the boundary condition does not balance
    bp = BubbleParams(4, 1.0, 1.0)
    dz = bubble_gradient(bp, 0.5, 0.0)[1]
    phi = bubble_value(bp, 0.5, 0.0)
    assert abs(-dz - phi ** (bp.dim.two_star - 1)) > 1e-2 * abs(dz)


def test_weight():
    assert weight(0.0, 0.0) == 1.0
    assert weight(2.0, 0.0) == pytest.approx(math.e, rel=1e-15)
    assert weight(0.0, 2.0) == pytest.approx(math.e, rel=1e-15)
    with pytest.raises(WeightOverflowError, match="weight overflow"):
        weight(30.0, 0.0)


def test_cutoff_profile():
    assert cutoff(0.5, 0.0) == 1.0
    assert cutoff(3.0, 0.0) == 0.0
    r = np.linspace(1.0, 2.0, 201)
    c = cutoff(r, 0.0)
    assert 0 < cutoff(1.5, 0.0) < 1
    assert np.all(np.diff(c) <= 0)
    # radial: depends on |x| only
    assert cutoff(1.2, 0.9) == pytest.approx(cutoff(1.5, 0.0), rel=1e-15)


def test_test_function():
    bp = BubbleParams(4, 1.0, 1.0)
    assert test_function(bp, 0.0, 0.0) == pytest.approx(2 * math.sqrt(2) / 3, rel=1e-14)
    assert test_function(bp, 2.5, 0.0) == 0.0
    for eps in (0.1, 1.0):
        b = BubbleParams(3, eps, 1.0)
        assert test_function(b, 1.99, 0.0) <= np.exp(-1.99**2 / 8) * bubble_value(b, 1.99, 0.0)
    with pytest.raises(ValueError, match="tau=1"):
        test_function(BubbleParams(4, 1.0, 0.5), 0.0, 0.0)


def test_test_function_gradient_fd():
    bp = BubbleParams(5, 0.3, 1.0)
    h = 1e-6
    for r, z in ((0.4, 0.3), (1.3, 0.2), (0.9, 1.1)):
        gr, gz = test_function_gradient(bp, r, z)
        fr = (test_function(bp, r + h, z) - test_function(bp, r - h, z)) / (2 * h)
        fz = (test_function(bp, r, z + h) - test_function(bp, r, z - h)) / (2 * h)
        assert fr == pytest.approx(gr, rel=1e-6, abs=1e-9)
        assert fz == pytest.approx(gz, rel=1e-6, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(3, 7), eps=st.floats(0.05, 5.0), tau=st.floats(0.0, 3.0),
       rho=st.floats(0.0, 10.0), xN=st.floats(0.0, 10.0))
def test_scaling_covariance(N, eps, tau, rho, xN):
    v = bubble_value(BubbleParams(N, eps, tau), rho, xN)
    w = eps ** (-(N - 2) / 2) * bubble_value(BubbleParams(N, 1.0, tau), rho / eps, xN / eps)
    assert v == pytest.approx(w, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(3, 7), tau=st.floats(0.01, 3.0), rho=st.floats(0.0, 5.0), xN=st.floats(0.0, 5.0))
def test_positive_and_maximal_at_origin(N, tau, rho, xN):
    bp = BubbleParams(N, 1.0, tau)
    v = bubble_value(bp, rho, xN)
    assert 0 < v <= bubble_value(bp, 0.0, 0.0)
    assert bubble_value(bp, rho + 0.1, xN) < v
