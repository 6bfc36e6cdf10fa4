import math
import warnings

import numpy as np
import pytest

from critneumann.quadrature import (
    EnergyBreakdown,
    InvalidIntegrandError,
    QuadratureSpec,
    UnconvergedWarning,
    bubble_constants,
    integrate_boundary,
    integrate_halfspace,
    integrate_interval,
    sphere_area,
    tanh_sinh_nodes,
)


def test_sphere_area():
    assert sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2, rel=1e-15)
    assert sphere_area(1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sphere_area(0)


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(nodes_radial=8)
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=0.1)
    with pytest.raises(ValueError):
        QuadratureSpec(radial_truncation=None, compactify=False)
    with pytest.raises(ValueError):
        QuadratureSpec(radial_truncation=-1.0)


def test_tanh_sinh_nodes_inside_interval():
    x, w = tanh_sinh_nodes(0.0, 1.0, 0.1)
    assert np.all((x > 0) & (x < 1))
    assert np.sum(w) == pytest.approx(1.0, rel=1e-14)


def test_integrate_interval():
    assert integrate_interval(np.exp, 0.0, 1.0).value == pytest.approx(math.e - 1, rel=1e-13)
    assert integrate_interval(lambda x: np.exp(-x), 0.0, None).value == pytest.approx(1.0, rel=1e-12)
    # endpoint singularity
    assert integrate_interval(lambda x: 1 / np.sqrt(x), 0.0, 1.0).value == pytest.approx(2.0, rel=1e-10)


def test_halfspace_gaussian():
    r = integrate_halfspace(lambda rho, z: np.exp(-(rho**2 + z**2)), 3)
    assert r.value == pytest.approx(math.pi**1.5 / 2, rel=1e-12)
    assert r.converged and r.error_estimate >= 0


def test_halfspace_ball_indicator():
    spec = QuadratureSpec(radial_truncation=1.0)
    r = integrate_halfspace(lambda rho, z: np.ones_like(rho), 3, spec)
    assert r.value == pytest.approx(2 * math.pi / 3, rel=1e-12)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_gaussian_second_moment(N):
    w = lambda rho, z: np.exp(-(rho**2 + z**2) / 4)
    m0 = integrate_halfspace(w, N).value
    m2 = integrate_halfspace(lambda rho, z: (rho**2 + z**2) * w(rho, z), N).value
    assert m2 / m0 == pytest.approx(2 * N, rel=1e-9)


def test_boundary_integrals():
    assert integrate_boundary(lambda r: np.exp(-r**2), 3).value == pytest.approx(math.pi, rel=1e-12)
    spec = QuadratureSpec(radial_truncation=1.0)
    assert integrate_boundary(lambda r: np.ones_like(r), 4, spec).value == pytest.approx(4 * math.pi / 3, rel=1e-12)


def test_invalid_integrand():
    with pytest.raises(InvalidIntegrandError, match="invalid integrand sample"):
        integrate_halfspace(lambda rho, z: np.full_like(rho, np.nan), 3)


def test_unconverged_flag():
    spec = QuadratureSpec(rel_tol=1e-12, max_level=0, radial_truncation=1.0)
    with pytest.warns(UnconvergedWarning):
        r = integrate_halfspace(lambda rho, z: np.sqrt(np.abs(np.sin(40 * rho))), 3, spec)
    assert not r.converged


def test_refinement_reduces_error():
    # doubling the node counts at a fixed level budget does not increase the error estimate
    battery = [
        lambda rho, z: np.exp(-(rho**2 + z**2)),
        lambda rho, z: 1 / (1 + rho**2 + (z + 1) ** 2) ** 4,
        lambda rho, z: (rho**2 + z**2) * np.exp(-(rho**2 + z**2) / 4),
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnconvergedWarning)
        for f in battery:
            lo = integrate_halfspace(f, 4, QuadratureSpec(nodes_radial=16, nodes_angular=16, max_level=1, rel_tol=1e-15))
            hi = integrate_halfspace(f, 4, QuadratureSpec(nodes_radial=32, nodes_angular=32, max_level=1, rel_tol=1e-15))
            assert hi.error_estimate <= lo.error_estimate


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_bubble_constants_identity(N):
    e = bubble_constants(N)
    assert isinstance(e, EnergyBreakdown)
    assert abs(e.identity_residual) <= 1e-6 * e.K1
    assert e.A == pytest.approx(e.K2 / N + e.K3 / (2 * (N - 1)), rel=1e-8)
    assert e.A > 0
    assert e.converged


def test_bubble_constants_known_values():
    e3 = bubble_constants(3)
    # trace total in N = 3 is 3 pi / 4
    assert e3.K3 == pytest.approx(3 * math.pi / 4, rel=1e-10)
    e4 = bubble_constants(4)
    assert e4.A_lambda(4.0) == pytest.approx(e4.A / 4, rel=1e-15)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_bubble_constants_scale_invariant(N):
    ref = bubble_constants(N, eps=1.0)
    for eps in (0.25, 0.5, 2.0):
        e = bubble_constants(N, eps=eps)
        assert e.K1 == pytest.approx(ref.K1, rel=1e-8)
        assert e.K2 == pytest.approx(ref.K2, rel=1e-8)
        assert e.K3 == pytest.approx(ref.K3, rel=1e-8)


def test_breakdown_as_dict():
    d = bubble_constants(4).as_dict()
    assert set(["K1", "K2", "K3", "A", "K1_minus_K2_minus_K3", "errors"]) <= set(d)
