"""Explicit extremals of the half-space Sobolev/trace problem.

Every object here is axially symmetric, so points are given as
``(rho, xN)`` with ``rho = |x'|`` the distance to the symmetry axis inside
the boundary hyperplane and ``xN >= 0`` the height above it.  All
functions accept numpy arrays and broadcast.

The bubble family is

    phi_{eps,tau}(x) = (eps*sqrt(N(N-2)) / (eps^2 + |x'|^2 + (xN + eps*tau*x0)^2))^((N-2)/2)

with ``x0 = sqrt(N/(N-2))``.  It solves ``-Lap phi = phi^(2*-1)`` inside the
half-space and ``-d phi/d xN = tau * phi^(2_*-1)`` on ``xN = 0``.  The
boundary exponent is ``2_* - 1``; a literal ``2* - 1`` does not balance
(see :func:`boundary_residual`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dimension",
    "BubbleParams",
    "HalfSpacePoint",
    "BoundaryPointError",
    "WeightOverflowError",
    "bubble_value",
    "bubble_gradient",
    "bubble_hessian",
    "bubble_laplacian",
    "laplacian_fd",
    "pde_residual",
    "boundary_residual",
    "weight",
    "cutoff",
    "cutoff_derivative",
    "test_function",
    "test_function_gradient",
    "scaled_test_gradient",
    "WEIGHT_OVERFLOW_R2",
]

# |x|^2 above this makes e^{|x|^2/4} exceed e^150.
WEIGHT_OVERFLOW_R2 = 600.0


class BoundaryPointError(ValueError):
    """Raised when an interior-only quantity is requested at ``xN = 0``."""


class WeightOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class Dimension:
    """Space dimension ``N >= 3`` and the two critical exponents."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ValueError(f"dimension must be an integer >= 3, got {self.N!r}")

    @property
    def two_star(self) -> float:
        """Sobolev exponent 2N/(N-2)."""
        return 2.0 * self.N / (self.N - 2)

    @property
    def two_lower(self) -> float:
        """Trace exponent 2(N-1)/(N-2)."""
        return 2.0 * (self.N - 1) / (self.N - 2)

    @property
    def x0(self) -> float:
        return math.sqrt(self.N / (self.N - 2))

    @property
    def kN(self) -> float:
        return (self.N * (self.N - 2)) ** ((self.N - 2) / 4.0)


def _as_dim(dim) -> Dimension:
    return dim if isinstance(dim, Dimension) else Dimension(int(dim))


@dataclass(frozen=True)
class BubbleParams:
    dim: Dimension
    eps: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "dim", _as_dim(self.dim))
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps!r}")
        if not self.tau >= 0:
            raise ValueError(f"tau must be nonnegative, got {self.tau!r}")

    @property
    def N(self) -> int:
        return self.dim.N

    @property
    def shift(self) -> float:
        """Distance ``eps*tau*x0`` of the bubble centre below the boundary."""
        return self.eps * self.tau * self.dim.x0


@dataclass(frozen=True)
class HalfSpacePoint:
    rho: float
    xN: float

    def __post_init__(self):
        if self.rho < 0 or self.xN < 0:
            raise ValueError("half-space points need rho >= 0 and xN >= 0")


def _denominator(p: BubbleParams, rho, xN):
    return p.eps**2 + rho**2 + (xN + p.shift) ** 2


def _amplitude(p: BubbleParams) -> float:
    # k_N eps^{(N-2)/2}
    return p.dim.kN * p.eps ** ((p.N - 2) / 2.0)


def bubble_value(p: BubbleParams, rho, xN):
    """Value of ``phi_{eps,tau}`` at ``(rho, xN)``."""
    rho = np.asarray(rho, dtype=float)
    xN = np.asarray(xN, dtype=float)
    c = p.eps * math.sqrt(p.N * (p.N - 2))
    return (c / _denominator(p, rho, xN)) ** ((p.N - 2) / 2.0)


def bubble_gradient(p: BubbleParams, rho, xN):
    """Return ``(d/d rho, d/d xN)`` of the bubble."""
    rho = np.asarray(rho, dtype=float)
    xN = np.asarray(xN, dtype=float)
    D = _denominator(p, rho, xN)
    fac = -(p.N - 2) * _amplitude(p) / D ** (p.N / 2.0)
    return fac * rho, fac * (xN + p.shift)


def bubble_hessian(p: BubbleParams, rho, xN):
    """Second derivatives ``(phi_rr, phi_rz, phi_zz)`` in the (rho, xN) plane."""
    rho = np.asarray(rho, dtype=float)
    zs = np.asarray(xN, dtype=float) + p.shift
    D = _denominator(p, rho, xN)
    a = (p.N - 2) * _amplitude(p)
    # d/dq [-a q D^{-N/2}] = -a D^{-N/2} + a N q^2 D^{-N/2-1}
    base = -a / D ** (p.N / 2.0)
    cross = a * p.N / D ** (p.N / 2.0 + 1.0)
    return base + cross * rho**2, cross * rho * zs, base + cross * zs**2


def bubble_laplacian(p: BubbleParams, rho, xN):
    """N-dimensional Laplacian of the bubble in axisymmetric form.

    ``Lap u = u_rr + (N-2)/rho u_r + u_zz``; on the axis the middle term is
    replaced by its limit ``(N-2) u_rr``.
    """
    rho = np.asarray(rho, dtype=float)
    hrr, _, hzz = bubble_hessian(p, rho, xN)
    gr, _ = bubble_gradient(p, rho, xN)
    on_axis = rho == 0
    safe = np.where(on_axis, 1.0, rho)
    radial = np.where(on_axis, (p.N - 2) * hrr, (p.N - 2) * gr / safe)
    return hrr + radial + hzz


def laplacian_fd(f, N: int, rho, xN, h: float = 1e-4):
    """Fourth-order central-difference Laplacian of an axisymmetric ``f``.

    Needs ``rho >= 2h`` and ``xN >= 2h`` so that the stencil stays inside
    the half-space.
    """
    rho = np.asarray(rho, dtype=float)
    xN = np.asarray(xN, dtype=float)
    if np.any(rho < 2 * h) or np.any(xN < 2 * h):
        raise BoundaryPointError("stencil leaves the half-space; move off the axis/boundary")

    def d1(g, x, y, ax):
        if ax == 0:
            return (-g(x + 2 * h, y) + 8 * g(x + h, y) - 8 * g(x - h, y) + g(x - 2 * h, y)) / (12 * h)
        return (-g(x, y + 2 * h) + 8 * g(x, y + h) - 8 * g(x, y - h) + g(x, y - 2 * h)) / (12 * h)

    def d2(g, x, y, ax):
        if ax == 0:
            vals = (g(x + 2 * h, y), g(x + h, y), g(x, y), g(x - h, y), g(x - 2 * h, y))
        else:
            vals = (g(x, y + 2 * h), g(x, y + h), g(x, y), g(x, y - h), g(x, y - 2 * h))
        return (-vals[0] + 16 * vals[1] - 30 * vals[2] + 16 * vals[3] - vals[4]) / (12 * h * h)

    return d2(f, rho, xN, 0) + (N - 2) / rho * d1(f, rho, xN, 0) + d2(f, rho, xN, 1)


def pde_residual(p: BubbleParams, rho, xN):
    """Interior residual ``-Lap phi - phi^(2*-1)`` from analytic derivatives."""
    xN = np.asarray(xN, dtype=float)
    if np.any(xN <= 0):
        raise BoundaryPointError("boundary point: use boundary_residual")
    phi = bubble_value(p, rho, xN)
    return -bubble_laplacian(p, rho, xN) - phi ** (p.dim.two_star - 1.0)


def boundary_residual(p: BubbleParams, rho):
    """Neumann residual ``-d phi/d xN - tau*phi^(2_*-1)`` on ``xN = 0``.

    The outward normal of the upper half-space is ``-e_N``.  The two terms
    cancel because ``(N-2)*x0 = sqrt(N(N-2))``.
    """
    rho = np.asarray(rho, dtype=float)
    zero = np.zeros_like(rho)
    _, dz = bubble_gradient(p, rho, zero)
    phi = bubble_value(p, rho, zero)
    return -dz - p.tau * phi ** (p.dim.two_lower - 1.0)


def weight(rho, xN):
    """Gaussian weight ``K(x) = exp(|x|^2/4)``."""
    r2 = np.asarray(rho, dtype=float) ** 2 + np.asarray(xN, dtype=float) ** 2
    if np.any(r2 > WEIGHT_OVERFLOW_R2):
        raise WeightOverflowError("weight overflow: |x|^2 exceeds %g" % WEIGHT_OVERFLOW_R2)
    return np.exp(r2 / 4.0)


def _h(t):
    # exp(-1/t) for t > 0, zero otherwise; C-infinity at t = 0
    t = np.asarray(t, dtype=float)
    pos = t > 0
    out = np.zeros_like(t)
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _h_prime(t):
    t = np.asarray(t, dtype=float)
    pos = t > 0
    out = np.zeros_like(t)
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def _radius(rho, xN):
    return np.hypot(np.asarray(rho, dtype=float), np.asarray(xN, dtype=float))


def _step(r):
    a = _h(2.0 - r)
    b = _h(r - 1.0)
    return a / (a + b)


def _step_prime(r):
    a = _h(2.0 - r)
    b = _h(r - 1.0)
    da = -_h_prime(2.0 - r)
    db = _h_prime(r - 1.0)
    return (da * b - a * db) / (a + b) ** 2


def cutoff(rho, xN):
    """Smooth radial cutoff: 1 on ``|x| <= 1``, 0 on ``|x| >= 2``.

    Built from the ratio ``h(2-r) / (h(2-r) + h(r-1))`` with
    ``h(t) = exp(-1/t)``, which is C-infinity and monotone on [1, 2].
    """
    r = _radius(rho, xN)
    return _step(np.atleast_1d(r)).reshape(np.shape(r))


def cutoff_derivative(r):
    """Radial derivative of :func:`cutoff` as a function of ``|x|``."""
    r = np.asarray(r, dtype=float)
    return _step_prime(np.atleast_1d(r)).reshape(r.shape)


def _require_tau_one(p: BubbleParams):
    if p.tau != 1:
        raise ValueError("test function defined for tau=1")


def test_function(p: BubbleParams, rho, xN):
    """``K^{-1/2} * cutoff * U_eps`` with ``U_eps = phi_{eps,1}``."""
    _require_tau_one(p)
    rho = np.asarray(rho, dtype=float)
    xN = np.asarray(xN, dtype=float)
    r2 = rho**2 + xN**2
    return np.exp(-r2 / 8.0) * cutoff(rho, xN) * bubble_value(p, rho, xN)


def scaled_test_gradient(p: BubbleParams, rho, xN):
    """``K^{1/2} grad(test_function)``, i.e. ``grad w - (x/4) w`` with ``w = cutoff*U``.

    Squaring and integrating gives the weighted energy without ever
    forming ``K`` itself.
    """
    _require_tau_one(p)
    rho = np.asarray(rho, dtype=float)
    xN = np.asarray(xN, dtype=float)
    r = _radius(rho, xN)
    u = bubble_value(p, rho, xN)
    ur, uz = bubble_gradient(p, rho, xN)
    c = cutoff(rho, xN)
    dc = cutoff_derivative(r)
    safe = np.where(r > 0, r, 1.0)
    cr = np.where(r > 0, dc * rho / safe, 0.0)
    cz = np.where(r > 0, dc * xN / safe, 0.0)
    w = c * u
    return cr * u + c * ur - 0.25 * rho * w, cz * u + c * uz - 0.25 * xN * w


def test_function_gradient(p: BubbleParams, rho, xN):
    """Gradient of :func:`test_function` as ``(d/d rho, d/d xN)``."""
    gr, gz = scaled_test_gradient(p, rho, xN)
    damp = np.exp(-(np.asarray(rho, dtype=float) ** 2 + np.asarray(xN, dtype=float) ** 2) / 8.0)
    return damp * gr, damp * gz


# keep pytest from collecting these when imported into test modules
test_function.__test__ = False
test_function_gradient.__test__ = False
scaled_test_gradient.__test__ = False
