"""Dimension-reduced integration over the half-space and its boundary.

Integrands are axisymmetric, ``f(rho, xN)``.  Volume integrals are done in
polar coordinates of the quarter plane, ``rho = r sin(psi)``,
``xN = r cos(psi)``:

    int_{R^N_+} f dx = |S^{N-2}| int_0^inf int_0^{pi/2} f r^{N-1} sin(psi)^{N-2} dpsi dr

and boundary integrals reduce to ``|S^{N-2}| int_0^inf g(rho) rho^{N-2} drho``.
Each 1-D factor uses a tanh-sinh (double exponential) rule; unbounded
radial ranges are compactified with ``r = c*s/(1-s)``.  The rule is
refined by halving the step until two successive levels agree.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bubble import BubbleParams, Dimension, _as_dim, bubble_gradient, bubble_value

__all__ = [
    "QuadratureSpec",
    "IntegralResult",
    "UnconvergedWarning",
    "InvalidIntegrandError",
    "sphere_area",
    "tanh_sinh_nodes",
    "integrate_interval",
    "integrate_halfspace",
    "integrate_boundary",
    "bubble_constants",
    "EnergyBreakdown",
]

_T_MAX = 4.5  # beyond this the tanh-sinh weights underflow


class UnconvergedWarning(RuntimeWarning):
    pass


class InvalidIntegrandError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """Settings for the tanh-sinh integrators.

    ``radial_truncation`` set to a number integrates ``r`` over ``[0, R]``;
    ``None`` (with ``compactify=True``) integrates over ``[0, inf)``.
    ``cluster_scale`` is the length at which integrands vary fastest (the
    bubble scale ``eps``); the radial range is split there and the
    compactification uses it as its unit.  ``radial_breaks`` adds further
    split points, e.g. the edges of the cutoff transition band.
    ``nodes_radial``/``nodes_angular`` are the per-panel node counts of the
    coarsest level; every refinement roughly doubles them.
    """

    radial_truncation: float | None = None
    compactify: bool = True
    nodes_radial: int = 24
    nodes_angular: int = 16
    rel_tol: float = 1e-9
    cluster_scale: float = 1.0
    radial_breaks: tuple = ()
    max_level: int = 7

    def __post_init__(self):
        if self.radial_truncation is not None and not self.radial_truncation > 0:
            raise ValueError("radial_truncation must be positive")
        if self.radial_truncation is None and not self.compactify:
            raise ValueError("an unbounded range needs compactify=True")
        if self.nodes_radial < 16 or self.nodes_angular < 16:
            raise ValueError("node counts must be >= 16")
        if not (0 < self.rel_tol <= 1e-2):
            raise ValueError("rel_tol must lie in (0, 1e-2]")
        if not self.cluster_scale > 0:
            raise ValueError("cluster_scale must be positive")

    def with_(self, **kw) -> "QuadratureSpec":
        return replace(self, **kw)


@dataclass
class IntegralResult:
    value: float
    error_estimate: float
    nodes_used: int
    rel_tol: float = 1e-9
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.error_estimate <= self.rel_tol * abs(self.value)

    def __float__(self):
        return float(self.value)


def sphere_area(m: int) -> float:
    """Surface area of the unit sphere ``S^{m-1}`` in ``R^m``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return 2.0 * math.pi ** (m / 2.0) / math.gamma(m / 2.0)


def tanh_sinh_nodes(a: float, b: float, h: float):
    """Nodes and weights of the tanh-sinh rule with step ``h`` on ``[a, b]``.

    Nodes are placed by their distance to the nearer endpoint so that no
    node collapses onto ``a`` or ``b`` in floating point.
    """
    kmax = int(math.ceil(_T_MAX / h))
    t = h * np.arange(-kmax, kmax + 1)
    u = 0.5 * math.pi * np.sinh(t)
    half = 0.5 * (b - a)
    # 1 - tanh|u| = e^{-|u|}/cosh(u), computed without cancellation
    gap = half * np.exp(-np.abs(u)) / np.cosh(u)
    x = np.where(t < 0, a + gap, b - gap)
    w = half * h * 0.5 * math.pi * np.cosh(t) / np.cosh(u) ** 2
    keep = (gap > 0) & (x > a) & (x < b) & (w > 0)
    return x[keep], w[keep]


def _panel_rule(edges: Sequence[float], h: float, tail_scale: float | None):
    """Concatenate tanh-sinh rules over consecutive panels.

    If ``tail_scale`` is given, the last panel runs from ``edges[-1]`` to
    infinity through ``r = edges[-1] + c*s/(1-s)``.
    """
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = tanh_sinh_nodes(lo, hi, h)
        xs.append(x)
        ws.append(w)
    if tail_scale is not None:
        s, w = tanh_sinh_nodes(0.0, 1.0, h)
        one_minus = 1.0 - s
        keep = one_minus > 0
        s, w, one_minus = s[keep], w[keep], one_minus[keep]
        xs.append(edges[-1] + tail_scale * s / one_minus)
        ws.append(w * tail_scale / one_minus**2)
    return np.concatenate(xs), np.concatenate(ws)


def _radial_edges(spec: QuadratureSpec):
    R = spec.radial_truncation
    pts = {0.0}
    c = spec.cluster_scale
    pts.update(b for b in spec.radial_breaks if b > 0)
    if R is None or c < R:
        pts.add(c)
    if R is not None:
        pts = {p for p in pts if p < R}
        pts.add(R)
        return sorted(pts), None
    return sorted(pts), c


def _step_for(nodes: int) -> float:
    # coarsest step giving roughly `nodes` points on one panel
    return 2.0 * _T_MAX / (nodes - 1)


def _check_finite(vals):
    if not np.all(np.isfinite(vals)):
        raise InvalidIntegrandError("invalid integrand sample (NaN or inf)")


def _refine(level_sum: Callable[[int], tuple], spec: QuadratureSpec, what: str) -> IntegralResult:
    history = []
    prev = None
    value, nodes, err = 0.0, 0, math.inf
    for level in range(spec.max_level + 1):
        value, nodes = level_sum(level)
        history.append(value)
        if prev is not None:
            err = abs(value - prev)
            # two agreeing levels, checked past the coarse start-up phase
            if level >= 2 and err <= spec.rel_tol * abs(value):
                break
            if level >= 2 and value == 0.0 and prev == 0.0:
                err = 0.0
                break
        prev = value
    res = IntegralResult(float(value), float(err), int(nodes), spec.rel_tol, history)
    if not res.converged:
        warnings.warn(
            f"{what}: unconverged (error estimate {err:.3g}, value {value:.6g})",
            UnconvergedWarning,
            stacklevel=3,
        )
    return res


def integrate_interval(f: Callable, a: float, b: float | None, rel_tol: float = 1e-12,
                       scale: float = 1.0, max_level: int = 8) -> IntegralResult:
    """Adaptive tanh-sinh for a 1-D integral; ``b=None`` means infinity."""
    spec = QuadratureSpec(rel_tol=rel_tol, max_level=max_level)
    h0 = _step_for(spec.nodes_radial)

    def level_sum(level):
        h = h0 / 2**level
        if b is None:
            x, w = _panel_rule([a], h, scale)
        else:
            x, w = tanh_sinh_nodes(a, b, h)
        vals = np.asarray(f(x), dtype=float)
        _check_finite(vals)
        return float(np.sum(w * vals)), x.size

    return _refine(level_sum, spec, "integrate_interval")


def integrate_halfspace(f: Callable, dim, spec: QuadratureSpec | None = None) -> IntegralResult:
    """Integrate an axisymmetric ``f(rho, xN)`` over ``R^N_+``."""
    spec = spec or QuadratureSpec()
    N = _as_dim(dim).N
    edges, tail = _radial_edges(spec)
    hr0 = _step_for(spec.nodes_radial)
    ha0 = _step_for(spec.nodes_angular)
    area = sphere_area(N - 1)

    def level_sum(level):
        r, wr = _panel_rule(edges, hr0 / 2**level, tail)
        psi, wpsi = tanh_sinh_nodes(0.0, 0.5 * math.pi, ha0 / 2**level)
        R, P = np.meshgrid(r, psi, indexing="ij")
        rho = R * np.sin(P)
        xN = R * np.cos(P)
        vals = np.asarray(f(rho, xN), dtype=float)
        _check_finite(vals)
        jac = R ** (N - 1) * np.sin(P) ** (N - 2)
        total = wr @ (vals * jac) @ wpsi
        return area * float(total), vals.size

    return _refine(level_sum, spec, "integrate_halfspace")


def integrate_boundary(g: Callable, dim, spec: QuadratureSpec | None = None) -> IntegralResult:
    """Integrate a radial ``g(rho)`` over the boundary ``R^{N-1}``."""
    spec = spec or QuadratureSpec()
    N = _as_dim(dim).N
    edges, tail = _radial_edges(spec)
    h0 = _step_for(spec.nodes_radial)
    area = sphere_area(N - 1)

    def level_sum(level):
        r, w = _panel_rule(edges, h0 / 2**level, tail)
        vals = np.asarray(g(r), dtype=float)
        _check_finite(vals)
        return area * float(np.sum(w * vals * r ** (N - 2))), r.size

    return _refine(level_sum, spec, "integrate_boundary")


@dataclass
class EnergyBreakdown:
    """Quadrature totals of a test function.

    For the pure bubble (``eps`` is then irrelevant) only ``K1..K3`` are
    filled; the cut-off weighted test function also carries ``K4`` for the
    exponent ``p``.  ``errors`` holds the quadrature error estimates.
    """

    K1: float
    K2: float
    K3: float
    dim: Dimension
    K4: float | None = None
    eps: float | None = None
    p: float | None = None
    errors: dict = field(default_factory=dict)
    converged: bool = True

    @property
    def A(self) -> float:
        d = self.dim
        return self.K1 / 2 - self.K2 / d.two_star - self.K3 / d.two_lower

    def A_lambda(self, lam: float) -> float:
        return lam ** (-(self.dim.N - 2) / 2.0) * self.A

    @property
    def identity_residual(self) -> float:
        """``K1 - K2 - K3``, which vanishes for the exact bubble."""
        return self.K1 - self.K2 - self.K3

    def as_dict(self) -> dict:
        out = {"N": self.dim.N, "K1": self.K1, "K2": self.K2, "K3": self.K3}
        if self.K4 is not None:
            out["K4"] = self.K4
        if self.eps is not None:
            out["eps"] = self.eps
        if self.p is not None:
            out["p"] = self.p
        out["A"] = self.A
        out["K1_minus_K2_minus_K3"] = self.identity_residual
        out["errors"] = dict(self.errors)
        out["converged"] = self.converged
        return out


def bubble_constants(dim, spec: QuadratureSpec | None = None, eps: float = 1.0) -> EnergyBreakdown:
    """``K1 = |grad U|^2``, ``K2 = |U|_{2*}^{2*}``, ``K3 = |U|_{2_*,bdry}^{2_*}`` for ``U = phi_{eps,1}``.

    The totals are scale invariant; ``eps`` only exists to check that.
    """
    d = _as_dim(dim)
    bp = BubbleParams(d, eps, 1.0)
    spec = (spec or QuadratureSpec()).with_(cluster_scale=eps)

    def grad2(rho, xN):
        gr, gz = bubble_gradient(bp, rho, xN)
        return gr * gr + gz * gz

    r1 = integrate_halfspace(grad2, d, spec)
    r2 = integrate_halfspace(lambda rho, xN: bubble_value(bp, rho, xN) ** d.two_star, d, spec)
    r3 = integrate_boundary(lambda rho: bubble_value(bp, rho, 0.0) ** d.two_lower, d, spec)
    return EnergyBreakdown(
        r1.value, r2.value, r3.value, d,
        errors={"K1": r1.error_estimate, "K2": r2.error_estimate, "K3": r3.error_estimate},
        converged=r1.converged and r2.converged and r3.converged,
    )
