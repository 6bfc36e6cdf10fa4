"""Fibering maps, the energy threshold and Sobolev quotients.

Along a ray ``t -> t*u`` the functional reduces to a scalar function of
four totals,

    g(t) = K1 t^2/2 - m K4 t^p/p - K2 t^{2*}/2* - K3 t^{2_*}/2_*,

with ``m = mu * lambda^{(N-2)(2-p)/4}`` (``m = 0`` gives ``f``).  Because
``2* - 2 = 2(2_* - 2)``, the critical point of ``f`` solves a quadratic in
``t^{2_*-2}``.  Comparing ``sup_t g`` for the cut-off test function with
``A = K1/2 - K2/2* - K3/2_*`` of the bubble is the compactness threshold
test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .bubble import BubbleParams, Dimension, _as_dim, bubble_gradient, bubble_value
from .quadrature import (
    EnergyBreakdown,
    QuadratureSpec,
    bubble_constants,
    integrate_boundary,
    integrate_halfspace,
)

__all__ = [
    "FunctionalParams",
    "FiberCurve",
    "NonUnimodalFiberError",
    "RegimeViolationError",
    "TrivialFunctionError",
    "fiber_value",
    "fiber_slope",
    "closed_form_t",
    "fiber_max",
    "threshold_A",
    "threshold_A_lambda",
    "ThresholdReport",
    "classify_regime",
    "expected_margin_order",
    "THRESHOLD_LADDERS",
    "MU_MODES",
    "verify_threshold",
    "bubble_theta",
    "sobolev_quotient",
]


class NonUnimodalFiberError(ValueError):
    pass


class RegimeViolationError(ValueError):
    pass


class TrivialFunctionError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class FunctionalParams:
    """``lambda > 0``, ``mu`` and the subcritical exponent ``2 < p < 2*``."""

    lam: float
    mu: float
    p: float
    dim: Dimension

    def __post_init__(self):
        object.__setattr__(self, "dim", _as_dim(self.dim))
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam!r}")
        if not (2.0 < self.p < self.dim.two_star):
            raise ValueError(f"p must lie in (2, {self.dim.two_star:g}), got {self.p!r}")

    @property
    def N(self) -> int:
        return self.dim.N

    @property
    def mu_weight(self) -> float:
        return self.mu * self.lam ** ((self.N - 2) * (2.0 - self.p) / 4.0)


@dataclass(frozen=True)
class FiberCurve:
    K1e: float
    K2e: float
    K3e: float
    dim: Dimension
    K4e: float = 0.0
    mu_weight: float = 0.0
    p: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "dim", _as_dim(self.dim))
        # K3e = 0 (no boundary term) is allowed as a degenerate check
        if not (self.K1e > 0 and self.K2e > 0 and self.K3e >= 0):
            raise ValueError("K1e, K2e must be positive and K3e nonnegative")
        if self.mu_weight != 0:
            if self.p is None:
                raise ValueError("p is required when mu_weight != 0")
            if not self.K4e > 0:
                raise ValueError("K4e must be positive when mu_weight != 0")

    @classmethod
    def from_breakdown(cls, e: EnergyBreakdown, mu_weight: float = 0.0) -> "FiberCurve":
        return cls(e.K1, e.K2, e.K3, e.dim, e.K4 or 0.0, mu_weight, e.p)

    def _exponents(self):
        d = self.dim
        return d.two_star, d.two_lower


def fiber_value(c: FiberCurve, t):
    """``g(t)``; with ``mu_weight = 0`` this is ``f(t)``."""
    t = np.asarray(t, dtype=float)
    s2, s1 = c._exponents()
    out = c.K1e * t**2 / 2 - c.K2e * t**s2 / s2 - c.K3e * t**s1 / s1
    if c.mu_weight != 0:
        out = out - c.mu_weight * c.K4e * t**c.p / c.p
    return out


def fiber_slope(c: FiberCurve, t):
    """``g'(t)/t``, whose sign changes locate the critical points."""
    t = np.asarray(t, dtype=float)
    s2, s1 = c._exponents()
    out = c.K1e - c.K2e * t ** (s2 - 2) - c.K3e * t ** (s1 - 2)
    if c.mu_weight != 0:
        out = out - c.mu_weight * c.K4e * t ** (c.p - 2)
    return out


def closed_form_t(c: FiberCurve) -> float:
    """Maximiser of ``f`` from the quadratic in ``s = t^{2_*-2}``.

    ``K2 s^2 + K3 s - K1 = 0``; the positive root is written as
    ``2 K1 / (K3 + sqrt(K3^2 + 4 K2 K1))`` to avoid cancellation.
    """
    if c.mu_weight != 0:
        raise ValueError("closed form needs mu_weight = 0")
    K1, K2, K3 = c.K1e, c.K2e, c.K3e
    if K1 == K2 + K3:
        # the discriminant is (K3 + 2 K2)^2 and the root is s = 1
        return 1.0
    s = 2.0 * K1 / (K3 + math.sqrt(K3 * K3 + 4.0 * K2 * K1))
    return s ** ((c.dim.N - 2) / 2.0)


def _count_sign_changes(c: FiberCurve, t_hi: float, n: int = 400) -> int:
    grid = np.geomspace(1e-6, t_hi, n)
    h = fiber_slope(c, grid)
    sgn = np.sign(h)
    sgn = sgn[sgn != 0]
    return int(np.count_nonzero(np.diff(sgn)))


def fiber_max(c: FiberCurve, t_tol: float = 1e-12):
    """Global maximum ``(t_star, g(t_star))`` over ``t > 0``.

    ``g'(t)/t`` starts at ``K1 > 0`` and tends to ``-inf``.  For
    ``mu_weight >= 0`` it is strictly decreasing, so its single zero is the
    maximiser; it is bracketed from the ``mu_weight = 0`` root and refined
    with Brent's method.  A negative ``mu_weight`` can create several
    critical points, which is reported as an error.
    """
    base = closed_form_t(FiberCurve(c.K1e, c.K2e, c.K3e, c.dim))
    t_hi = 4.0 * base
    while fiber_slope(c, t_hi) >= 0:
        t_hi *= 2.0
        if t_hi > 1e12:
            raise RuntimeError("could not bracket the fiber maximum")
    if c.mu_weight < 0:
        # past T the t^{2*-2} term beats K1 + |mu| K4 t^{p-2}, so every
        # critical point lies below it
        a = -c.mu_weight * c.K4e
        T = 1.01 * max(1.0, ((c.K1e + a) / c.K2e) ** (1.0 / (c.dim.two_star - c.p)))
        t_hi = max(t_hi, T)
    if c.mu_weight < 0 and _count_sign_changes(c, t_hi) != 1:
        raise NonUnimodalFiberError("non-unimodal fiber: several critical points")
    t_lo = 1e-6 * base
    while fiber_slope(c, t_lo) <= 0:
        t_lo *= 1e-3
        if t_lo < 1e-300:
            raise RuntimeError("could not bracket the fiber maximum")
    # absolute tolerance tied to the lower bracket: the root can sit far
    # below the mu = 0 maximiser when p is close to 2 and mu is large
    t_star = brentq(lambda t: float(fiber_slope(c, t)), t_lo, t_hi,
                    xtol=t_tol * t_lo, rtol=max(t_tol, 4 * np.finfo(float).eps), maxiter=500)
    return float(t_star), float(fiber_value(c, t_star))


def threshold_A(dim, spec: QuadratureSpec | None = None) -> float:
    return bubble_constants(dim, spec).A


def threshold_A_lambda(lam: float, dim, spec: QuadratureSpec | None = None, A: float | None = None) -> float:
    """``A_lambda = lambda^{-(N-2)/2} A``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    d = _as_dim(dim)
    if A is None:
        A = threshold_A(d, spec)
    return lam ** (-(d.N - 2) / 2.0) * A


# -- threshold verification --------------------------------------------------

MU_MODES = ("fixed", "eps_power")

# Ladders deep enough to reach the positive tail of each regime with the
# default cutoff; the crossover sits near eps = 0.02, 1e-4 and 0.009.
THRESHOLD_LADDERS = {
    "i": tuple(np.geomspace(0.1, 1e-4, 16)),
    "ii": tuple(np.geomspace(0.1, 1e-9, 21)),
    "iii": tuple(np.geomspace(0.1, 1e-5, 16)),
}


def classify_regime(fp: FunctionalParams, mu_mode: str = "fixed") -> str:
    """Which existence regime ``fp`` falls in: ``"i"``, ``"ii"`` or ``"iii"``.

    (i) N >= 4, mu > 0; (ii) N = 3, 4 < p < 6, mu > 0; (iii) N = 3,
    2 < p <= 4 with ``mu = eps^{-1/2}`` tied to the ladder.
    """
    if mu_mode not in MU_MODES:
        raise ValueError(f"mu_mode must be one of {MU_MODES}")
    N, p = fp.N, fp.p
    if mu_mode == "eps_power":
        if N == 3 and p <= 4:
            return "iii"
        raise RegimeViolationError("regime violation: mu = eps^-1/2 coupling is for N = 3, 2 < p <= 4")
    if not fp.mu > 0:
        raise RegimeViolationError("regime violation: the threshold inequality needs mu > 0")
    if N >= 4:
        return "i"
    if p > 4:
        return "ii"
    raise RegimeViolationError("regime violation: N = 3, p <= 4 needs large mu (use mu_mode='eps_power')")


def expected_margin_order(fp: FunctionalParams, regime: str) -> float | None:
    """Leading order of ``A - sup g`` in eps; None where it carries a log."""
    N, p = fp.N, fp.p
    if regime == "i":
        return N - (N - 2) * p / 2.0
    if regime == "ii":
        return 3.0 - p / 2.0
    # regime iii: eps^{(5-p)/2} for 3 < p <= 4, eps|ln eps| at p = 3, eps^{(p-1)/2} below
    if p > 3:
        return (5.0 - p) / 2.0
    if p < 3:
        return (p - 1.0) / 2.0
    return None


@dataclass
class ThresholdRung:
    eps: float
    mu: float
    t_star: float
    sup_g: float
    margin: float
    totals: dict = field(default_factory=dict)


@dataclass
class ThresholdReport:
    regime: str
    N: int
    lam: float
    mu_mode: str
    mu: float
    p: float
    A: float
    A_lambda: float
    ladder: list
    fitted_order: float | None
    expected_order: float | None
    positive_from: float | None
    quadrature_errors: dict = field(default_factory=dict)

    @property
    def all_positive(self) -> bool:
        return all(r.margin > 0 for r in self.ladder)

    @property
    def failed(self) -> bool:
        """True when no rung has a positive margin."""
        return not any(r.margin > 0 for r in self.ladder)

    @property
    def tail_positive(self) -> bool:
        """Margins positive on every rung from some eps downwards."""
        return self.positive_from is not None

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "N": self.N,
            "lambda": self.lam,
            "mu_mode": self.mu_mode,
            "mu": self.mu,
            "p": self.p,
            "A": self.A,
            "A_lambda": self.A_lambda,
            "ladder": [{"eps": r.eps, "mu": r.mu, "t_star": r.t_star, "sup_g": r.sup_g, "margin": r.margin}
                       for r in self.ladder],
            "fitted_order": self.fitted_order,
            "expected_order": self.expected_order,
            "positive_from": self.positive_from,
            "all_positive": self.all_positive,
            "status": "threshold verification failed" if self.failed else "ok",
            "quadrature_errors": self.quadrature_errors,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def verify_threshold(fp: FunctionalParams, eps_ladder: Sequence[float], mu_mode: str = "fixed",
                     spec: QuadratureSpec | None = None, order_below: float | None = None,
                     tail_rungs: int | None = 5) -> ThresholdReport:
    """Margins ``A - sup_t g_eps(t)`` along a decreasing eps ladder.

    ``g_eps`` is built from the quadrature totals of the cut-off test
    function.  The empirical order is fitted on the positive tail of the
    ladder, optionally restricted to rungs with ``eps <= order_below`` and
    to the ``tail_rungs`` smallest of those.  Near the eps where the margin
    changes sign its log-log slope is meaningless, hence the window.
    """
    from .asymptotics import _loglog_order, cutoff_spec, test_function_totals

    regime = classify_regime(fp, mu_mode)
    eps_ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    A = threshold_A(fp.dim)
    scale = fp.lam ** ((fp.N - 2) * (2.0 - fp.p) / 4.0)
    rungs = []
    errs = {}
    for eps in eps_ladder:
        tot = test_function_totals(eps, fp.dim, fp.p, spec or cutoff_spec(eps))
        mu = eps ** -0.5 if mu_mode == "eps_power" else fp.mu
        curve = FiberCurve.from_breakdown(tot, mu * scale)
        t_star, sup_g = fiber_max(curve)
        rungs.append(ThresholdRung(eps, mu, t_star, sup_g, A - sup_g,
                                   {"K1": tot.K1, "K2": tot.K2, "K3": tot.K3, "K4": tot.K4}))
        errs[repr(eps)] = max(tot.errors.values())
    # smallest eps from which every smaller rung is positive
    positive_from = None
    for r in reversed(rungs):
        if r.margin > 0:
            positive_from = r.eps
        else:
            break
    order = None
    tail = [r for r in rungs if positive_from is not None and r.eps <= positive_from]
    if order_below is not None:
        tail = [r for r in tail if r.eps <= order_below]
    if tail_rungs is not None:
        tail = tail[-tail_rungs:]
    if len(tail) >= 3:
        e = np.array([r.eps for r in tail])
        m = np.array([r.margin for r in tail])
        order = _loglog_order(e, m)[0]
    return ThresholdReport(
        regime=regime, N=fp.N, lam=fp.lam, mu_mode=mu_mode, mu=fp.mu, p=fp.p,
        A=A, A_lambda=threshold_A_lambda(fp.lam, fp.dim, A=A), ladder=rungs,
        fitted_order=order, expected_order=expected_margin_order(fp, regime),
        positive_from=positive_from, quadrature_errors=errs,
    )


# -- Sobolev quotients -------------------------------------------------------

def _bubble_norms(bp: BubbleParams, spec: QuadratureSpec | None):
    d = bp.dim
    spec = (spec or QuadratureSpec()).with_(cluster_scale=bp.eps)

    def grad2(rho, xN):
        gr, gz = bubble_gradient(bp, rho, xN)
        return gr * gr + gz * gz

    g = integrate_halfspace(grad2, d, spec).value
    v = integrate_halfspace(lambda r, z: bubble_value(bp, r, z) ** d.two_star, d, spec).value
    b = integrate_boundary(lambda r: bubble_value(bp, r, 0.0) ** d.two_lower, d, spec).value
    return g, v, b


def bubble_theta(bp: BubbleParams, spec: QuadratureSpec | None = None) -> float:
    """The weight ``theta`` for which ``phi_{eps,tau}`` is extremal.

    ``theta = a/(a + tau b)`` with ``a = |phi|_{2*}^{2*-2}`` and
    ``b = |phi|_{2_*,bdry}^{2_*-2}``; balancing the two nonlinear terms of
    the Euler-Lagrange equation against the boundary condition gives this
    ratio.
    """
    d = bp.dim
    _, v, b = _bubble_norms(bp, spec)
    a = v ** ((d.two_star - 2) / d.two_star)
    bb = b ** ((d.two_lower - 2) / d.two_lower)
    return a / (a + bp.tau * bb)


def _quotient(grad2, vol, bdry, theta, d: Dimension):
    den = theta * vol ** (2.0 / d.two_star) + (1.0 - theta) * bdry ** (2.0 / d.two_lower)
    if den == 0:
        raise TrivialFunctionError("trivial function: zero denominator")
    return grad2 / den


def sobolev_quotient(u, theta: float, weighted: bool = False, spec: QuadratureSpec | None = None) -> float:
    """``|grad u|^2 / (theta |u|_{2*}^2 + (1-theta) |u|_{2_*,bdry}^2)``.

    ``u`` may be

    * a :class:`BubbleParams`: the bubble itself when ``weighted`` is false,
      or the cut-off test function ``K^{-1/2} cutoff U_eps`` with all
      norms K-weighted when it is true;
    * any object with a ``norm_totals(weighted)`` method returning
      ``(grad^2, int |u|^{2*}, int_bdry |u|^{2_*})``, such as a solver field.
    """
    if not (0 < theta <= 1):
        raise ValueError("theta must lie in (0, 1]")
    if isinstance(u, BubbleParams):
        d = u.dim
        if weighted:
            from .asymptotics import cutoff_spec, test_function_totals

            tot = test_function_totals(u.eps, d, spec=spec or cutoff_spec(u.eps))
            return _quotient(tot.K1, tot.K2, tot.K3, theta, d)
        return _quotient(*_bubble_norms(u, spec), theta, d)
    g, v, b = u.norm_totals(weighted)
    return _quotient(g, v, b, theta, _as_dim(u.dim))
