"""Small-eps behaviour of the weighted norms of the cut-off test function.

``Ut_eps = K^{-1/2} * cutoff * U_eps`` concentrates at the origin as
``eps -> 0``.  This module computes its four weighted totals by quadrature,
the leading expansion coefficients by direct quadrature of their defining
integrals, and fits ladders of totals against power/log models so that the
two can be compared.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bubble import (
    BubbleParams,
    Dimension,
    _as_dim,
    bubble_value,
    cutoff,
    scaled_test_gradient,
)
from .quadrature import (
    EnergyBreakdown,
    QuadratureSpec,
    integrate_boundary,
    integrate_halfspace,
    sphere_area,
)

__all__ = [
    "DEFAULT_LADDER",
    "ExpansionRegimeError",
    "cutoff_spec",
    "weighted_energy",
    "critical_volume_norm",
    "trace_norm",
    "subcritical_norm",
    "test_function_totals",
    "coefficient_C1",
    "coefficient_C1_by_parts",
    "coefficient_alpha",
    "coefficient_beta",
    "coefficient_gamma",
    "gamma_closed_form",
    "theta",
    "log_coefficient_N4",
    "ExpansionCoefficients",
    "expansion_coefficients",
    "ExpansionModel",
    "EPS2",
    "EPS2_LOG",
    "EPS_POWER",
    "EPS_POWER_LOG",
    "ExpansionFit",
    "fit_expansion",
    "write_ladder_csv",
    "ExpansionCheck",
    "ExpansionReport",
    "verify_expansions",
]

DEFAULT_LADDER = (0.2, 0.14, 0.1, 0.07, 0.05, 0.035, 0.025)


class ExpansionRegimeError(ValueError):
    pass


def _check_eps(eps):
    if not (0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 0.5], got {eps!r}")


def cutoff_spec(eps: float, rel_tol: float = 1e-10) -> QuadratureSpec:
    """Quadrature layout for integrands supported in ``|x| <= 2``.

    Radial panels are split geometrically from ``eps`` up to the cutoff
    band ``[1, 2]``, so each panel sees at most a fixed change in scale.
    """
    breaks = [1.0]
    b = eps
    while b < 1.0:
        breaks.append(b)
        b *= 4.0
    return QuadratureSpec(
        radial_truncation=2.0,
        cluster_scale=eps,
        radial_breaks=tuple(sorted(breaks)),
        rel_tol=rel_tol,
    )


def _params(eps, dim):
    _check_eps(eps)
    return BubbleParams(_as_dim(dim), eps, 1.0)


def _energy_result(eps, dim, spec):
    bp = _params(eps, dim)

    def f(rho, xN):
        gr, gz = scaled_test_gradient(bp, rho, xN)
        return gr * gr + gz * gz

    return integrate_halfspace(f, bp.dim, spec or cutoff_spec(eps))


def _volume_result(eps, q, dim, spec):
    # int K |Ut|^q = int K^{1-q/2} (cutoff U)^q
    bp = _params(eps, dim)
    power = 1.0 - q / 2.0

    def f(rho, xN):
        w = cutoff(rho, xN) * bubble_value(bp, rho, xN)
        return np.exp(power * (rho**2 + xN**2) / 4.0) * w**q

    return integrate_halfspace(f, bp.dim, spec or cutoff_spec(eps))


def _trace_result(eps, dim, spec):
    bp = _params(eps, dim)
    q = bp.dim.two_lower
    power = 1.0 - q / 2.0

    def g(rho):
        w = cutoff(rho, 0.0) * bubble_value(bp, rho, 0.0)
        return np.exp(power * rho**2 / 4.0) * w**q

    return integrate_boundary(g, bp.dim, spec or cutoff_spec(eps))


def weighted_energy(eps: float, dim, spec: QuadratureSpec | None = None) -> float:
    """``int K |grad Ut_eps|^2`` over the half-space."""
    return _energy_result(eps, dim, spec).value


def critical_volume_norm(eps: float, dim, spec: QuadratureSpec | None = None) -> float:
    """``int K |Ut_eps|^{2*}`` over the half-space."""
    return _volume_result(eps, _as_dim(dim).two_star, dim, spec).value


def trace_norm(eps: float, dim, spec: QuadratureSpec | None = None) -> float:
    """``int K(x',0) |Ut_eps|^{2_*}`` over the boundary."""
    return _trace_result(eps, dim, spec).value


def _check_p(p, d: Dimension):
    if not (2.0 < p < d.two_star):
        raise ValueError(f"p must lie in (2, {d.two_star:g}), got {p!r}")


def subcritical_norm(eps: float, p: float, dim, spec: QuadratureSpec | None = None) -> float:
    """``int K |Ut_eps|^p`` over the half-space, ``2 < p < 2*``."""
    _check_p(p, _as_dim(dim))
    return _volume_result(eps, p, dim, spec).value


def test_function_totals(eps: float, dim, p: float | None = None,
                         spec: QuadratureSpec | None = None) -> EnergyBreakdown:
    """All weighted totals of ``Ut_eps`` with their error estimates."""
    d = _as_dim(dim)
    r1 = _energy_result(eps, d, spec)
    r2 = _volume_result(eps, d.two_star, d, spec)
    r3 = _trace_result(eps, d, spec)
    results = {"K1": r1, "K2": r2, "K3": r3}
    K4 = None
    if p is not None:
        _check_p(p, d)
        r4 = _volume_result(eps, p, d, spec)
        results["K4"] = r4
        K4 = r4.value
    return EnergyBreakdown(
        r1.value, r2.value, r3.value, d, K4=K4, eps=eps, p=p,
        errors={k: r.error_estimate for k, r in results.items()},
        converged=all(r.converged for r in results.values()),
    )


test_function_totals.__test__ = False


# -- expansion coefficients --------------------------------------------------

def _unit_denominator(d: Dimension, rho, xN):
    return 1.0 + rho**2 + (xN + d.x0) ** 2


def coefficient_C1(dim, spec: QuadratureSpec | None = None) -> float:
    """``int (|y'|^2 + yN (yN + x0)) / D^{N-1}`` over the half-space, ``N >= 5``."""
    d = _as_dim(dim)
    if d.N < 5:
        raise ExpansionRegimeError("expansion regime violation: C1 diverges for N < 5")

    def f(rho, xN):
        return (rho**2 + xN * (xN + d.x0)) / _unit_denominator(d, rho, xN) ** (d.N - 1)

    return integrate_halfspace(f, d, spec).value


def coefficient_C1_by_parts(dim, spec: QuadratureSpec | None = None) -> float:
    """Same constant as :func:`coefficient_C1` after an integration by parts.

    The numerator is ``y . grad(D)/2``, so the integrand equals
    ``-y . grad(D^{2-N}) / (2(N-2))``.  Since ``y . n = 0`` on ``yN = 0``
    no boundary term survives and ``C1 = N/(2(N-2)) int D^{2-N}``.
    """
    d = _as_dim(dim)
    if d.N < 5:
        raise ExpansionRegimeError("expansion regime violation: C1 diverges for N < 5")
    val = integrate_halfspace(lambda rho, xN: _unit_denominator(d, rho, xN) ** (2.0 - d.N), d, spec).value
    return d.N / (2.0 * (d.N - 2)) * val


def coefficient_alpha(dim, spec: QuadratureSpec | None = None) -> float:
    d = _as_dim(dim)
    if d.N < 5:
        raise ExpansionRegimeError("expansion regime violation: alpha needs N >= 5")
    return (d.N - 2) * d.kN**2 / 2.0 * coefficient_C1(d, spec)


def coefficient_beta(dim, spec: QuadratureSpec | None = None) -> float:
    d = _as_dim(dim)

    def f(rho, xN):
        return (rho**2 + xN**2) / _unit_denominator(d, rho, xN) ** d.N

    val = integrate_halfspace(f, d, spec).value
    return d.kN**d.two_star / (2.0 * (d.N - 2)) * val


def coefficient_gamma(dim, spec: QuadratureSpec | None = None) -> float:
    d = _as_dim(dim)
    if d.N < 4:
        raise ExpansionRegimeError("expansion regime violation: gamma needs N >= 4")
    a2 = 1.0 + d.x0**2
    val = integrate_boundary(lambda rho: rho**2 / (a2 + rho**2) ** (d.N - 1), d, spec).value
    return d.kN**d.two_lower / (4.0 * (d.N - 2)) * val


def gamma_closed_form(dim) -> float:
    """:func:`coefficient_gamma` through the Beta function.

    With ``m = N-1`` and ``a^2 = 1 + x0^2``,
    ``int_{R^m} |y|^2/(a^2+|y|^2)^m = |S^{m-1}| a^{2-m} B((m+2)/2, (m-2)/2) / 2``.
    """
    d = _as_dim(dim)
    if d.N < 4:
        raise ExpansionRegimeError("expansion regime violation: gamma needs N >= 4")
    m = d.N - 1
    a = math.sqrt(1.0 + d.x0**2)
    beta = math.gamma((m + 2) / 2) * math.gamma((m - 2) / 2) / math.gamma(m)
    integral = sphere_area(m) * a ** (2 - m) * beta / 2.0
    return d.kN**d.two_lower / (4.0 * (d.N - 2)) * integral


def theta(dim, p: float) -> float:
    """Order ``N - (N-2)p/2`` of the subcritical norm."""
    d = _as_dim(dim)
    _check_p(p, d)
    return d.N - (d.N - 2) * p / 2.0


def log_coefficient_N4() -> float:
    """``k_4^2 |S^3| / 2 = 8 pi^2``, the ``eps^2 |ln eps|`` coefficient for N=4."""
    d = Dimension(4)
    return d.kN**2 * sphere_area(4) / 2.0


@dataclass
class ExpansionCoefficients:
    N: int
    alpha_N: float | None
    beta_N: float
    gamma_N: float | None
    C1N: float | None
    theta_N: float | None


def expansion_coefficients(dim, p: float | None = None, spec: QuadratureSpec | None = None):
    """Every coefficient defined for this dimension; the others are None."""
    d = _as_dim(dim)
    C1 = coefficient_C1(d, spec) if d.N >= 5 else None
    return ExpansionCoefficients(
        N=d.N,
        alpha_N=(d.N - 2) * d.kN**2 / 2.0 * C1 if C1 is not None else None,
        beta_N=coefficient_beta(d, spec),
        gamma_N=coefficient_gamma(d, spec) if d.N >= 4 else None,
        C1N=C1,
        theta_N=theta(d, p) if p is not None else None,
    )


# -- ladder fits -------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionModel:
    """Leading term ``eps^q`` or ``eps^q |ln eps|``."""

    q: float
    log: bool = False

    @property
    def name(self) -> str:
        if self.q == 2:
            return "EPS2_LOG" if self.log else "EPS2"
        return f"EPS_POWER_LOG({self.q:g})" if self.log else f"EPS_POWER({self.q:g})"

    def basis(self, eps):
        eps = np.asarray(eps, dtype=float)
        out = eps**self.q
        return out * np.abs(np.log(eps)) if self.log else out


EPS2 = ExpansionModel(2.0)
EPS2_LOG = ExpansionModel(2.0, True)


def EPS_POWER(q: float) -> ExpansionModel:
    return ExpansionModel(float(q))


def EPS_POWER_LOG(q: float) -> ExpansionModel:
    return ExpansionModel(float(q), True)


@dataclass
class ExpansionFit:
    """Least-squares fit of ``value - limit`` on a ladder of eps values.

    ``fitted_coefficient`` multiplies the model's leading basis function;
    ``correction`` lists the coefficients of the extra powers passed as
    ``corrections``.  ``fitted_order`` is the slope of
    ``log|value - limit|`` against ``log eps``.  ``residual`` is the RMS
    misfit relative to the RMS of ``value - limit``.
    """

    eps_ladder: list
    lhs_values: list
    limit: float
    model: ExpansionModel
    fitted_coefficient: float
    fitted_order: float
    residual: float
    raw_order: float = float("nan")
    corrections: tuple = ()
    correction: list = field(default_factory=list)
    condition_number: float = 1.0
    mismatch_tol: float = 1e-2
    predictions: list = field(default_factory=list)

    @property
    def ill_conditioned(self) -> bool:
        return self.condition_number > 1e8

    @property
    def model_mismatch(self) -> bool:
        return self.residual > self.mismatch_tol

    def local_coefficients(self) -> np.ndarray:
        """``(value - limit)/basis`` at each rung, before any correction."""
        e = np.asarray(self.eps_ladder)
        return (np.asarray(self.lhs_values) - self.limit) / self.model.basis(e)

    def as_dict(self) -> dict:
        return {
            "model": self.model.name,
            "limit": self.limit,
            "fitted_coefficient": self.fitted_coefficient,
            "fitted_order": self.fitted_order,
            "raw_order": self.raw_order,
            "residual": self.residual,
            "corrections": [{"basis": c, "coefficient": v} for c, v in zip(self.corrections, self.correction)],
            "condition_number": self.condition_number,
            "ill_conditioned": self.ill_conditioned,
            "model_mismatch": self.model_mismatch,
            "ladder": [
                {"eps": e, "value": v, "model_prediction": m}
                for e, v, m in zip(self.eps_ladder, self.lhs_values, self.predictions)
            ],
        }


def _correction_basis(spec, eps):
    # "q" -> eps^q, "q:log" -> eps^q |ln eps|
    if isinstance(spec, str) and spec.endswith(":log"):
        return ExpansionModel(float(spec[:-4]), True).basis(eps)
    return ExpansionModel(float(spec)).basis(eps)


def _loglog_order(eps, y):
    with np.errstate(divide="ignore"):
        ly = np.log(np.abs(y))
    ok = np.isfinite(ly)
    if ok.sum() < 3:
        return float("nan"), float("nan")
    le = np.log(eps[ok])
    raw = float(np.polyfit(le, ly[ok], 1)[0])
    M = np.column_stack([np.ones_like(le), le, eps[ok]])
    coef, *_ = np.linalg.lstsq(M, ly[ok], rcond=None)
    return float(coef[1]), raw


def fit_expansion(eps_ladder: Sequence[float], values: Sequence[float], model: ExpansionModel,
                  limit: float = 0.0, corrections: Sequence = (), mismatch_tol: float = 1e-2) -> ExpansionFit:
    """Fit ``value = limit + c*basis(eps) + sum_k d_k*eps^{q_k}``.

    ``corrections`` lists higher-order terms to absorb alongside the
    leading one, e.g. ``(3,)`` for an ``eps^3`` remainder or ``("2",)``
    under a log model.  A string ``"q:log"`` adds ``eps^q |ln eps|``.
    """
    eps = np.asarray(eps_ladder, dtype=float)
    vals = np.asarray(values, dtype=float)
    if eps.ndim != 1 or eps.size != vals.size:
        raise ValueError("ladder and values must be 1-D and of equal length")
    if eps.size < 5:
        raise ValueError("ladder needs at least 5 rungs")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("ladder must be strictly decreasing")
    if eps[0] / eps[-1] < 4.0 - 1e-12:
        raise ValueError("ladder must span at least a factor 4 in eps")
    y = vals - limit
    cols = [model.basis(eps)] + [_correction_basis(c, eps) for c in corrections]
    M = np.column_stack(cols)
    # scale columns so the condition number reflects the shape of the basis
    norms = np.linalg.norm(M, axis=0)
    coef, *_ = np.linalg.lstsq(M / norms, y, rcond=None)
    coef = coef / norms
    cond = float(np.linalg.cond(M / norms))
    pred = M @ coef
    scale = math.sqrt(float(np.mean(y * y))) or 1.0
    resid = math.sqrt(float(np.mean((y - pred) ** 2))) / scale
    order, raw = _loglog_order(eps, y)
    return ExpansionFit(
        eps_ladder=[float(e) for e in eps],
        lhs_values=[float(v) for v in vals],
        limit=float(limit),
        model=model,
        fitted_coefficient=float(coef[0]),
        fitted_order=order,
        residual=resid,
        raw_order=raw,
        corrections=tuple(corrections),
        correction=[float(c) for c in coef[1:]],
        condition_number=cond,
        mismatch_tol=mismatch_tol,
        predictions=[float(limit + v) for v in pred],
    )


def write_ladder_csv(fit: ExpansionFit, path) -> None:
    """Write ``eps, value, model_prediction`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "value", "model_prediction"])
        for e, v, m in zip(fit.eps_ladder, fit.lhs_values, fit.predictions):
            w.writerow([repr(e), repr(v), repr(m)])


# -- per-dimension verification ----------------------------------------------

@dataclass
class ExpansionCheck:
    """One ladder fit compared against an independent reference.

    ``kind`` is ``"coefficient"`` (relative error of the fitted leading
    coefficient) or ``"order"`` (absolute error of the log-log slope).
    Checks with ``asserted`` false are reported but do not decide
    pass/fail.
    """

    name: str
    kind: str
    fit: ExpansionFit
    measured: float
    reference: float
    tol: float
    asserted: bool = True

    @property
    def error(self) -> float:
        if self.kind == "coefficient":
            return abs(self.measured - self.reference) / abs(self.reference)
        return abs(self.measured - self.reference)

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "measured": self.measured,
            "reference": self.reference,
            "error": self.error,
            "tol": self.tol,
            "passed": self.passed,
            "asserted": self.asserted,
            "fit": self.fit.as_dict(),
        }


@dataclass
class ExpansionReport:
    N: int
    p: float | None
    eps_ladder: list
    limits: dict
    coefficients: ExpansionCoefficients
    checks: list
    quadrature_errors: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def check(self, name: str) -> ExpansionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        co = self.coefficients
        return {
            "N": self.N,
            "p": self.p,
            "eps_ladder": list(self.eps_ladder),
            "limits": dict(self.limits),
            "coefficients": {"alpha_N": co.alpha_N, "beta_N": co.beta_N, "gamma_N": co.gamma_N,
                             "C1N": co.C1N, "theta_N": co.theta_N},
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
            "quadrature_errors": self.quadrature_errors,
        }


def verify_expansions(dim, p: float | None = None, eps_ladder: Sequence[float] = DEFAULT_LADDER,
                      spec: QuadratureSpec | None = None) -> ExpansionReport:
    """Fit the ladder of test-function totals and compare with the coefficients.

    Correction terms absorb the next orders so that the default ladder,
    whose rungs are not very small, still pins the leading coefficient:
    ``eps^3, eps^4`` for ``N >= 5``, ``eps^3`` for the ``N = 4`` volume and
    trace norms and ``eps^2, eps^3`` under the ``eps^2 |ln eps|`` energy
    model for ``N = 4``.  In ``N = 3`` only orders are asserted.
    """
    from .quadrature import bubble_constants

    d = _as_dim(dim)
    N = d.N
    if p is not None:
        _check_p(p, d)
    eps = [float(e) for e in eps_ladder]
    limit = bubble_constants(d)
    tots = [test_function_totals(e, d, p, spec or cutoff_spec(e)) for e in eps]
    coeffs = expansion_coefficients(d, p)
    K1 = [t.K1 for t in tots]
    K2 = [t.K2 for t in tots]
    K3 = [t.K3 for t in tots]
    checks = []
    if N == 3:
        f = fit_expansion(eps, K1, EPS_POWER(1.0), limit.K1)
        checks.append(ExpansionCheck("energy_order", "order", f, f.fitted_order, 1.0, 0.15))
        f = fit_expansion(eps, K3, EPS2_LOG, limit.K3, (2, 3))
        # slope of eps^2 |ln eps| itself over the same ladder
        ref = _loglog_order(np.asarray(eps), EPS2_LOG.basis(np.asarray(eps)))[0]
        checks.append(ExpansionCheck("trace_order", "order", f, f.fitted_order, ref, 0.15))
        f = fit_expansion(eps, K2, EPS2, limit.K2, (3, 4))
        checks.append(ExpansionCheck("beta", "coefficient", f, -f.fitted_coefficient, coeffs.beta_N, 0.05,
                                     asserted=False))
    else:
        if N == 4:
            f = fit_expansion(eps, K1, EPS2_LOG, limit.K1, (2, 3))
            checks.append(ExpansionCheck("energy_log_coefficient", "coefficient", f, f.fitted_coefficient,
                                         log_coefficient_N4(), 0.10))
            corr = (3,)
        else:
            corr = (3, 4)
            f = fit_expansion(eps, K1, EPS2, limit.K1, corr)
            checks.append(ExpansionCheck("alpha", "coefficient", f, f.fitted_coefficient, coeffs.alpha_N, 0.05))
        f = fit_expansion(eps, K2, EPS2, limit.K2, corr)
        checks.append(ExpansionCheck("beta", "coefficient", f, -f.fitted_coefficient, coeffs.beta_N, 0.05))
        f = fit_expansion(eps, K3, EPS2, limit.K3, corr)
        checks.append(ExpansionCheck("gamma", "coefficient", f, -f.fitted_coefficient, coeffs.gamma_N, 0.05))
    if p is not None:
        th = theta(d, p)
        f = fit_expansion(eps, [t.K4 for t in tots], EPS_POWER(th))
        checks.append(ExpansionCheck("subcritical_order", "order", f, f.fitted_order, th, 0.10,
                                     asserted=N >= 4))
    errs = {repr(e): max(t.errors.values()) for e, t in zip(eps, tots)}
    return ExpansionReport(N, p, eps, {"K1": limit.K1, "K2": limit.K2, "K3": limit.K3},
                           coeffs, checks, errs)
