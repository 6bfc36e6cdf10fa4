"""Command line front-end: one subcommand per verification.

Every run prints its result to stdout (JSON by default) and, when an output
path is given or ``CRITNEUMANN_OUTPUT_DIR`` is set, writes the same result
to a file there.  Exit status: 0 when the checks pass, 2 when the
computation ran but a check failed, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotics import DEFAULT_LADDER, verify_expansions
from .bubble import BubbleParams, Dimension
from .landscape import (
    MU_MODES,
    THRESHOLD_LADDERS,
    FunctionalParams,
    RegimeViolationError,
    bubble_theta,
    classify_regime,
    sobolev_quotient,
    threshold_A_lambda,
    verify_threshold,
)
from .quadrature import bubble_constants
from .solver import (
    AnalyticField,
    Grid,
    SolverConfig,
    hardy_check,
    load_field,
    mountain_pass_solve,
    nonexistence_certificate,
    pohozaev_report,
    random_smooth_field,
    rayleigh_min,
    rayleigh_quotient,
    save_field,
)

OUTPUT_ENV = "CRITNEUMANN_OUTPUT_DIR"
SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
SUBCOMMANDS = ("constants", "expansions", "threshold", "quotient", "solve", "pohozaev", "hardy", "eigen")

# acceptance tolerances used for the pass/fail decisions
IDENTITY_TOL = 1e-6
ORDER_TOL = 0.15
POHOZAEV_TOL = 0.02
QUOTIENT_TOL = 0.01


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    dim: int | None = None
    lam: float = 1.0
    mu: float = 1.0
    p: float | None = None
    eps_ladder: list | None = None
    output_path: str | None = None
    format: str = "json"
    options: dict = field(default_factory=dict)

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in ("json", "csv"):
            raise UsageError("format must be json or csv")
        if self.subcommand != "pohozaev":
            if self.dim is None:
                raise UsageError("--dim is required")
            if self.dim < 3:
                raise UsageError("invalid dimension: N must be >= 3")
        if self.p is not None and self.dim is not None:
            d = Dimension(self.dim)
            if not 2.0 < self.p < d.two_star:
                raise UsageError(f"p must lie in (2, {d.two_star:g}) for N = {self.dim}")
        if self.subcommand in ("threshold", "solve") and self.p is None:
            raise UsageError(f"{self.subcommand} needs --p")
        if not self.lam > 0:
            raise UsageError("lambda must be positive")
        if self.eps_ladder is not None:
            e = self.eps_ladder
            if any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
                raise UsageError("eps ladder must be positive and strictly decreasing")

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "dim": self.dim,
            "lambda": self.lam,
            "mu": self.mu,
            "p": self.p,
            "eps_ladder": self.eps_ladder,
            "format": self.format,
            "options": dict(sorted(self.options.items())),
        }


@dataclass
class Outcome:
    payload: dict
    passed: bool
    tables: dict = field(default_factory=dict)  # name -> (header, rows)


def _clean(obj):
    # JSON-safe and deterministic: numpy scalars to Python, NaN/inf to None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _flat_rows(d: dict, prefix: str = ""):
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flat_rows(v, key + ".")
        elif not isinstance(v, list):
            yield [key, v]


# -- subcommands ---------------------------------------------------------------

def _constants(cfg: RunConfig) -> Outcome:
    e = bubble_constants(cfg.dim)
    N = cfg.dim
    rel = abs(e.identity_residual) / e.K1
    A_direct = e.K2 / N + e.K3 / (2.0 * (N - 1))
    out = e.as_dict()
    out.update({"A_from_K2_K3": A_direct, "relative_identity_residual": rel, "tolerance": IDENTITY_TOL})
    passed = rel <= IDENTITY_TOL and e.A > 0 and e.converged
    return Outcome(out, passed)


def _expansions(cfg: RunConfig) -> Outcome:
    rep = verify_expansions(cfg.dim, cfg.p, cfg.eps_ladder or DEFAULT_LADDER)
    tables = {
        c.name: (["eps", "value", "model_prediction"],
                 list(zip(c.fit.eps_ladder, c.fit.lhs_values, c.fit.predictions)))
        for c in rep.checks
    }
    return Outcome(rep.as_dict(), rep.passed, tables)


def _threshold(cfg: RunConfig) -> Outcome:
    mode = cfg.options.get("mu_mode", "fixed")
    fp = FunctionalParams(cfg.lam, cfg.mu, cfg.p, cfg.dim)
    try:
        regime = classify_regime(fp, mode)
    except RegimeViolationError as exc:
        raise UsageError(str(exc)) from exc
    ladder = cfg.eps_ladder or list(THRESHOLD_LADDERS[regime])
    rep = verify_threshold(fp, ladder, mode)
    order_ok = rep.expected_order is None or (
        rep.fitted_order is not None and abs(rep.fitted_order - rep.expected_order) <= ORDER_TOL)
    out = rep.as_dict()
    out["order_tol"] = ORDER_TOL
    out["order_ok"] = order_ok
    rows = [(r.eps, r.mu, r.t_star, r.sup_g, r.margin) for r in rep.ladder]
    return Outcome(out, rep.tail_positive and order_ok,
                   {"ladder": (["eps", "mu", "t_star", "sup_g", "margin"], rows)})


def _quotient(cfg: RunConfig) -> Outcome:
    eps = cfg.options.get("eps", 0.025)
    tau = cfg.options.get("tau", 1.0)
    bp = BubbleParams(cfg.dim, eps, tau)
    th = bubble_theta(bp)
    q = sobolev_quotient(bp, th)
    q_ref = sobolev_quotient(BubbleParams(cfg.dim, 1.0, tau), th)
    drift = abs(q - q_ref) / q_ref
    out = {"N": cfg.dim, "eps": eps, "tau": tau, "theta": th, "quotient": q,
           "quotient_eps1": q_ref, "eps_drift": drift, "eps_drift_tol": 1e-7}
    passed = drift <= 1e-7
    if cfg.options.get("weighted"):
        if tau != 1.0:
            raise UsageError("the weighted quotient uses the test function, which needs tau = 1")
        qK = sobolev_quotient(bp, th, weighted=True)
        rel = abs(qK - q) / q
        out.update({"weighted_quotient": qK, "weighted_relative_difference": rel,
                    "weighted_tol": QUOTIENT_TOL})
        passed = passed and rel <= QUOTIENT_TOL
    return Outcome(out, passed)


def _grid_from(opts: dict) -> Grid:
    n = opts.get("n", 128)
    R = opts.get("R", 8.0)
    return Grid(R, R, n, n, opts.get("grading", 8.0))


def _solve(cfg: RunConfig) -> Outcome:
    o = cfg.options
    fp = FunctionalParams(cfg.lam, cfg.mu, cfg.p, cfg.dim)
    grid = _grid_from(o)
    scfg = SolverConfig(max_outer=o.get("max_outer", 5000), grad_tol=o.get("grad_tol", 1e-6))
    res = mountain_pass_solve(fp, grid, scfg, eps0=o.get("eps0", 0.1))
    A_lam = threshold_A_lambda(cfg.lam, cfg.dim)
    out = {"N": cfg.dim, "lambda": cfg.lam, "mu": cfg.mu, "p": cfg.p, "grid": grid.as_dict(),
           "A_lambda": A_lam, "solver": res.diagnostics(),
           "initial_level": res.levels[0], "initial_l2": res.l2_norms[0], "final_l2": res.l2_norms[-1]}
    tables = {"history": (["iteration", "level", "grad_norm", "l2_norm"],
                          [(i, a, b, c) for i, (a, b, c) in
                           enumerate(zip(res.levels, res.grad_norms, res.l2_norms))])}
    if o.get("save"):
        save_field(o["save"], res.u, fp, {"level": res.level, "converged": res.converged})
        out["saved_field"] = str(o["save"])
    if cfg.mu <= 0:
        cert = nonexistence_certificate(res.u, fp)
        out["certificate"] = cert.as_dict()
        out["level_minus_A_lambda"] = res.level - A_lam
        out["status"] = "no positive solution: " + cert.verdict
        return Outcome(out, False, tables)
    try:
        out["regime"] = classify_regime(fp)
    except RegimeViolationError:
        out["regime"] = None
    poh = pohozaev_report(res.u, fp)
    out["pohozaev"] = poh.as_dict()
    out["pohozaev_tol"] = POHOZAEV_TOL
    if o.get("two_grid"):
        coarse = Grid(grid.R_rho, grid.R_xN, grid.n_rho // 2, grid.n_xN // 2, grid.grading)
        rc = mountain_pass_solve(fp, coarse, scfg, eps0=o.get("eps0", 0.1))
        out["coarse"] = {"grid": coarse.as_dict(), "solver": rc.diagnostics(),
                         "pohozaev_residuals": pohozaev_report(rc.u, fp).residuals}
    below = 0 < res.level < A_lam
    out["level_below_A_lambda"] = below
    passed = (res.converged and res.monotone and below
              and max(poh.residuals.values()) <= POHOZAEV_TOL)
    out["status"] = "candidate found" if passed else "candidate rejected"
    return Outcome(out, passed, tables)


def _pohozaev(cfg: RunConfig) -> Outcome:
    path = cfg.options.get("field")
    if not path:
        raise UsageError("pohozaev needs --field (written by solve --save)")
    try:
        u, meta = load_field(path)
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read field {path}: {exc}") from exc
    lam = meta.get("lambda", cfg.lam)
    mu = meta.get("mu", cfg.mu)
    p = meta.get("p", cfg.p)
    if p is None:
        raise UsageError("field sidecar has no p; pass --p")
    fp = FunctionalParams(lam, mu, p, u.dim)
    rep = pohozaev_report(u, fp)
    tol = cfg.options.get("tol", POHOZAEV_TOL)
    out = {"N": u.dim.N, "lambda": lam, "mu": mu, "p": p, "grid": u.grid.as_dict(),
           "report": rep.as_dict(), "tol": tol}
    return Outcome(out, max(rep.residuals.values()) <= tol)


def _hardy(cfg: RunConfig) -> Outcome:
    N = cfg.dim
    lhs, rhs = hardy_check(AnalyticField.gaussian(N))
    ratio = rhs / lhs
    exact = (N + 2.0) / N
    rng = np.random.default_rng(cfg.options.get("seed", 0))
    grid = Grid(n_rho=cfg.options.get("n", 64), n_xN=cfg.options.get("n", 64), grading=2.5)
    rows = []
    for i in range(cfg.options.get("trials", 100)):
        a, b = hardy_check(random_smooth_field(grid, N, rng))
        rows.append((i, a, b))
    worst = min(b / a for _, a, b in rows) if rows else None
    ok_random = all(a <= b * (1 + 1e-12) for _, a, b in rows)
    out = {"N": N, "gaussian": {"lhs": lhs, "rhs": rhs, "ratio": ratio, "exact_ratio": exact,
                                "error": abs(ratio - exact)},
           "random": {"trials": len(rows), "all_hold": ok_random, "min_ratio": worst,
                      "seed": cfg.options.get("seed", 0), "grid": grid.as_dict()}}
    return Outcome(out, ok_random and abs(ratio - exact) <= 1e-6,
                   {"trials": (["trial", "lhs", "rhs"], rows)})


def _eigen(cfg: RunConfig) -> Outcome:
    N = cfg.dim
    exact = N / 2.0
    analytic = rayleigh_quotient(AnalyticField.gaussian(N))
    grid = _grid_from(cfg.options)
    ev = rayleigh_min(N, grid)
    out = {"N": N, "exact": exact, "gaussian_quotient": analytic,
           "gaussian_error": abs(analytic - exact),
           "discrete": {"grid": grid.as_dict(), "value": ev.value, "iterations": ev.iterations,
                        "converged": ev.converged, "relative_error": abs(ev.value - exact) / exact}}
    passed = abs(analytic - exact) <= 1e-8 * exact and out["discrete"]["relative_error"] <= 0.02 and ev.converged
    if cfg.options.get("refine"):
        ef = rayleigh_min(N, grid.refined())
        rel = abs(ef.value - exact) / exact
        out["refined"] = {"grid": grid.refined().as_dict(), "value": ef.value, "relative_error": rel}
        passed = passed and rel < out["discrete"]["relative_error"]
    return Outcome(out, passed)


HANDLERS = {
    "constants": _constants,
    "expansions": _expansions,
    "threshold": _threshold,
    "quotient": _quotient,
    "solve": _solve,
    "pohozaev": _pohozaev,
    "hardy": _hardy,
    "eigen": _eigen,
}


def _destination(cfg: RunConfig) -> Path | None:
    if cfg.output_path:
        return Path(cfg.output_path)
    base = os.environ.get(OUTPUT_ENV)
    if base:
        return Path(base) / f"{cfg.subcommand}.{cfg.format}"
    return None


def _render(cfg: RunConfig, out: Outcome) -> dict:
    """Text per destination suffix: ``""`` for the main file, ``.name`` for extra tables."""
    if cfg.format == "json":
        return {"": dumps(out.payload)}
    if not out.tables:
        return {"": _csv_text(["key", "value"], _flat_rows(_clean(out.payload)))}
    names = sorted(out.tables)
    files = {}
    for i, name in enumerate(names):
        header, rows = out.tables[name]
        files["" if i == 0 and len(names) == 1 else f".{name}"] = _csv_text(header, rows)
    return files


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute one configuration; returns the exit status."""
    stdout = stdout or sys.stdout
    try:
        cfg.validate()
        out = HANDLERS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = EXIT_OK if out.passed else EXIT_FAILED
    out.payload = {"schema_version": SCHEMA_VERSION, "subcommand": cfg.subcommand,
                   "config": cfg.as_dict(), "passed": bool(out.passed), "exit_code": code,
                   "result": out.payload}
    files = _render(cfg, out)
    dest = _destination(cfg)
    if dest is not None:
        dest.parent.mkdir(parents=True, exist_ok=True)
        for suffix, text in files.items():
            target = dest if not suffix else dest.with_name(dest.stem + suffix + dest.suffix)
            target.write_text(text)
    for suffix, text in files.items():
        if suffix:
            stdout.write(f"# {suffix[1:]}\n")
        stdout.write(text)
    return code


# -- argument parsing ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ladder(text: str) -> list:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps ladder {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--dim", type=int, help="space dimension N >= 3")
    common.add_argument("--output", dest="output_path", help=f"output file (default: ${OUTPUT_ENV}/<subcommand>.<format>)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    phys = _Parser(add_help=False)
    phys.add_argument("--lambda", dest="lam", type=float, default=1.0)
    phys.add_argument("--mu", type=float, default=1.0)
    phys.add_argument("--p", type=float)

    grid = _Parser(add_help=False)
    grid.add_argument("--n", type=int, default=128, help="cells per direction")
    grid.add_argument("--grading", type=float, default=8.0)
    grid.add_argument("--R", type=float, default=8.0, help="truncation radius")

    ap = _Parser(prog="critneumann", description="Numerical checks for the weighted critical Neumann problem.")
    sub = ap.add_subparsers(dest="subcommand", parser_class=_Parser)
    sub.add_parser("constants", parents=[common], help="bubble constants K1, K2, K3 and A")
    s = sub.add_parser("expansions", parents=[common], help="eps-ladder fits of the test-function norms")
    s.add_argument("--p", type=float)
    s.add_argument("--ladder", type=_ladder, dest="eps_ladder")
    s = sub.add_parser("threshold", parents=[common, phys], help="margins A - sup_t g_eps(t)")
    s.add_argument("--mu-mode", choices=MU_MODES, default="fixed")
    s.add_argument("--ladder", type=_ladder, dest="eps_ladder")
    s = sub.add_parser("quotient", parents=[common], help="Sobolev quotient of the bubble")
    s.add_argument("--eps", type=float, default=0.025)
    s.add_argument("--tau", type=float, default=1.0)
    s.add_argument("--weighted", action="store_true")
    s = sub.add_parser("solve", parents=[common, phys, grid], help="mountain-pass solve")
    s.add_argument("--max-outer", type=int, default=5000)
    s.add_argument("--grad-tol", type=float, default=1e-6)
    s.add_argument("--eps0", type=float, default=0.1, help="concentration of the initial direction")
    s.add_argument("--save", help="write the final field here (text matrix plus .json sidecar)")
    s.add_argument("--two-grid", action="store_true", help="also solve on the half-resolution grid")
    s = sub.add_parser("pohozaev", parents=[common, phys], help="Pohozaev residuals of a saved field")
    s.add_argument("--field", required=True)
    s.add_argument("--tol", type=float, default=POHOZAEV_TOL)
    s = sub.add_parser("hardy", parents=[common], help="Hardy inequality on random and Gaussian fields")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=64)
    s = sub.add_parser("eigen", parents=[common, grid], help="first eigenvalue of the weighted operator")
    s.add_argument("--refine", action="store_true")
    return ap


_CORE = ("subcommand", "dim", "lam", "mu", "p", "eps_ladder", "output_path", "format")


def config_from_args(argv=None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    if not ns.get("subcommand"):
        raise UsageError(f"a subcommand is required: {', '.join(SUBCOMMANDS)}")
    core = {k: ns.pop(k) for k in _CORE if k in ns}
    opts = {k: v for k, v in ns.items() if v is not None and v is not False}
    return RunConfig(options=opts, **core)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
