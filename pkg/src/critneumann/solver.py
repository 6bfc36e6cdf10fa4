"""Axisymmetric finite elements for the weighted critical Neumann problem.

The unknown ``u(rho, xN)`` lives on the truncated quarter plane
``[0, R_rho] x [0, R_xN]`` with the measure ``|S^{N-2}| rho^{N-2} drho dxN``.
It is discretised by continuous piecewise linears on a graded tensor grid
whose cells are split into right triangles; for such meshes the stiffness
matrix is an M-matrix, so ``A^{-1}`` maps nonnegative loads to
nonnegative fields.  ``u = 0`` is imposed on the two outer edges, nothing on
the axis or on the boundary line ``xN = 0``.

The discrete energy is

    J(u) = 1/2 int K|grad u|^2 - mu/p int K|u|^p - lam/2* int K|u|^{2*}
           - sqrt(lam)/2_* int_bdry K|u|^{2_*}

with ``K = exp(|x|^2/4)``; its gradient is exact, and the Riesz
representative with respect to ``int K grad u . grad v`` is used for
descent.  Pohozaev and Hardy diagnostics use the unweighted integrals.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bubble import BubbleParams, Dimension, _as_dim, bubble_value, test_function
from .landscape import FiberCurve, FunctionalParams, NonUnimodalFiberError, fiber_max
from .quadrature import QuadratureSpec, integrate_halfspace, sphere_area

__all__ = [
    "Grid",
    "Discretization",
    "discretize",
    "AxisymField",
    "AnalyticField",
    "SolverConfig",
    "SolveResult",
    "PohozaevReport",
    "Certificate",
    "functional_value",
    "functional_gradient",
    "directional_derivative",
    "rayleigh_quotient",
    "rayleigh_min",
    "hardy_check",
    "mountain_pass_solve",
    "pohozaev_report",
    "nonexistence_certificate",
    "bubble_consistency",
    "save_field",
    "load_field",
    "random_smooth_field",
    "initial_direction",
    "EigenResult",
]


@dataclass(frozen=True)
class Grid:
    """Truncated quarter plane with nodes clustered near the origin.

    Node ``i`` in each direction sits at ``R sinh(g i/n)/sinh(g)``; the
    grading ``g`` sets the ratio of the outermost to innermost spacing,
    roughly ``cosh(g)``.
    """

    R_rho: float = 8.0
    R_xN: float = 8.0
    n_rho: int = 128
    n_xN: int = 128
    grading: float = 8.0

    def __post_init__(self):
        if not (self.R_rho > 0 and self.R_xN > 0):
            raise ValueError("truncation radii must be positive")
        if self.n_rho < 32 or self.n_xN < 32:
            raise ValueError("need at least 32 cells per direction")
        if not self.grading >= 0:
            raise ValueError("grading must be nonnegative")

    def _axis(self, R, n):
        s = np.arange(n + 1) / n
        if self.grading == 0:
            return R * s
        return R * np.sinh(self.grading * s) / math.sinh(self.grading)

    @property
    def rho(self) -> np.ndarray:
        return self._axis(self.R_rho, self.n_rho)

    @property
    def xN(self) -> np.ndarray:
        return self._axis(self.R_xN, self.n_xN)

    @property
    def shape(self):
        return (self.n_rho + 1, self.n_xN + 1)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.R_rho, self.R_xN, self.n_rho * factor, self.n_xN * factor, self.grading)

    def as_dict(self) -> dict:
        return asdict(self)


def _duffy_rule(n: int = 4):
    # collapsed Gauss-Legendre rule on the reference triangle, degree 2n-2
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="ij")
    wi, we = np.meshgrid(w, w, indexing="ij")
    a = xi.ravel()
    b = (eta * (1.0 - xi)).ravel()
    weights = (wi * we * (1.0 - xi)).ravel()
    return np.column_stack([1.0 - a - b, a, b]), weights


class Discretization:
    """Mesh, quadrature and sparse operators for one grid and dimension."""

    def __init__(self, grid: Grid, dim):
        self.grid = grid
        self.dim = d = _as_dim(dim)
        r, z = grid.rho, grid.xN
        nr, nz = grid.shape
        self.nn = nr * nz
        R, Z = np.meshgrid(r, z, indexing="ij")
        self.node_rho = R.ravel()
        self.node_xN = Z.ravel()
        idx = np.arange(self.nn).reshape(nr, nz)
        self.free = np.flatnonzero(((R < grid.R_rho) & (Z < grid.R_xN)).ravel())
        area = sphere_area(d.N - 1)

        k00, k10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
        k01, k11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
        tri = np.concatenate([np.column_stack([k00, k10, k11]), np.column_stack([k00, k11, k01])])
        self.tri = tri
        nt = tri.shape[0]
        xa, ya = self.node_rho[tri[:, 0]], self.node_xN[tri[:, 0]]
        xb, yb = self.node_rho[tri[:, 1]], self.node_xN[tri[:, 1]]
        xc, yc = self.node_rho[tri[:, 2]], self.node_xN[tri[:, 2]]
        det = (xb - xa) * (yc - ya) - (xc - xa) * (yb - ya)
        # gradients of the barycentric coordinates (constant per triangle)
        gb = np.column_stack([(yc - ya), -(xc - xa)]) / det[:, None]
        gc = np.column_stack([-(yb - ya), (xb - xa)]) / det[:, None]
        ga = -(gb + gc)
        grads = np.stack([ga, gb, gc], axis=1)  # (nt, 3, 2)
        rows = np.repeat(np.arange(nt), 3)
        self.Drho = sp.csr_matrix((grads[:, :, 0].ravel(), (rows, tri.ravel())), shape=(nt, self.nn))
        self.DxN = sp.csr_matrix((grads[:, :, 1].ravel(), (rows, tri.ravel())), shape=(nt, self.nn))

        bary, wref = _duffy_rule(4)
        nq = bary.shape[0]
        qx = np.outer(xa, bary[:, 0]) + np.outer(xb, bary[:, 1]) + np.outer(xc, bary[:, 2])
        qy = np.outer(ya, bary[:, 0]) + np.outer(yb, bary[:, 1]) + np.outer(yc, bary[:, 2])
        self.q_rho = qx.ravel()
        self.q_xN = qy.ravel()
        self.q_tri = np.repeat(np.arange(nt), nq)
        # measure weights without K; the axis factor rho^{N-2} included
        self.q_w = (np.abs(det)[:, None] * wref[None, :]).ravel() * area * self.q_rho ** (d.N - 2)
        prow = np.repeat(np.arange(nt * nq), 3)
        pcol = np.repeat(tri, nq, axis=0).ravel()
        pdat = np.tile(bary, (nt, 1)).ravel()
        self.P = sp.csr_matrix((pdat, (prow, pcol)), shape=(nt * nq, self.nn))
        self.q_K = np.exp((self.q_rho**2 + self.q_xN**2) / 4.0)
        self.t_w = np.bincount(self.q_tri, self.q_w, nt)
        self.t_wK = np.bincount(self.q_tri, self.q_w * self.q_K, nt)

        # boundary line xN = 0, four Gauss points per segment
        gx, gw = np.polynomial.legendre.leggauss(4)
        gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
        left, right = idx[:-1, 0], idx[1:, 0]
        h = r[1:] - r[:-1]
        br = (r[:-1, None] + h[:, None] * gx[None, :]).ravel()
        self.b_rho = br
        self.b_w = (h[:, None] * gw[None, :]).ravel() * area * br ** (d.N - 2)
        self.b_K = np.exp(br**2 / 4.0)
        nb = br.size
        brow = np.repeat(np.arange(nb), 2)
        bcol = np.column_stack([np.repeat(left, 4), np.repeat(right, 4)]).ravel()
        bdat = np.column_stack([np.tile(1.0 - gx, r.size - 1), np.tile(gx, r.size - 1)]).ravel()
        self.Pb = sp.csr_matrix((bdat, (brow, bcol)), shape=(nb, self.nn))

        self._stiff = {}
        self._lu = {}

    def stiffness(self, weighted: bool = True) -> sp.csr_matrix:
        if weighted not in self._stiff:
            tw = self.t_wK if weighted else self.t_w
            W = sp.diags(tw)
            self._stiff[weighted] = (self.Drho.T @ W @ self.Drho + self.DxN.T @ W @ self.DxN).tocsr()
        return self._stiff[weighted]

    def mass(self, weighted: bool = True) -> sp.csr_matrix:
        w = self.q_w * self.q_K if weighted else self.q_w
        return (self.P.T @ sp.diags(w) @ self.P).tocsr()

    def solver(self, weighted: bool = True):
        """LU factors of the free-node block of the stiffness matrix."""
        if weighted not in self._lu:
            A = self.stiffness(weighted)[self.free][:, self.free]
            self._lu[weighted] = splu(A.tocsc())
        return self._lu[weighted]

    def riesz(self, g: np.ndarray, weighted: bool = True) -> np.ndarray:
        """Solve ``A G = g`` on the free nodes; Dirichlet entries stay zero."""
        out = np.zeros(self.nn)
        out[self.free] = self.solver(weighted).solve(g[self.free])
        return out


@lru_cache(maxsize=8)
def discretize(grid: Grid, dim) -> Discretization:
    return Discretization(grid, _as_dim(dim))


@dataclass
class AxisymField:
    """Nodal values ``u(rho_i, xN_j)`` on a :class:`Grid`.

    The outer edges ``rho = R_rho`` and ``xN = R_xN`` carry the value 0.
    """

    values: np.ndarray
    grid: Grid
    dim: Dimension

    def __post_init__(self):
        self.dim = _as_dim(self.dim)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")
        if np.any(self.values[-1, :] != 0) or np.any(self.values[:, -1] != 0):
            raise ValueError("field must vanish on the outer truncation edges")

    @classmethod
    def from_vector(cls, vec, grid: Grid, dim) -> "AxisymField":
        return cls(np.asarray(vec, dtype=float).reshape(grid.shape), grid, dim)

    @classmethod
    def from_function(cls, f: Callable, grid: Grid, dim) -> "AxisymField":
        """Sample ``f(rho, xN)`` at the nodes and zero the outer edges."""
        R, Z = np.meshgrid(grid.rho, grid.xN, indexing="ij")
        vals = np.array(f(R, Z), dtype=float)
        vals[-1, :] = 0.0
        vals[:, -1] = 0.0
        return cls(vals, grid, dim)

    @classmethod
    def zeros(cls, grid: Grid, dim) -> "AxisymField":
        return cls(np.zeros(grid.shape), grid, dim)

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def disc(self) -> Discretization:
        return discretize(self.grid, self.dim)

    def norm_totals(self, weighted: bool = True):
        """``(int grad^2, int |u|^{2*}, int_bdry |u|^{2_*})``, K-weighted or not."""
        t = _totals(self, weighted)
        return t["grad2"], t["vol_crit"], t["bdry_crit"]

    def __neg__(self):
        return AxisymField(-self.values, self.grid, self.dim)


@dataclass
class AnalyticField:
    """A field given by closed-form value and gradient callables.

    Used where quadrature accuracy is wanted instead of grid accuracy.
    ``gradient`` returns ``(d/d rho, d/d xN)``.
    """

    value: Callable
    gradient: Callable
    dim: Dimension
    spec: QuadratureSpec = field(default_factory=QuadratureSpec)

    def __post_init__(self):
        self.dim = _as_dim(self.dim)

    @classmethod
    def gaussian(cls, dim, scale: float = 4.0) -> "AnalyticField":
        """``exp(-|x|^2/scale)``; the default is the first eigenfunction."""
        def val(rho, xN):
            return np.exp(-(rho**2 + xN**2) / scale)

        def grad(rho, xN):
            v = val(rho, xN)
            return -2.0 * rho / scale * v, -2.0 * xN / scale * v

        return cls(val, grad, dim)

    def integrate(self, f: Callable) -> float:
        return integrate_halfspace(f, self.dim, self.spec).value


def random_smooth_field(grid: Grid, dim, rng: np.random.Generator, n_bumps: int = 4) -> AxisymField:
    """Random compactly supported field for inequality tests.

    A sum of Gaussian bumps centred on the axis, times the window
    ``(1 - |x|^2/Rc^2)_+^3`` with ``Rc`` drawn inside the truncation box.
    Coefficients may be negative.
    """
    Rc = rng.uniform(1.0, 0.8 * min(grid.R_rho, grid.R_xN))
    z = rng.uniform(0.0, 0.7 * Rc, n_bumps)
    width = rng.uniform(0.05, 1.0, n_bumps) * Rc**2
    amp = rng.normal(size=n_bumps)

    def f(rho, xN):
        win = np.clip(1.0 - (rho**2 + xN**2) / Rc**2, 0.0, None) ** 3
        bumps = sum(a * np.exp(-(rho**2 + (xN - c) ** 2) / w) for a, c, w in zip(amp, z, width))
        return win * bumps

    return AxisymField.from_function(f, grid, dim)


# -- energies ----------------------------------------------------------------

def _totals(u: AxisymField, weighted: bool = True, positive_part: bool = False, p: float | None = None):
    D = u.disc
    d = u.dim
    vec = u.vector
    v = D.P @ vec
    vb = D.Pb @ vec
    if positive_part:
        v = np.maximum(v, 0.0)
        vb = np.maximum(vb, 0.0)
    gr = D.Drho @ vec
    gz = D.DxN @ vec
    wq = D.q_w * D.q_K if weighted else D.q_w
    tw = D.t_wK if weighted else D.t_w
    wb = D.b_w * D.b_K if weighted else D.b_w
    av = np.abs(v)
    out = {
        "grad2": float(tw @ (gr * gr + gz * gz)),
        "vol_crit": float(wq @ av**d.two_star),
        "bdry_crit": float(wb @ np.abs(vb) ** d.two_lower),
        "l2": float(wq @ (v * v)),
    }
    if p is not None:
        out["vol_p"] = float(wq @ av**p)
    return out


def _nonlinear_load(u: AxisymField, fp: FunctionalParams, weighted: bool, positive_part: bool):
    # l2 gradient of the nonlinear part: P^T(w f(Pu)) + Pb^T(wb g(Pb u))
    D = u.disc
    d = u.dim
    vec = u.vector
    v = D.P @ vec
    vb = D.Pb @ vec
    if positive_part:
        v = np.maximum(v, 0.0)
        vb = np.maximum(vb, 0.0)
    av = np.abs(v)
    f = fp.lam * av ** (d.two_star - 2) * v
    if fp.mu != 0:
        f = f + fp.mu * av ** (fp.p - 2) * v
    g = math.sqrt(fp.lam) * np.abs(vb) ** (d.two_lower - 2) * vb
    wq = D.q_w * D.q_K if weighted else D.q_w
    wb = D.b_w * D.b_K if weighted else D.b_w
    return D.P.T @ (wq * f) + D.Pb.T @ (wb * g)


def functional_value(u: AxisymField, fp: FunctionalParams, positive_part: bool = False,
                     weighted: bool = True) -> float:
    """Discrete ``J`` (or ``I`` with ``positive_part=True``, which uses ``u_+``)."""
    d = u.dim
    t = _totals(u, weighted, positive_part, fp.p)
    return (0.5 * t["grad2"] - fp.mu / fp.p * t["vol_p"] - fp.lam / d.two_star * t["vol_crit"]
            - math.sqrt(fp.lam) / d.two_lower * t["bdry_crit"])


def _l2_gradient(u: AxisymField, fp: FunctionalParams, positive_part=False, weighted=True):
    D = u.disc
    g = D.stiffness(weighted) @ u.vector - _nonlinear_load(u, fp, weighted, positive_part)
    g[np.setdiff1d(np.arange(D.nn), D.free)] = 0.0
    return g


def functional_gradient(u: AxisymField, fp: FunctionalParams, positive_part: bool = False,
                        weighted: bool = True) -> AxisymField:
    """Riesz representative of ``J'(u)`` in the ``int K grad . grad`` product."""
    g = _l2_gradient(u, fp, positive_part, weighted)
    return AxisymField.from_vector(u.disc.riesz(g, weighted), u.grid, u.dim)


def directional_derivative(G: AxisymField, v: AxisymField, weighted: bool = True) -> float:
    """``<G, v>`` in the energy inner product; equals ``J'(u) v`` for ``G`` the gradient."""
    A = G.disc.stiffness(weighted)
    return float(G.vector @ (A @ v.vector))


# -- eigenvalue and Hardy -----------------------------------------------------

def rayleigh_quotient(u) -> float:
    """``int K|grad u|^2 / int K u^2`` for a grid or analytic field."""
    if isinstance(u, AnalyticField):
        def times_K(r2, q):
            # q underflows to 0 long before K overflows for decaying fields
            with np.errstate(over="ignore", invalid="ignore"):
                return np.where(q > 0, np.exp(r2 / 4.0) * q, 0.0)

        def num(rho, xN):
            gr, gz = u.gradient(rho, xN)
            return times_K(rho**2 + xN**2, gr * gr + gz * gz)

        def den(rho, xN):
            return times_K(rho**2 + xN**2, u.value(rho, xN) ** 2)

        return u.integrate(num) / u.integrate(den)
    t = _totals(u, True)
    if t["l2"] == 0:
        raise ZeroDivisionError("trivial function")
    return t["grad2"] / t["l2"]


@dataclass
class EigenResult:
    value: float
    iterations: int
    converged: bool
    eigenvector: AxisymField


def rayleigh_min(dim, grid: Grid | None = None, tol: float = 1e-12, max_iter: int = 500) -> EigenResult:
    """Smallest ``int K|grad u|^2 / int K u^2`` on the grid by inverse iteration."""
    grid = grid or Grid()
    d = _as_dim(dim)
    D = discretize(grid, d)
    M = D.mass(True)
    x = np.zeros(D.nn)
    x[D.free] = np.exp(-(D.node_rho[D.free] ** 2 + D.node_xN[D.free] ** 2) / 4.0)
    A = D.stiffness(True)
    lam = (x @ A @ x) / (x @ M @ x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = D.riesz(M @ x)
        y /= math.sqrt(y @ M @ y)
        new = (y @ A @ y) / (y @ M @ y)
        x = y
        if abs(new - lam) <= tol * abs(new):
            lam = new
            converged = True
            break
        lam = new
    if not converged:
        warnings.warn("inverse iteration did not converge", RuntimeWarning, stacklevel=2)
    return EigenResult(float(lam), it, converged, AxisymField.from_vector(x, grid, d))


def hardy_check(u):
    """``((N^2/4) int u^2, int (x . grad u)^2)``, unweighted."""
    N = u.dim.N
    if isinstance(u, AnalyticField):
        lhs = u.integrate(lambda r, z: u.value(r, z) ** 2)

        def xg2(r, z):
            gr, gz = u.gradient(r, z)
            return (r * gr + z * gz) ** 2

        return N * N / 4.0 * lhs, u.integrate(xg2)
    D = u.disc
    vec = u.vector
    v = D.P @ vec
    gr = (D.Drho @ vec)[D.q_tri]
    gz = (D.DxN @ vec)[D.q_tri]
    lhs = float(D.q_w @ (v * v))
    rhs = float(D.q_w @ (D.q_rho * gr + D.q_xN * gz) ** 2)
    return N * N / 4.0 * lhs, rhs


# -- Pohozaev identities ------------------------------------------------------

@dataclass
class PohozaevReport:
    id_a2_lhs: float
    id_a2_rhs: float
    id_a3_lhs: float
    id_a3_rhs: float
    id_p1_lhs: float
    id_p1_rhs: float
    hardy_lhs: float
    hardy_rhs: float

    @staticmethod
    def _rel(a, b):
        s = max(abs(a), abs(b))
        return abs(a - b) / s if s > 0 else 0.0

    @property
    def residuals(self) -> dict:
        return {
            "a2": self._rel(self.id_a2_lhs, self.id_a2_rhs),
            "a3": self._rel(self.id_a3_lhs, self.id_a3_rhs),
            "p1": self._rel(self.id_p1_lhs, self.id_p1_rhs),
        }

    def as_dict(self) -> dict:
        out = asdict(self)
        out["residuals"] = self.residuals
        return out


def _unweighted_pieces(u: AxisymField, fp: FunctionalParams):
    D = u.disc
    d = u.dim
    vec = u.vector
    v = D.P @ vec
    vb = D.Pb @ vec
    gr = (D.Drho @ vec)[D.q_tri]
    gz = (D.DxN @ vec)[D.q_tri]
    w = D.q_w
    av = np.abs(v)
    return {
        "grad2": float(D.t_w @ ((D.Drho @ vec) ** 2 + (D.DxN @ vec) ** 2)),
        "l2": float(w @ (v * v)),
        "crit": float(w @ av**d.two_star),
        "sub": float(w @ av**fp.p),
        "bdry": float(D.b_w @ np.abs(vb) ** d.two_lower),
        "xgrad2": float(w @ (D.q_rho * gr + D.q_xN * gz) ** 2),
    }


def pohozaev_report(u: AxisymField, fp: FunctionalParams) -> PohozaevReport:
    """Both sides of the two Pohozaev-type identities and their combination.

    With ``f = lam|u|^{2*-2}u + mu|u|^{p-2}u`` and ``g = sqrt(lam)|u|^{2_*-2}u``:

    * ``|grad u|^2 - int u f - int_bdry u g = -(N/4) |u|^2``
    * ``(N-2)/2 |grad u|^2 - N int F - (N-1) int_bdry G = -1/2 int (x.grad u)^2``
    * ``mu (N/p - (N-2)/2) |u|_p^p = 1/2 int (x.grad u)^2 - N(N-2)/8 |u|^2``

    All integrals are unweighted.
    """
    N = u.dim.N
    d = u.dim
    s = _unweighted_pieces(u, fp)
    sl = math.sqrt(fp.lam)
    a2_lhs = s["grad2"] - fp.lam * s["crit"] - fp.mu * s["sub"] - sl * s["bdry"]
    a2_rhs = -N / 4.0 * s["l2"]
    F = fp.lam / d.two_star * s["crit"] + fp.mu / fp.p * s["sub"]
    G = sl / d.two_lower * s["bdry"]
    a3_lhs = (N - 2) / 2.0 * s["grad2"] - N * F - (N - 1) * G
    a3_rhs = -0.5 * s["xgrad2"]
    p1_lhs = fp.mu * (N / fp.p - (N - 2) / 2.0) * s["sub"]
    p1_rhs = 0.5 * s["xgrad2"] - N * (N - 2) / 8.0 * s["l2"]
    return PohozaevReport(a2_lhs, a2_rhs, a3_lhs, a3_rhs, p1_lhs, p1_rhs,
                          N * N / 4.0 * s["l2"], s["xgrad2"])


@dataclass
class Certificate:
    """Outcome of the combined identity test for ``mu <= 0``.

    ``gap = rhs - lhs`` of the combined identity; Hardy forces
    ``gap >= (N/4) int u^2``, so a solution must have ``int u^2 = 0``.
    """

    mu: float
    gap: float
    lower_bound: float
    l2: float
    hardy_lhs: float
    hardy_rhs: float
    noise: float
    verdict: str

    @property
    def violated(self) -> bool:
        return self.gap > self.noise

    def as_dict(self) -> dict:
        out = asdict(self)
        out["violated"] = self.violated
        return out


def nonexistence_certificate(u, fp: FunctionalParams, noise: float = 1e-12) -> Certificate:
    """Evaluate the identity gap that rules out nontrivial solutions for ``mu <= 0``.

    For any field, solution or not, the gap is at least ``(N/4) int u^2``.
    A field with ``int u^2`` above ``noise`` therefore cannot satisfy the
    identity, i.e. it is not a solution.
    """
    if fp.mu > 0:
        raise ValueError("certificate applies to mu <= 0")
    N = u.dim.N
    if isinstance(u, AnalyticField):
        l2 = u.integrate(lambda r, z: u.value(r, z) ** 2)
        sub = u.integrate(lambda r, z: np.abs(u.value(r, z)) ** fp.p)

        def xg2(r, z):
            gr, gz = u.gradient(r, z)
            return (r * gr + z * gz) ** 2

        xgrad2 = u.integrate(xg2)
    else:
        s = _unweighted_pieces(u, fp)
        l2, sub, xgrad2 = s["l2"], s["sub"], s["xgrad2"]
    lhs = fp.mu * (N / fp.p - (N - 2) / 2.0) * sub
    rhs = 0.5 * xgrad2 - N * (N - 2) / 8.0 * l2
    gap = rhs - lhs
    scale = max(xgrad2, l2, 1.0)
    tol = noise * scale
    if l2 <= tol:
        verdict = "trivial field: consistent with nonexistence"
    elif gap > tol:
        verdict = "identity violated: not a solution, consistent with nonexistence"
    else:
        verdict = "identity balanced: certificate inconclusive"
    return Certificate(fp.mu, gap, N / 4.0 * l2, l2, N * N / 4.0 * l2, xgrad2, tol, verdict)


# -- mountain pass ------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    step: float = 1.0
    max_outer: int = 5000
    grad_tol: float = 1e-6
    inner_t_tol: float = 1e-12
    armijo: float = 1e-4
    min_step: float = 1e-8
    newton_switch: float = 1e-3
    newton_max: int = 25

    def __post_init__(self):
        for name in ("step", "grad_tol", "inner_t_tol", "armijo", "min_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")


@dataclass
class SolveResult:
    u: AxisymField
    level: float
    converged: bool
    iterations: int
    grad_norm: float
    grad_norm0: float
    levels: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    l2_norms: list = field(default_factory=list)
    status: str = ""
    newton_steps: int = 0

    @property
    def monotone(self) -> bool:
        lv = np.asarray(self.levels)
        return bool(np.all(np.diff(lv) <= 1e-12 * np.maximum(1.0, np.abs(lv[:-1]))))

    def diagnostics(self) -> dict:
        v = self.u.values
        return {
            "level": self.level,
            "converged": self.converged,
            "iterations": self.iterations,
            "newton_steps": self.newton_steps,
            "grad_norm": self.grad_norm,
            "grad_norm_initial": self.grad_norm0,
            "relative_grad_norm": self.grad_norm / self.grad_norm0 if self.grad_norm0 else 0.0,
            "monotone_levels": self.monotone,
            "min_over_max": float(v.min() / v.max()) if v.max() > 0 else 0.0,
            "status": self.status,
        }


def _jacobian(w: AxisymField, fp: FunctionalParams):
    # second derivative of I at w (positive parts), free-node block
    D = w.disc
    d = w.dim
    vec = w.vector
    v = np.maximum(D.P @ vec, 0.0)
    vb = np.maximum(D.Pb @ vec, 0.0)
    fp_ = fp.lam * (d.two_star - 1) * v ** (d.two_star - 2)
    if fp.mu != 0:
        fp_ = fp_ + fp.mu * (fp.p - 1) * v ** (fp.p - 2)
    gp = math.sqrt(fp.lam) * (d.two_lower - 1) * vb ** (d.two_lower - 2)
    H = (D.stiffness(True)
         - D.P.T @ sp.diags(D.q_w * D.q_K * fp_) @ D.P
         - D.Pb.T @ sp.diags(D.b_w * D.b_K * gp) @ D.Pb)
    return H.tocsr()[D.free][:, D.free]


def _newton_polish(w: AxisymField, fp: FunctionalParams, g_target: float, max_iter: int):
    """Newton iterations on ``I'(w) = 0`` with backtracking on the gradient norm."""
    D = w.disc
    grid = w.grid

    def gnorm_of(field):
        g = _l2_gradient(field, fp, positive_part=True)
        return g, math.sqrt(max(float(g @ D.riesz(g)), 0.0))

    g, gn = gnorm_of(w)
    steps = 0
    for steps in range(1, max_iter + 1):
        if gn <= g_target:
            steps -= 1
            break
        H = _jacobian(w, fp)
        delta = np.zeros(D.nn)
        delta[D.free] = splu(H.tocsc()).solve(-g[D.free])
        s = 1.0
        while s > 1e-4:
            cand = AxisymField(np.maximum(w.vector + s * delta, 0.0).reshape(grid.shape), grid, w.dim)
            g_new, gn_new = gnorm_of(cand)
            if gn_new < gn:
                break
            s *= 0.5
        else:
            break
        w, g, gn = cand, g_new, gn_new
    return w, gn, steps


def _ray_max(u: AxisymField, fp: FunctionalParams, cfg: SolverConfig):
    # sup_t I(t u) through the scalar fiber of the norm totals of u_+
    t = _totals(u, True, True, fp.p)
    curve = FiberCurve(t["grad2"], fp.lam * t["vol_crit"], math.sqrt(fp.lam) * t["bdry_crit"],
                       u.dim, t["vol_p"], fp.mu, fp.p)
    return fiber_max(curve, cfg.inner_t_tol)


def initial_direction(fp: FunctionalParams, grid: Grid, eps: float = 0.1) -> AxisymField:
    """The cut-off test function ``K^{-1/2} cutoff U_eps`` sampled on the grid."""
    bp = BubbleParams(fp.dim, eps, 1.0)
    return AxisymField.from_function(lambda r, z: test_function(bp, r, z), grid, fp.dim)


def mountain_pass_solve(fp: FunctionalParams, grid: Grid | None = None, cfg: SolverConfig | None = None,
                        u0: AxisymField | None = None, eps0: float = 0.1) -> SolveResult:
    """Minimise ``u -> sup_t I(t u)`` over nonnegative directions.

    Each outer step scales ``u`` onto its ray maximum ``w = t* u``, takes
    the Riesz gradient ``G`` of ``I`` at ``w`` and moves to
    ``max(w - s G, 0)``; for ``s <= 1`` this is ``(1-s) w + s A^{-1} f(w_+)``.
    ``s`` is halved until the ray maximum decreases by the Armijo amount,
    so accepted levels are monotone.  Once the energy norm of ``G`` drops
    below ``newton_switch`` times its initial value, Newton steps on
    ``I'(w) = 0`` finish the job down to ``grad_tol``; the descent alone
    crawls along the almost flat dilation direction of concentrated
    profiles.
    """
    grid = grid or Grid()
    cfg = cfg or SolverConfig()
    u = u0 if u0 is not None else initial_direction(fp, grid, eps0)
    D = u.disc

    def at_ray(direction):
        t_star, level = _ray_max(direction, fp, cfg)
        w = AxisymField(t_star * direction.values, grid, fp.dim)
        g = _l2_gradient(w, fp, positive_part=True)
        G = D.riesz(g)
        return w, level, G, math.sqrt(max(float(g @ G), 0.0))

    w, level, G, gnorm = at_ray(u)
    g0 = gnorm
    levels, gnorms, l2s = [level], [gnorm], [_totals(w, False)["l2"]]
    status = "max_outer reached"
    switch = max(cfg.newton_switch, cfg.grad_tol) if cfg.newton_max > 0 else cfg.grad_tol
    s = min(cfg.step, 1.0)
    it = 0
    while it < cfg.max_outer and gnorm > switch * g0:
        it += 1
        accepted = False
        while s >= cfg.min_step:
            trial = np.maximum(w.vector - s * G, 0.0).reshape(grid.shape)
            try:
                new = at_ray(AxisymField(trial, grid, fp.dim))
            except (NonUnimodalFiberError, ValueError, RuntimeError):
                s *= 0.5
                continue
            if new[1] <= level - cfg.armijo * s * gnorm**2:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            status = "stagnated: no descent step found"
            break
        w, level, G, gnorm = new
        levels.append(level)
        gnorms.append(gnorm)
        l2s.append(_totals(w, False)["l2"])
        s = min(cfg.step, 2.0 * s)
        if not math.isfinite(level) or level > 10 * abs(levels[0]) + 1:
            status = "diverged: level growth"
            break
    newton_steps = 0
    if gnorm <= switch * g0 and gnorm > cfg.grad_tol * g0:
        w, gnorm, newton_steps = _newton_polish(w, fp, cfg.grad_tol * g0, cfg.newton_max)
        level = functional_value(w, fp, positive_part=True)
    converged = gnorm <= cfg.grad_tol * g0
    if converged:
        status = "converged"
    elif newton_steps:
        status = "newton polish stalled"
    res = SolveResult(w, level, converged, it, gnorm, g0, levels, gnorms, l2s, status)
    res.newton_steps = newton_steps
    return res


# -- weightless bubble consistency ---------------------------------------------

def bubble_consistency(dim, grid: Grid | None = None, eps: float = 1.0) -> float:
    """Relative residual of the sampled bubble in the unweighted discrete problem.

    ``phi_{eps,1}`` solves the unweighted problem with ``lam = 1``, ``mu = 0``.
    The bubble is sampled at all nodes, including the outer edges where it
    serves as Dirichlet data, and the residual on free nodes is measured in
    the dual energy norm relative to the nonlinear load.
    """
    grid = grid or Grid()
    d = _as_dim(dim)
    D = discretize(grid, d)
    bp = BubbleParams(d, eps, 1.0)
    vec = bubble_value(bp, D.node_rho, D.node_xN)
    v = D.P @ vec
    vb = D.Pb @ vec
    load = D.P.T @ (D.q_w * v ** (d.two_star - 1)) + D.Pb.T @ (D.b_w * vb ** (d.two_lower - 1))
    r = (D.stiffness(False) @ vec - load)[D.free]
    lu = D.solver(False)
    num = math.sqrt(max(r @ lu.solve(r), 0.0))
    lf = load[D.free]
    den = math.sqrt(max(lf @ lu.solve(lf), 0.0))
    return num / den


# -- checkpoints ---------------------------------------------------------------

def save_field(path, u: AxisymField, fp: FunctionalParams | None = None, extra: dict | None = None) -> Path:
    """Write ``u`` as a text matrix plus a ``.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, u.values, fmt="%.17g")
    meta = {"N": u.dim.N, "grid": u.grid.as_dict()}
    if fp is not None:
        meta.update({"lambda": fp.lam, "mu": fp.mu, "p": fp.p})
    if extra:
        meta.update(extra)
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return side


def load_field(path):
    """Read a field written by :func:`save_field`; returns ``(u, meta)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = Grid(**meta["grid"])
    vals = np.loadtxt(path, ndmin=2)
    return AxisymField(vals, grid, meta["N"]), meta
