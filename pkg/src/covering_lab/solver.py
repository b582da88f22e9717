"""Dirichlet problems for ``Delta u + lam h exp(2u) = f``.

Radial problems are collocated at Chebyshev points in ``s = rho^2`` on
``[0, r^2]``.  In that variable ``Delta u = 4 s u_ss + 4 u_s``, so the row at
the origin reads ``4 u_s(0) = 2 u''(0)`` and ``u'(0) = 0`` holds by
construction (the interpolant is even in ``rho``).

Planar problems use the five-point stencil on cell centres; cells outside
the domain carry Dirichlet values.

Both solvers run damped Newton (Armijo backtracking on the sup-residual).
Without an explicit initial guess they continue in ``lam`` from 0, which
follows the minimal branch; an explicit guess is used at full ``lam`` and
selects the basin.  The report records which path was taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dct

from .conformal_geometry import ScalarField
from .discretization import GridField, GridSpec, inside_fraction

MAX_NEWTON = 40
STAGES = 8


class SolverError(RuntimeError):
    """Newton failed; ``last`` holds the last iterate and ``report`` the history."""

    def __init__(self, message, last=None, report=None):
        super().__init__(message)
        self.last = last
        self.report = report or {}


def _radial_callable(obj, default):
    if obj is None:
        return lambda rho: np.full(np.shape(rho), float(default))
    if isinstance(obj, (int, float)):
        return lambda rho: np.full(np.shape(rho), float(obj))
    if isinstance(obj, ScalarField):
        return lambda rho: np.asarray(obj(rho, np.zeros_like(rho)), dtype=float)
    return lambda rho: np.asarray(obj(rho), dtype=float) * np.ones(np.shape(rho))


# ---------------------------------------------------------------------------
# radial


@dataclass
class RadialProblem:
    """``u'' + u'/rho + lam h(rho) exp(2u) = f(rho)`` on ``[0, radius]``, ``u(radius) = boundary``.

    ``f`` and ``h`` accept numbers, callables of ``rho`` or radial
    ScalarFields.  ``guess`` is None (continuation from ``lam = 0``),
    ``"cap"`` (the concentrated sphere-cap profile matching the boundary
    value) or a callable/ScalarField.
    """

    lam: float
    radius: float
    boundary: float = 0.0
    f: Any = 0.0
    h: Any = 1.0
    guess: Any = None
    degree: int = 64
    max_degree: int = 1024
    tol: float = 1e-10

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not math.isfinite(self.boundary):
            raise ValueError("boundary value must be finite")


def _cheb(N):
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def _cheb_coeffs(values):
    N = len(values) - 1
    c = dct(values, type=1) / N
    c[0] /= 2.0
    c[-1] /= 2.0
    return c


class RadialSolutionField(ScalarField):
    """Radial interpolant ``u(|x - center|)`` with exact polynomial derivatives.

    Beyond the solved radius the profile continues as its quadratic Taylor
    polynomial in ``s = rho^2`` (used only by boundary cells).
    """

    def __init__(self, coeffs, radius, center=(0.0, 0.0), config=None):
        S = radius * radius
        self.radius = float(radius)
        self.center = (float(center[0]), float(center[1]))
        self.poly = np.polynomial.Chebyshev(coeffs, domain=[0.0, S])
        self.dpoly = self.poly.deriv(1)
        self.d2poly = self.poly.deriv(2)
        self._S = S
        self._edge = (float(self.poly(S)), float(self.dpoly(S)), float(self.d2poly(S)))
        self._config = config

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        inside = s <= self._S
        u = np.empty_like(s)
        us = np.empty_like(s)
        uss = np.empty_like(s)
        si = s[inside]
        u[inside] = self.poly(si)
        us[inside] = self.dpoly(si)
        uss[inside] = self.d2poly(si)
        if not inside.all():
            d = s[~inside] - self._S
            u0, u1, u2 = self._edge
            u[~inside] = u0 + u1 * d + 0.5 * u2 * d * d
            us[~inside] = u1 + u2 * d
            uss[~inside] = u2
        return u, us, uss

    def _s(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        dx, dy = x - self.center[0], y - self.center[1]
        return dx, dy, dx * dx + dy * dy

    def __call__(self, x, y):
        _, _, s = self._s(x, y)
        return self._eval(s)[0]

    def grad(self, x, y):
        dx, dy, s = self._s(x, y)
        us = self._eval(s)[1]
        return 2.0 * dx * us, 2.0 * dy * us

    def laplacian(self, x, y):
        _, _, s = self._s(x, y)
        _, us, uss = self._eval(s)
        return 4.0 * s * uss + 4.0 * us

    def profile(self, rho):
        """``(u, u', u'')`` as functions of ``rho``."""
        rho = np.asarray(rho, dtype=float)
        u, us, uss = self._eval(rho * rho)
        return u, 2.0 * rho * us, 2.0 * us + 4.0 * rho * rho * uss

    def to_config(self):
        if self._config is None:
            raise TypeError("solver output without a recorded request")
        return dict(self._config)


@dataclass
class RadialSolution:
    field: RadialSolutionField
    nodes: np.ndarray  # rho at collocation nodes, descending from radius to 0
    values: np.ndarray
    residual: float  # sup residual at the nodes
    offnode_residual: float
    scale: float
    report: dict = field(default_factory=dict)

    def __call__(self, rho):
        return self.field.profile(rho)[0]

    def rows(self):
        """``(rho, u)`` rows in ascending ``rho``."""
        order = np.argsort(self.nodes)
        return list(zip(self.nodes[order].tolist(), self.values[order].tolist()))


def cap_guess(lam: float, radius: float, boundary: float, weight: float = 1.0):
    """Concentrated cap profile with ``u(radius) = boundary`` for ``lam * weight``.

    Returns a callable of ``rho`` on the near-pole (large) branch, or None
    when no cap with that boundary value exists.
    """
    lw = lam * weight
    if not lw > 0:
        return None
    R = 1.0 / math.sqrt(lw)
    m = R * math.exp(-boundary)
    disc = m * m - radius * radius
    if disc < 0:
        return None
    a2 = (m - math.sqrt(disc)) ** 2
    c = math.log(2.0 * R * math.sqrt(a2))
    return lambda rho: c - np.log(np.asarray(rho, dtype=float) ** 2 + a2)


def _newton(F, J, u0, tol_abs, max_iter=MAX_NEWTON, solve=np.linalg.solve):
    u = u0.copy()
    r = F(u)
    norm = np.max(np.abs(r))
    history = [float(norm)]
    for it in range(max_iter):
        if norm <= tol_abs:
            return u, norm, it, history, True
        with np.errstate(all="ignore"):
            du = solve(J(u), -r)
        if not np.all(np.isfinite(du)):
            return u, norm, it, history, False
        step = 1.0
        while True:
            cand = u + step * du
            with np.errstate(all="ignore"):
                rc = F(cand)
            nc = np.max(np.abs(rc))
            if np.isfinite(nc) and nc <= (1.0 - 1e-4 * step) * norm:
                break
            step *= 0.5
            if step < 2.0 ** -12:
                return u, norm, it, history, False
        u, r, norm = cand, rc, nc
        history.append(float(norm))
    return u, norm, max_iter, history, norm <= tol_abs


def _radial_system(N, S, lam, fv, hv, b):
    D, x = _cheb(N)
    s = S * (1.0 + x) / 2.0
    D1 = (2.0 / S) * D
    D2 = D1 @ D1
    L = 4.0 * s[:, None] * D2 + 4.0 * D1

    def F(u):
        r = L @ u + lam * hv * np.exp(2.0 * u) - fv
        r[0] = u[0] - b
        return r

    def J(u):
        M = L + np.diag(2.0 * lam * hv * np.exp(2.0 * u))
        M[0, :] = 0.0
        M[0, 0] = 1.0
        return M

    # collocation derivatives lose ~eps * |L| to rounding at high degree
    lnorm = float(np.max(np.sum(np.abs(L), axis=1)))
    return s, F, J, lnorm


def _resolved(coeffs) -> bool:
    tail = np.max(np.abs(coeffs[-max(4, len(coeffs) // 8):]))
    return tail <= 1e-13 * max(1.0, float(np.max(np.abs(coeffs))))


def solve_radial(p: RadialProblem) -> RadialSolution:
    """Solve a radial Dirichlet problem to node sup-residual ``tol * scale``.

    ``scale = max(1, |lam h exp(2u)|, |f|)`` over the nodes; a rounding floor
    proportional to the collocation operator norm applies at high degree.
    The degree doubles until the Chebyshev tail has decayed to rounding
    level, or Newton from the initial guess failed to converge at the lower
    degree.  Raises SolverError on divergence at the maximum degree.
    """
    fr = _radial_callable(p.f, 0.0)
    hr = _radial_callable(p.h, 1.0)
    S = p.radius ** 2
    report = {"guess": "continuation" if p.guess is None else
              ("cap" if isinstance(p.guess, str) else "user"),
              "stages": 0, "newton_steps": 0, "degrees": []}
    if isinstance(p.guess, str):
        if p.guess != "cap":
            raise ValueError(f"unknown guess {p.guess!r}")
        g = cap_guess(p.lam, p.radius, p.boundary, float(hr(np.zeros(1))[0]))
        if g is None:
            raise SolverError("no cap profile matches this boundary value", report=report)
    elif p.guess is not None:
        g = _radial_callable(p.guess, 0.0)

    def newton_at(N, u, lams):
        for lam_k in lams:
            _, F, J, lnorm = _radial_system(N, S, lam_k, fv, hv, p.boundary)
            scale = max(1.0, float(np.max(np.abs(lam_k * hv * np.exp(2 * u)))),
                        float(np.max(np.abs(fv))))
            floor = 64 * np.finfo(float).eps * lnorm * max(1.0, float(np.max(np.abs(u))))
            # iterate to tol * scale; stagnation below the rounding floor is accepted
            u, res, steps, _, ok = _newton(F, J, u, p.tol * scale)
            report["newton_steps"] += steps
            if not ok and not res <= floor:
                raise SolverError(
                    f"radial Newton failed at lam={lam_k:.6g}, degree {N} (residual {res:.3e})",
                    last=u, report=report)
        return u, F

    N = int(p.degree)
    prev = None
    while True:
        _, x = _cheb(N)
        s = S * (1.0 + x) / 2.0
        rho = np.sqrt(s)
        fv, hv = fr(rho), hr(rho)
        report["degrees"].append(N)
        try:
            if prev is not None:
                u, F = newton_at(N, prev.poly(s), [p.lam])
            elif p.guess is None:
                report["stages"] = STAGES
                u, F = newton_at(N, np.full_like(s, p.boundary),
                                 [p.lam * k / STAGES for k in range(1, STAGES + 1)])
            else:
                u, F = newton_at(N, g(rho), [p.lam])
        except SolverError:
            if prev is not None or 2 * N > p.max_degree:
                raise
            N *= 2
            continue
        coeffs = _cheb_coeffs(u)
        fld = RadialSolutionField(coeffs, p.radius)
        if _resolved(coeffs):
            break
        if 2 * N > p.max_degree:
            raise SolverError(f"radial solution unresolved at degree {N}", last=u, report=report)
        prev = fld
        N *= 2
    scale = max(1.0, float(np.max(np.abs(p.lam * hv * np.exp(2 * u)))), float(np.max(np.abs(fv))))
    sq = np.linspace(0.0, S, 4 * N + 3)
    ue, us, uss = fld._eval(sq)
    rq = np.sqrt(sq)
    off = 4 * sq * uss + 4 * us + p.lam * hr(rq) * np.exp(2 * ue) - fr(rq)
    report["residual"] = float(np.max(np.abs(F(u))))
    report["offnode_residual"] = float(np.max(np.abs(off)))
    report["scale"] = scale
    return RadialSolution(fld, rho, u, report["residual"], report["offnode_residual"], scale, report)


# ---------------------------------------------------------------------------
# planar


@dataclass
class Solve2DProblem:
    """Five-point discretization of ``Delta u + lam h exp(2u) = f`` on a grid.

    Unknowns are the cells whose centre lies in ``domain``; every other cell
    takes its value from ``dirichlet`` (ScalarField, callable ``(x, y)``,
    number or array).  ``f``, ``h`` and ``guess`` accept the same forms.
    """

    grid: GridSpec
    domain: Any
    lam: float = 0.0
    f: Any = 0.0
    h: Any = 1.0
    dirichlet: Any = 0.0
    guess: Any = None
    tol: float = 1e-8


def _grid_values(obj, X, Y, default=0.0):
    if obj is None:
        return np.full(X.shape, float(default))
    if isinstance(obj, (int, float)):
        return np.full(X.shape, float(obj))
    if isinstance(obj, np.ndarray):
        return np.broadcast_to(obj, X.shape).astype(float)
    return np.broadcast_to(np.asarray(obj(X, Y), dtype=float), X.shape).copy()


def _laplacian_operator(grid: GridSpec, unknown):
    """Sparse 5-point operator on unknown cells plus the map to Dirichlet cells."""
    n = grid.n
    idx = -np.ones((n, n), dtype=int)
    cells = np.argwhere(unknown)
    idx[unknown] = np.arange(len(cells))
    rows, cols, vals = [], [], []
    brow, bcell, bval = [], [], []
    cx, cy = 1.0 / grid.hx ** 2, 1.0 / grid.hy ** 2
    k = np.arange(len(cells))
    rows.append(k)
    cols.append(k)
    vals.append(np.full(len(cells), -2.0 * (cx + cy)))
    for di, dj, c in ((1, 0, cy), (-1, 0, cy), (0, 1, cx), (0, -1, cx)):
        ni, nj = cells[:, 0] + di, cells[:, 1] + dj
        if (ni < 0).any() or (ni >= n).any() or (nj < 0).any() or (nj >= n).any():
            raise ValueError("domain touches the grid edge; pad the grid box")
        nb = idx[ni, nj]
        inner = nb >= 0
        rows.append(k[inner])
        cols.append(nb[inner])
        vals.append(np.full(inner.sum(), c))
        brow.append(k[~inner])
        bcell.append(ni[~inner] * n + nj[~inner])
        bval.append(np.full((~inner).sum(), c))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(cells), len(cells)))
    B = sp.csr_matrix((np.concatenate(bval), (np.concatenate(brow), np.concatenate(bcell))),
                      shape=(len(cells), n * n))
    return A, B


def _problem_arrays(p: Solve2DProblem):
    X, Y = p.grid.centers()
    unknown = np.asarray(p.domain.contains(X, Y), dtype=bool)
    if not unknown.any():
        raise ValueError("domain contains no cell centres")
    fv = _grid_values(p.f, X, Y)
    hv = _grid_values(p.h, X, Y, 1.0)
    dv = _grid_values(p.dirichlet, X, Y)
    return X, Y, unknown, fv, hv, dv


def residual_norm(u, p: Solve2DProblem) -> float:
    """Sup over unknown cells of ``|Delta_h u + lam h exp(2u) - f|``."""
    vals = u.samples if isinstance(u, GridField) else np.asarray(u, dtype=float)
    X, Y, unknown, fv, hv, dv = _problem_arrays(p)
    A, B = _laplacian_operator(p.grid, unknown)
    full = np.where(unknown, vals, dv)
    x = full[unknown]
    r = A @ x + B @ full.ravel() + p.lam * hv[unknown] * np.exp(2.0 * x) - fv[unknown]
    return float(np.max(np.abs(r)))


def solve_2d(p: Solve2DProblem) -> GridField:
    """Newton solve on the grid; the returned field's ``info`` holds the report.

    Raises SolverError when Newton stalls or the Jacobian is singular.
    """
    X, Y, unknown, fv, hv, dv = _problem_arrays(p)
    A, B = _laplacian_operator(p.grid, unknown)
    fu, hu = fv[unknown], hv[unknown]
    bnd = B @ np.where(unknown, 0.0, dv).ravel()
    report = {"guess": "continuation" if p.guess is None else "user",
              "newton_steps": 0, "stages": 0}

    def make(lam):
        def F(x):
            return A @ x + bnd + lam * hu * np.exp(2.0 * x) - fu

        def J(x):
            return (A + sp.diags(2.0 * lam * hu * np.exp(2.0 * x))).tocsc()

        return F, J

    def sparse_solve(M, rhs):
        with np.errstate(all="ignore"):
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                try:
                    return spla.spsolve(M, rhs)
                except spla.MatrixRankWarning as exc:
                    raise SolverError("singular Jacobian", report=report) from exc

    if p.guess is None:
        x = np.zeros(unknown.sum())
        lams = [0.0] + [p.lam * k / STAGES for k in range(1, STAGES + 1)] if p.lam else [0.0]
    else:
        x = _grid_values(p.guess, X, Y)[unknown]
        lams = [p.lam]
    for lam_k in lams:
        F, J = make(lam_k)
        scale = max(1.0, float(np.max(np.abs(lam_k * hu * np.exp(2 * x)))),
                    float(np.max(np.abs(fu))))
        x, res, steps, hist, ok = _newton(F, J, x, p.tol * scale, solve=sparse_solve)
        report["newton_steps"] += steps
        report["stages"] += 1
        if not ok:
            raise SolverError(f"2-D Newton failed at lam={lam_k:.6g} (residual {res:.3e})",
                              last=x, report=report)
    report["residual"] = float(res)
    report["scale"] = scale
    samples = np.array(dv, dtype=float)
    samples[unknown] = x
    out = GridField(p.grid, samples, inside_fraction(p.domain, p.grid))
    out.info = report
    return out


# ---------------------------------------------------------------------------
# requests


def _config_of(obj):
    if obj is None or isinstance(obj, (int, float)):
        return obj
    if isinstance(obj, ScalarField):
        return obj.to_config()
    raise TypeError("solver request data must be numbers or serializable fields")


@dataclass
class RadialRequest:
    """Serializable radial solve, resolved into a field centred at ``center``.

    ``f`` and ``h`` are numbers or fields evaluated along ``(rho, 0)``, i.e.
    in coordinates relative to the centre.
    """

    lam: float
    radius: float
    boundary: float = 0.0
    f: Any = 0.0
    h: Any = 1.0
    guess: Any = None
    center: tuple = (0.0, 0.0)
    degree: int = 64

    def problem(self) -> RadialProblem:
        return RadialProblem(lam=self.lam, radius=self.radius, boundary=self.boundary,
                             f=self.f, h=self.h, guess=self.guess, degree=self.degree)

    def to_config(self) -> dict:
        cfg = {"solver": "radial", "lam": self.lam, "radius": self.radius,
               "boundary": self.boundary, "f": _config_of(self.f), "h": _config_of(self.h),
               "center": list(self.center)}
        if self.guess is not None:
            cfg["guess"] = self.guess if isinstance(self.guess, str) else _config_of(self.guess)
        return cfg

    def resolve(self) -> RadialSolutionField:
        sol = solve_radial(self.problem())
        fld = RadialSolutionField(sol.field.poly.coef, self.radius, self.center)
        try:
            fld._config = self.to_config()
        except TypeError:
            fld._config = None
        fld.report = sol.report
        fld.residual_bound = sol.offnode_residual
        return fld
