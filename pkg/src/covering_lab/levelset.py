"""Level-set profiles and the monotone functional.

For a field ``u`` vanishing on the boundary of ``Omega`` the superlevel
profile is::

    alpha(t) = int_{u > t} exp(2u) dmu,   beta(t) = mu({u > t}),   t in [0, max u]

and the sublevel profile uses ``{u < t}`` for ``t in [min u, 0]``.  The
functional::

    G(t) = 4 pi theta (alpha - e^{2t} beta) - lam alpha^2 + kappa e^{2t} beta^2 -+ 4 pi Theta alpha

(minus on superlevel profiles, plus on sublevel ones) is nondecreasing in
``t`` under the curvature hypotheses, and it vanishes where the sets are
empty.  Its value at ``t = 0`` therefore carries the sign of the
inequality being verified.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .conformal_geometry import ConformalMetric, ScalarField
from .discretization import (GridField, GridSpec, _linear_coverage, extract_contour, rasterize,
                             weighted_length)

SUPERLEVEL = "superlevel"
SUBLEVEL = "sublevel"
DEFAULT_LEVELS = 200
MIN_LEVELS = 16


@dataclass
class LevelSetProfile:
    direction: str
    t: np.ndarray  # ascending
    alpha: np.ndarray
    beta: np.ndarray
    alpha_err: np.ndarray
    beta_err: np.ndarray
    length: np.ndarray | None = None
    length_err: np.ndarray | None = None
    total_area: float = math.nan

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class MonotoneParams:
    theta: float = 1.0
    kappa: float = 1.0
    lam: float = 1.0
    Theta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if not self.Theta >= 0.0:
            raise ValueError(f"Theta must be nonnegative, got {self.Theta}")
        for name in ("kappa", "lam"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass
class FunctionalSeries:
    t: np.ndarray
    G: np.ndarray
    err: np.ndarray
    direction: str = SUPERLEVEL

    def at_zero(self):
        """``(G, err)`` at the level ``t = 0``."""
        k = int(np.argmin(np.abs(self.t)))
        return float(self.G[k]), float(self.err[k])


@dataclass
class MonotonicityVerdict:
    passed: bool
    worst: float  # most negative consecutive difference (0 if none)
    index: int | None = None
    location: float | None = None
    margin: float = math.inf  # smallest (difference + tol)

    def __bool__(self):
        return self.passed


class _CellData:
    """Per-cell samples of one resolution, restricted to touched cells."""

    def __init__(self, U: GridField, W: GridField, direction: str):
        keep = U.mask > 0
        self.grid = U.grid
        self.mask = U.mask[keep]
        self.u = U.samples[keep]
        self.gx = U.grad[0][keep]
        self.gy = U.grad[1][keep]
        area = np.exp(2.0 * W.samples[keep]) * U.grid.cell_area
        self.area = area
        self.mass = area * np.exp(2.0 * self.u)
        self.below = direction == SUBLEVEL

    def measures(self, t: float):
        cov = _linear_coverage(self.u, self.gx, self.gy, self.grid.hx, self.grid.hy, t,
                               below=self.below)
        # both fractions describe nearly the same half-plane at boundary cells
        frac = np.minimum(self.mask, cov)
        return float(np.sum(frac * self.mass)), float(np.sum(frac * self.area))


def _check_trace(u: ScalarField, domain, tol: float):
    pts = domain.boundary(512)
    if pts is None:
        return
    vals = np.asarray(u(pts[:, 0], pts[:, 1]), dtype=float)
    worst = float(np.max(np.abs(vals)))
    if not worst <= tol:
        raise ValueError(f"boundary trace of u is not zero (max |u| = {worst:.3e})")


def default_levels(lo: float, hi: float, direction: str, levels: int = DEFAULT_LEVELS):
    """``levels + 1`` uniform samples from 0 to the extreme value of ``u``."""
    if direction == SUPERLEVEL:
        if not hi > 0:
            raise ValueError("u has no positive values; superlevel range is empty")
        return np.linspace(0.0, hi, levels + 1)
    if not lo < 0:
        raise ValueError("u has no negative values; sublevel range is empty")
    return np.linspace(lo, 0.0, levels + 1)


def compute_profile(u: ScalarField, base: ConformalMetric, direction: str = SUPERLEVEL,
                    t_samples=None, *, n: int = 256, grid: GridSpec | None = None,
                    levels: int = DEFAULT_LEVELS, quantile_levels: int | None = None,
                    lengths: bool = False, trace_tol: float = 1e-6) -> LevelSetProfile:
    """alpha, beta (and optionally boundary lengths) of ``u`` over level sets.

    ``t_samples`` defaults to ``levels + 1`` uniform levels between 0 and
    ``max u`` (``min u`` for sublevel profiles).  When fewer than a quarter
    of those levels keep 1% of the area, ``quantile_levels`` (default 50)
    area-quantile levels are merged in.  Error estimates are differences
    with the half-resolution grid.
    """
    if direction not in (SUPERLEVEL, SUBLEVEL):
        raise ValueError(f"direction must be {SUPERLEVEL!r} or {SUBLEVEL!r}")
    domain = base.domain
    if grid is None:
        grid = GridSpec.around(domain, n, pad=0.02)
    U = rasterize(u, grid, domain, with_grad=True)
    W = rasterize(base.w, grid, domain)
    inside = U.mask > 0
    scale_u = max(1.0, float(np.max(np.abs(U.samples[inside]))))
    _check_trace(u, domain, trace_tol * scale_u)
    fine = _CellData(U, W, direction)
    coarse = _CellData(U.coarse, W.coarse, direction) if U.coarse is not None else None

    if t_samples is None:
        vals = U.samples[inside]
        t = default_levels(float(vals.min()), float(vals.max()), direction, levels)
        t = _add_quantiles(t, fine, direction, quantile_levels)
    else:
        t = np.sort(np.asarray(t_samples, dtype=float))
        if len(t) == 0:
            raise ValueError("empty level range")
        if direction == SUPERLEVEL and (t < 0).any():
            raise ValueError("superlevel samples must be nonnegative")
        if direction == SUBLEVEL and (t > 0).any():
            raise ValueError("sublevel samples must be nonpositive")

    alpha = np.empty(len(t))
    beta = np.empty(len(t))
    aerr = np.full(len(t), np.nan)
    berr = np.full(len(t), np.nan)
    for k, tk in enumerate(t):
        alpha[k], beta[k] = fine.measures(tk)
        if coarse is not None:
            ac, bc = coarse.measures(tk)
            aerr[k], berr[k] = abs(alpha[k] - ac), abs(beta[k] - bc)

    length = length_err = None
    if lengths:
        length, length_err = _lengths(U, t, base, direction)
    total = float(np.sum(fine.mask * fine.area))
    return LevelSetProfile(direction, t, alpha, beta, aerr, berr, length, length_err, total)


def _add_quantiles(t, cells: _CellData, direction, count):
    beta0 = float(np.sum(cells.mask * cells.area))
    vals = cells.u
    if count is None:
        sel = vals > 0 if direction == SUPERLEVEL else vals < 0
        if not sel.any():
            return t
        # fraction of uniform levels that still see 1% of the area
        kept = []
        for tk in t[1:]:
            s = vals > tk if direction == SUPERLEVEL else vals < tk
            kept.append(np.sum(cells.area[s]) > 0.01 * beta0)
        if np.mean(kept) >= 0.25:
            return t
        count = 50
    if count <= 0:
        return t
    sel = vals > 0 if direction == SUPERLEVEL else vals < 0
    v, a = vals[sel], cells.area[sel]
    order = np.argsort(v)
    cum = np.cumsum(a[order])
    qs = np.interp(np.linspace(0, cum[-1], count + 2)[1:-1], cum, v[order])
    return np.unique(np.concatenate([t, qs]))


def _lengths(U: GridField, t, base: ConformalMetric, direction):
    def one(G: GridField):
        vals = G.samples.copy()
        out = G.mask <= 0
        vals[out] = np.minimum(vals[out], 0.0) if direction == SUPERLEVEL else \
            np.maximum(vals[out], 0.0)
        H = GridField(G.grid, vals, G.mask)
        res = np.zeros(len(t))
        for k, tk in enumerate(t):
            try:
                lines = extract_contour(H, tk)
            except RuntimeError:
                res[k] = np.nan
                continue
            res[k] = sum(weighted_length(ln, base) for ln in lines)
        return res

    s = one(U)
    err = np.full(len(t), np.nan)
    if U.coarse is not None:
        err = np.abs(s - one(U.coarse))
    return s, err


def monotone_functional(profile: LevelSetProfile, p: MonotoneParams) -> FunctionalSeries:
    """``G(t)`` along the profile with propagated quadrature error.

    The error is ``|dG/dalpha| err_alpha + |dG/dbeta| err_beta`` per level.
    """
    if len(profile) < MIN_LEVELS:
        raise ValueError(f"profile needs at least {MIN_LEVELS} levels")
    t, a, b = profile.t, profile.alpha, profile.beta
    e2t = np.exp(2.0 * t)
    sign = -1.0 if profile.direction == SUPERLEVEL else 1.0
    four_pi = 4.0 * math.pi
    G = (four_pi * p.theta * (a - e2t * b) - p.lam * a * a + p.kappa * e2t * b * b
         + sign * four_pi * p.Theta * a)
    dGa = four_pi * p.theta - 2.0 * p.lam * a + sign * four_pi * p.Theta
    dGb = -four_pi * p.theta * e2t + 2.0 * p.kappa * e2t * b
    err = np.abs(dGa) * np.nan_to_num(profile.alpha_err) + np.abs(dGb) * np.nan_to_num(profile.beta_err)
    return FunctionalSeries(t.copy(), G, err, profile.direction)


def monotonicity_verdict(series, tol=None) -> MonotonicityVerdict:
    """Pass iff every consecutive difference of ``G`` is at least ``-tol``.

    ``series`` is a FunctionalSeries or a sequence of values.  ``tol`` may
    be a scalar or one value per step; by default it is
    ``4 (err_k + err_{k+1})`` from the series' error estimates.
    """
    if isinstance(series, FunctionalSeries):
        G, t = np.asarray(series.G), np.asarray(series.t)
        if tol is None:
            tol = 4.0 * (series.err[:-1] + series.err[1:])
    else:
        G = np.asarray(series, dtype=float)
        t = np.arange(len(G), dtype=float)
        if tol is None:
            tol = 0.0
    if len(G) < 2:
        raise ValueError("monotonicity needs at least two samples")
    d = np.diff(G)
    slack = d + np.broadcast_to(np.asarray(tol, dtype=float), d.shape)
    k = int(np.argmin(slack))
    worst_k = int(np.argmin(d))
    worst = min(0.0, float(d[worst_k]))
    if slack[k] >= 0:
        return MonotonicityVerdict(True, worst, None, None, float(slack[k]))
    return MonotonicityVerdict(False, float(d[k]), k, float(t[k + 1]), float(slack[k]))


def profile_rows(profile: LevelSetProfile, series: FunctionalSeries | None = None):
    n = len(profile)
    s = profile.length if profile.length is not None else np.full(n, np.nan)
    G = series.G if series is not None else np.full(n, np.nan)
    err = series.err if series is not None else np.nan_to_num(profile.alpha_err)
    for k in range(n):
        yield (float(profile.t[k]), float(profile.alpha[k]), float(profile.beta[k]),
               float(s[k]), float(G[k]), float(err[k]))


def profile_csv(profile: LevelSetProfile, series: FunctionalSeries | None = None) -> str:
    """CSV with columns ``t, alpha, beta, s, G, err``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "alpha", "beta", "s", "G", "err"])
    for row in profile_rows(profile, series):
        w.writerow([format(v, ".17g") for v in row])
    return buf.getvalue()
