"""Uniform-grid sampling, masked quadrature and level-curve extraction.

Samples live at cell centres of an ``n x n`` grid, stored as ``(ny, nx)``
arrays (rows follow ``y``).  Every rasterized field carries a companion
sampling on the ``n/2`` grid over the same box so that quadrature can report
a Richardson-style error estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .conformal_geometry import (
    ConformalMetric,
    DerivativeUnavailable,
    Disk,
    LevelSetDomain,
    PlanarDomain,
    Rectangle,
    ScalarField,
)

SUBSAMPLES = 4
MIN_N = 16


@dataclass(frozen=True)
class GridSpec:
    x0: float
    x1: float
    y0: float
    y1: float
    n: int

    def __post_init__(self):
        if self.n < MIN_N:
            raise ValueError(f"grid resolution must be at least {MIN_N}, got {self.n}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("empty grid box")

    @classmethod
    def around(cls, domain: PlanarDomain, n: int, pad: float = 0.0) -> "GridSpec":
        x0, x1, y0, y1 = domain.bbox
        px, py = pad * (x1 - x0), pad * (y1 - y0)
        return cls(x0 - px, x1 + px, y0 - py, y1 + py, int(n))

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.n

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.n

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def axes(self):
        xs = self.x0 + (np.arange(self.n) + 0.5) * self.hx
        ys = self.y0 + (np.arange(self.n) + 0.5) * self.hy
        return xs, ys

    def centers(self):
        xs, ys = self.axes()
        return np.meshgrid(xs, ys)

    def coarsened(self) -> "GridSpec | None":
        if self.n % 2 or self.n // 2 < MIN_N // 2:
            return None
        return replace(self, n=self.n // 2)

    def refined(self) -> "GridSpec":
        return replace(self, n=self.n * 2)

    def contains_box(self, bbox) -> bool:
        x0, x1, y0, y1 = bbox
        eps = 1e-12 * max(1.0, abs(self.x1 - self.x0))
        return (x0 >= self.x0 - eps and x1 <= self.x1 + eps
                and y0 >= self.y0 - eps and y1 <= self.y1 + eps)


class GridField:
    """Cell-centred samples plus the inside-fraction of the active domain.

    ``grad`` holds optional ``(gx, gy)`` samples; ``coarse`` the same field
    on the ``n/2`` grid.  Fields on one grid combine through ``apply``.
    """

    def __init__(self, grid: GridSpec, samples, mask, grad=None, coarse=None):
        self.grid = grid
        self.samples = np.asarray(samples, dtype=float)
        self.mask = np.asarray(mask, dtype=float)
        self.grad = grad
        self.coarse = coarse
        self.info: dict = {}

    def apply(self, fn, *others) -> "GridField":
        """Pointwise ``fn(self.samples, *other.samples)`` on both resolutions."""
        vals = fn(self.samples, *(o.samples for o in others))
        coarse = None
        if self.coarse is not None and all(o.coarse is not None for o in others):
            coarse = self.coarse.apply(fn, *(o.coarse for o in others))
        return GridField(self.grid, vals, self.mask, coarse=coarse)

    def with_mask(self, mask_field: "GridField") -> "GridField":
        coarse = None
        if self.coarse is not None and mask_field.coarse is not None:
            coarse = self.coarse.with_mask(mask_field.coarse)
        return GridField(self.grid, self.samples, mask_field.mask, self.grad, coarse)

    @property
    def interior(self):
        return self.mask >= 1.0

    @property
    def boundary_cells(self):
        return (self.mask > 0.0) & (self.mask < 1.0)


class Quadrature(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class Polyline:
    vertices: np.ndarray
    closed: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "vertices", v)
        if self.closed and len(v) < 3:
            raise ValueError("closed polyline needs at least 3 vertices")

    def segments(self):
        v = self.vertices
        if self.closed:
            return v, np.roll(v, -1, axis=0)
        return v[:-1], v[1:]

    @property
    def length(self) -> float:
        a, b = self.segments()
        return float(np.sum(np.hypot(*(b - a).T)))


# ---------------------------------------------------------------------------
# rasterization and quadrature


def inside_fraction(domain: PlanarDomain, grid: GridSpec, sub: int = SUBSAMPLES):
    """Fraction of each cell inside ``domain``.

    Rectangles are exact.  Domains bounded by a level curve of a smooth
    function (disks, level-set domains) use the linearized coverage of the
    cell, whose error is smooth in the grid step.  Anything else falls back
    to counting a ``sub x sub`` sub-grid.
    """
    if isinstance(domain, Rectangle):
        return _rectangle_fraction(domain, grid)
    if isinstance(domain, Disk):
        X, Y = grid.centers()
        dx, dy = X - domain.center[0], Y - domain.center[1]
        rho = np.hypot(dx, dy)
        safe = np.where(rho > 0, rho, 1.0)
        gx = np.where(rho > 0, dx / safe, 0.0)
        gy = np.where(rho > 0, dy / safe, 0.0)
        return _linear_coverage(rho - domain.radius, gx, gy, grid.hx, grid.hy, 0.0, below=True)
    if isinstance(domain, LevelSetDomain):
        X, Y = grid.centers()
        try:
            gx, gy = domain.field.grad(X, Y)
        except DerivativeUnavailable:
            return _subsampled_fraction(domain, grid, sub)
        vals = domain.field(X, Y)
        frac = _linear_coverage(vals, np.broadcast_to(gx, X.shape), np.broadcast_to(gy, X.shape),
                                grid.hx, grid.hy, domain.level, below=domain.sense == "<")
        # coinciding boundaries (a level set cut at its own zero curve) must not square
        return np.minimum(frac, inside_fraction(domain.within, grid, sub))
    return _subsampled_fraction(domain, grid, sub)


def _rectangle_fraction(rect, grid):
    xs = grid.x0 + np.arange(grid.n + 1) * grid.hx
    ys = grid.y0 + np.arange(grid.n + 1) * grid.hy
    ox = np.clip(np.minimum(xs[1:], rect.x1) - np.maximum(xs[:-1], rect.x0), 0, None) / grid.hx
    oy = np.clip(np.minimum(ys[1:], rect.y1) - np.maximum(ys[:-1], rect.y0), 0, None) / grid.hy
    return np.clip(oy[:, None] * ox[None, :], 0.0, 1.0)


def _subsampled_fraction(domain, grid, sub):
    n = grid.n
    offs = (np.arange(sub) + 0.5) / sub
    xs = grid.x0 + (np.arange(n)[:, None] + offs[None, :]).ravel() * grid.hx
    ys = grid.y0 + (np.arange(n)[:, None] + offs[None, :]).ravel() * grid.hy
    X, Y = np.meshgrid(xs, ys)
    inside = domain.contains(X, Y).astype(float)
    return inside.reshape(n, sub, n, sub).mean(axis=(1, 3))


def _rasterize_one(field: ScalarField, grid: GridSpec, domain: PlanarDomain | None,
                   with_grad: bool) -> GridField:
    X, Y = grid.centers()
    if domain is None:
        mask = np.ones((grid.n, grid.n))
    else:
        mask = inside_fraction(domain, grid)
    with np.errstate(all="ignore"):
        vals = np.asarray(field(X, Y), dtype=float)
    if vals.shape != X.shape:
        vals = np.broadcast_to(vals, X.shape).copy()
    bad = (mask > 0) & ~np.isfinite(vals)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FloatingPointError(
            f"field evaluation failed at ({X[i, j]:.6g}, {Y[i, j]:.6g}) inside the domain")
    grad = None
    if with_grad:
        with np.errstate(all="ignore"):
            gx, gy = field.grad(X, Y)
        grad = (np.broadcast_to(gx, X.shape).astype(float),
                np.broadcast_to(gy, X.shape).astype(float))
    return GridField(grid, vals, mask, grad=grad)


def rasterize(field: ScalarField, grid: GridSpec, domain: PlanarDomain | None = None,
              *, with_grad: bool = False, coarse: bool = True) -> GridField:
    """Sample ``field`` at cell centres with sub-sampled inside-fractions.

    Raises ``FloatingPointError`` when the field is not finite at an
    in-domain cell centre.
    """
    if domain is not None and not grid.contains_box(domain.bbox):
        raise ValueError("grid box does not contain the domain")
    out = _rasterize_one(field, grid, domain, with_grad)
    cg = grid.coarsened() if coarse else None
    if cg is not None and cg.n >= 2:
        out.coarse = _rasterize_one(field, cg, domain, with_grad)
    return out


def _weighted_sum(density: GridField, weights) -> float:
    w = density.mask if weights is None else density.mask * weights
    return float(np.sum(density.samples * w, dtype=np.float64) * density.grid.cell_area)


def integrate(density: GridField, weights: GridField | None = None) -> Quadrature:
    """Masked midpoint rule ``sum f * inside_fraction * h^2``.

    ``weights`` optionally multiplies the mask (e.g. a level-set coverage).
    The error estimate is ``|I_n - I_{n/2}|``, the full difference with the
    coarse grid, which over-covers an O(h^2) error by a factor of about 3.
    """
    w = None if weights is None else weights.samples
    value = _weighted_sum(density, w)
    if density.coarse is None or (weights is not None and weights.coarse is None):
        return Quadrature(value, float("nan"))
    wc = None if weights is None else weights.coarse.samples
    coarse_value = _weighted_sum(density.coarse, wc)
    return Quadrature(value, abs(value - coarse_value))


def _uniform_sum_cdf(s, A, B):
    """CDF of U(0, A) + U(0, B) at ``s`` for ``A >= B >= 0`` (arrays)."""
    tiny = 1e-300
    out = np.where(s >= A + B, 1.0, 0.0)
    deg_a = A <= tiny
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.clip(s / np.where(deg_a, 1.0, A), 0.0, 1.0)
        q1 = s * s / (2.0 * A * B)
        mid = (2.0 * s - B) / (2.0 * A)
        q3 = 1.0 - (A + B - s) ** 2 / (2.0 * A * B)
    thin = B <= 1e-12 * np.maximum(A, tiny)
    full = np.select([s <= 0, s <= B, s <= A, s < A + B], [0.0, q1, mid, q3], 1.0)
    out = np.where(thin, lin, full)
    out = np.where(deg_a, (s > 0).astype(float), out)
    return np.clip(out, 0.0, 1.0)


def _linear_coverage(vals, gx, gy, hx, hy, t, below=False):
    """Area fraction of a cell where ``vals + grad . (x - x_c)`` exceeds ``t``.

    With ``Z = U(-p/2, p/2) + U(-q/2, q/2)`` (``p = |gx| hx``, ``q = |gy| hy``)
    this is ``P(vals + Z > t)``; ``below`` returns the complement.
    """
    p = np.abs(gx) * hx
    q = np.abs(gy) * hy
    A = np.maximum(p, q)
    B = np.minimum(p, q)
    s = (t - vals) + 0.5 * (A + B)
    above = 1.0 - _uniform_sum_cdf(s, A, B)
    return 1.0 - above if below else above


def superlevel_coverage(u: GridField, t: float, direction: str = "superlevel") -> GridField:
    """Per-cell area fraction of ``{u > t}`` (or ``{u < t}``).

    Uses the linearization ``u_c + grad . (x - x_c)`` over each cell, for
    which the covered fraction is a piecewise-quadratic function of ``t``.
    """
    if u.grad is None:
        raise ValueError("coverage needs gradient samples (rasterize with with_grad=True)")
    gx, gy = u.grad
    frac = _linear_coverage(u.samples, gx, gy, u.grid.hx, u.grid.hy, t,
                            below=direction != "superlevel")
    frac = np.where(np.isfinite(u.samples), frac, 0.0)
    coarse = None
    if u.coarse is not None and u.coarse.grad is not None:
        coarse = superlevel_coverage(u.coarse, t, direction)
    return GridField(u.grid, frac, u.mask, coarse=coarse)


def grid_laplacian(u: GridField):
    """Five-point Laplacian of the samples.

    Returns ``(lap, low_confidence)``; edge rows/columns and cells touching
    the domain boundary use one-sided second differences and are flagged.
    """
    v = u.samples
    hx, hy = u.grid.hx, u.grid.hy
    d2x = np.empty_like(v)
    d2y = np.empty_like(v)
    d2x[:, 1:-1] = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / hx ** 2
    d2x[:, 0] = (2 * v[:, 0] - 5 * v[:, 1] + 4 * v[:, 2] - v[:, 3]) / hx ** 2
    d2x[:, -1] = (2 * v[:, -1] - 5 * v[:, -2] + 4 * v[:, -3] - v[:, -4]) / hx ** 2
    d2y[1:-1, :] = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / hy ** 2
    d2y[0, :] = (2 * v[0, :] - 5 * v[1, :] + 4 * v[2, :] - v[3, :]) / hy ** 2
    d2y[-1, :] = (2 * v[-1, :] - 5 * v[-2, :] + 4 * v[-3, :] - v[-4, :]) / hy ** 2
    inside = u.mask > 0
    low = np.zeros(v.shape, dtype=bool)
    low[0, :] = low[-1, :] = low[:, 0] = low[:, -1] = True
    nb_out = np.zeros(v.shape, dtype=bool)
    nb_out[1:, :] |= ~inside[:-1, :]
    nb_out[:-1, :] |= ~inside[1:, :]
    nb_out[:, 1:] |= ~inside[:, :-1]
    nb_out[:, :-1] |= ~inside[:, 1:]
    low |= nb_out | (u.mask < 1.0)
    return d2x + d2y, low


# ---------------------------------------------------------------------------
# level curves

# Edges of a cell with corners 0=(i,j) 1=(i,j+1) 2=(i+1,j+1) 3=(i+1,j):
# edge 0 bottom (0-1), 1 right (1-2), 2 top (3-2), 3 left (0-3).
_EDGE_CORNERS = ((0, 1), (1, 2), (3, 2), (0, 3))

# For each 4-bit case (bit k set when corner k is above the level), the list
# of edge pairs to join, written with the superlevel side on the right of
# (first -> second); ambiguous cases 5 and 10 are split on the centre value.
_CASES = {
    0: [], 15: [],
    1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
    6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
    11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
}
# saddles: (centre above, centre below)
_SADDLE = {
    5: ([(3, 2), (1, 0)], [(3, 0), (1, 2)]),
    10: ([(0, 3), (2, 1)], [(0, 1), (2, 3)]),
}


def jitter_level(samples, t: float) -> float:
    """Nudge ``t`` off any exact sample value, deterministically."""
    finite = samples[np.isfinite(samples)]
    if finite.size == 0:
        return t
    span = float(finite.max() - finite.min()) or 1.0
    step = 1e-12 * span
    k = 0
    while np.any(finite == t) and k < 1000:
        k += 1
        t = t + step
    if k and k * step > 1e-9 * span:
        raise RuntimeError("could not move level off the sample plateau")
    return t


def extract_contour(u: GridField, t: float) -> list[Polyline]:
    """Marching squares on the cell-centre samples of ``u`` at level ``t``.

    Vertices are placed by linear interpolation along cell edges.  Curves are
    oriented with ``{u > t}`` on the left.  Saddle cells are resolved by the
    mean of the four corner values.  Cells with a non-finite corner are skipped.
    """
    v = u.samples
    t = jitter_level(v, t)
    xs, ys = u.grid.axes()
    c0, c1 = v[:-1, :-1], v[:-1, 1:]
    c2, c3 = v[1:, 1:], v[1:, :-1]
    finite = np.isfinite(c0) & np.isfinite(c1) & np.isfinite(c2) & np.isfinite(c3)
    code = ((c0 > t).astype(np.int8) | ((c1 > t) << 1) | ((c2 > t) << 2) | ((c3 > t) << 3))
    code = np.where(finite, code, 0)
    active = np.argwhere((code != 0) & (code != 15))
    if active.size == 0:
        return []

    corners = (c0, c1, c2, c3)

    def corner_pos(i, j, k):
        di, dj = ((0, 0), (0, 1), (1, 1), (1, 0))[k]
        return xs[j + dj], ys[i + di]

    def edge_point(i, j, e):
        a, b = _EDGE_CORNERS[e]
        va, vb = corners[a][i, j], corners[b][i, j]
        xa, ya = corner_pos(i, j, a)
        xb, yb = corner_pos(i, j, b)
        s = (t - va) / (vb - va)
        return (xa + s * (xb - xa), ya + s * (yb - ya))

    def edge_key(i, j, e):
        # shared edges get the same key from both neighbouring cells
        if e == 0:
            return ("h", i, j)
        if e == 2:
            return ("h", i + 1, j)
        if e == 3:
            return ("v", i, j)
        return ("v", i, j + 1)

    nxt: dict = {}
    points: dict = {}
    for i, j in active:
        c = int(code[i, j])
        if c in _SADDLE:
            centre = 0.25 * (c0[i, j] + c1[i, j] + c2[i, j] + c3[i, j])
            pairs = _SADDLE[c][0] if centre > t else _SADDLE[c][1]
        else:
            pairs = _CASES[c]
        for ea, eb in pairs:
            ka, kb = edge_key(i, j, ea), edge_key(i, j, eb)
            if ka not in points:
                points[ka] = edge_point(i, j, ea)
            if kb not in points:
                points[kb] = edge_point(i, j, eb)
            nxt[kb] = ka

    # reversed pairs put the superlevel side on the left of every segment
    prev = {b: a for a, b in nxt.items()}
    lines = []
    seen = set()
    starts = [k for k in nxt if k not in prev]
    for s in starts + list(nxt):
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        k = s
        closed = False
        while k in nxt:
            k = nxt[k]
            if k == s:
                closed = True
                break
            if k in seen:
                break
            chain.append(k)
            seen.add(k)
        verts = np.array([points[k] for k in chain])
        if closed and len(verts) < 3:
            continue
        if not closed and len(verts) < 2:
            continue
        lines.append(Polyline(_drop_duplicates(verts, closed), closed))
    return lines


def _drop_duplicates(verts, closed):
    keep = np.ones(len(verts), dtype=bool)
    keep[1:] = np.any(verts[1:] != verts[:-1], axis=1)
    verts = verts[keep]
    if closed and len(verts) > 1 and np.all(verts[0] == verts[-1]):
        verts = verts[:-1]
    return verts


def weighted_length(line: Polyline, metric: ConformalMetric) -> float:
    """Metric length ``sum |segment| * exp(w(midpoint))``."""
    if len(line.vertices) < 2:
        return 0.0
    a, b = line.segments()
    seg = np.hypot(*(b - a).T)
    mid = 0.5 * (a + b)
    return float(np.sum(seg * metric.length_density(mid[:, 0], mid[:, 1])))
