"""Conformal metrics on planar domains.

A metric is stored as a conformal exponent ``w`` over a planar domain, so
that ``g = exp(2w) |dx|^2``: areas are weighted by ``exp(2w)`` and lengths by
``exp(w)``.  Scalar fields carry their own gradient and Laplacian; the
analytic families below are hand-coded with exact derivatives.

The sphere-cap family comes from stereographic projection of a sphere of
radius ``R`` onto a plane at height ``+-h`` with ``h = sqrt(R^2 - r^2)``::

    exp(u(x)) = 2 R a / (|x|^2 + a^2),   a = R + h (far pole) or R - h (near pole)

which satisfies ``Delta u + R^-2 exp(2u) = 0`` and vanishes on ``|x| = r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

FAR_POLE = "far-pole"
NEAR_POLE = "near-pole"


class DerivativeUnavailable(RuntimeError):
    """Raised when a field cannot supply a requested derivative."""


def _xy(x, y):
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """Base class for evaluable scalar fields on the plane.

    Subclasses implement ``__call__``, ``grad`` and ``laplacian`` on
    broadcastable coordinate arrays.  ``derivative_mode`` is ``"exact"`` for
    closed-form derivatives and ``"finite-difference"`` otherwise.
    """

    derivative_mode = "exact"

    def __call__(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        raise DerivativeUnavailable(f"{type(self).__name__} has no gradient")

    def laplacian(self, x, y):
        raise DerivativeUnavailable(f"{type(self).__name__} has no Laplacian")

    def to_config(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")

    # linear algebra on fields; coefficients stay exact so that u + 0 == u
    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = ConstantField(float(other))
        return SumField([(1.0, self), (1.0, other)])

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = ConstantField(float(other))
        return SumField([(1.0, self), (-1.0, other)])

    def __rsub__(self, other):
        return ConstantField(float(other)) - self

    def __neg__(self):
        return SumField([(-1.0, self)])

    def __mul__(self, k):
        if not isinstance(k, (int, float)):
            return NotImplemented
        return SumField([(float(k), self)])

    __rmul__ = __mul__


class ConstantField(ScalarField):
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def __call__(self, x, y):
        x, y = _xy(x, y)
        return np.full(np.broadcast(x, y).shape, self.value)

    def grad(self, x, y):
        z = np.zeros(np.broadcast(*_xy(x, y)).shape)
        return z, z.copy()

    def laplacian(self, x, y):
        return np.zeros(np.broadcast(*_xy(x, y)).shape)

    def to_config(self):
        return {"family": "constant", "value": self.value}

    def __repr__(self):
        return f"ConstantField({self.value!r})"


class LinearField(ScalarField):
    """``u = ax*x + ay*y + c``."""

    def __init__(self, ax: float = 1.0, ay: float = 0.0, c: float = 0.0):
        self.ax, self.ay, self.c = float(ax), float(ay), float(c)

    def __call__(self, x, y):
        x, y = _xy(x, y)
        return self.ax * x + self.ay * y + self.c

    def grad(self, x, y):
        shape = np.broadcast(*_xy(x, y)).shape
        return np.full(shape, self.ax), np.full(shape, self.ay)

    def laplacian(self, x, y):
        return np.zeros(np.broadcast(*_xy(x, y)).shape)

    def to_config(self):
        return {"family": "linear", "ax": self.ax, "ay": self.ay, "c": self.c}


class RadialPolynomialField(ScalarField):
    """``u = sum_k coeffs[k] * |x - center|^(2k)``."""

    def __init__(self, coeffs: Sequence[float], center=(0.0, 0.0)):
        self.coeffs = [float(c) for c in coeffs]
        self.center = (float(center[0]), float(center[1]))

    def _s(self, x, y):
        x, y = _xy(x, y)
        dx, dy = x - self.center[0], y - self.center[1]
        return dx, dy, dx * dx + dy * dy

    def __call__(self, x, y):
        _, _, s = self._s(x, y)
        out = np.zeros_like(s)
        for c in reversed(self.coeffs):
            out = out * s + c
        return out

    def _ds(self, s):
        # d/ds of the polynomial in s
        out = np.zeros_like(s)
        for k in range(len(self.coeffs) - 1, 0, -1):
            out = out * s + k * self.coeffs[k]
        return out

    def grad(self, x, y):
        dx, dy, s = self._s(x, y)
        d = self._ds(s)
        return 2.0 * dx * d, 2.0 * dy * d

    def laplacian(self, x, y):
        _, _, s = self._s(x, y)
        # Laplacian of rho^(2k) is (2k)^2 rho^(2k-2)
        out = np.zeros_like(s)
        for k in range(len(self.coeffs) - 1, 0, -1):
            out = out * s + 4.0 * k * k * self.coeffs[k]
        return out

    def to_config(self):
        return {"family": "radial-polynomial", "coeffs": list(self.coeffs),
                "center": list(self.center)}


class SumField(ScalarField):
    """Linear combination ``sum_i c_i F_i``."""

    def __init__(self, terms):
        flat = []
        for coef, f in terms:
            flat.append((float(coef), f))
        self.terms = flat

    @property
    def derivative_mode(self):
        modes = {f.derivative_mode for _, f in self.terms}
        return "exact" if modes <= {"exact"} else "finite-difference"

    def __call__(self, x, y):
        out = None
        for c, f in self.terms:
            v = f(x, y) if c == 1.0 else c * f(x, y)
            out = v if out is None else out + v
        return out

    def grad(self, x, y):
        gx = gy = None
        for c, f in self.terms:
            fx, fy = f.grad(x, y)
            if c != 1.0:
                fx, fy = c * fx, c * fy
            gx = fx if gx is None else gx + fx
            gy = fy if gy is None else gy + fy
        return gx, gy

    def laplacian(self, x, y):
        out = None
        for c, f in self.terms:
            v = f.laplacian(x, y)
            if c != 1.0:
                v = c * v
            out = v if out is None else out + v
        return out

    def to_config(self):
        return {"family": "sum",
                "terms": [{"coef": c, "field": f.to_config()} for c, f in self.terms]}


class ExpField(ScalarField):
    """``exp(scale * F)``."""

    def __init__(self, inner: ScalarField, scale: float = 1.0):
        self.inner = inner
        self.scale = float(scale)

    @property
    def derivative_mode(self):
        return self.inner.derivative_mode

    def __call__(self, x, y):
        return np.exp(self.scale * self.inner(x, y))

    def grad(self, x, y):
        e = self(x, y)
        gx, gy = self.inner.grad(x, y)
        return self.scale * e * gx, self.scale * e * gy

    def laplacian(self, x, y):
        e = self(x, y)
        gx, gy = self.inner.grad(x, y)
        s = self.scale
        return e * (s * self.inner.laplacian(x, y) + s * s * (gx * gx + gy * gy))

    def to_config(self):
        return {"family": "exp", "scale": self.scale, "field": self.inner.to_config()}


class LogField(ScalarField):
    """``log F`` for a positive field ``F``."""

    def __init__(self, inner: ScalarField):
        self.inner = inner

    @property
    def derivative_mode(self):
        return self.inner.derivative_mode

    def __call__(self, x, y):
        return np.log(self.inner(x, y))

    def grad(self, x, y):
        v = self.inner(x, y)
        gx, gy = self.inner.grad(x, y)
        return gx / v, gy / v

    def laplacian(self, x, y):
        v = self.inner(x, y)
        gx, gy = self.inner.grad(x, y)
        return self.inner.laplacian(x, y) / v - (gx * gx + gy * gy) / (v * v)

    def to_config(self):
        return {"family": "log", "field": self.inner.to_config()}


class FunctionField(ScalarField):
    """Wraps user callables.

    Missing derivatives are replaced by central differences with step
    ``fd_step`` and the field reports ``derivative_mode = "finite-difference"``.
    """

    def __init__(self, func: Callable, grad: Callable | None = None,
                 laplacian: Callable | None = None, fd_step: float = 1e-4):
        self.func = func
        self._grad = grad
        self._lap = laplacian
        self.fd_step = fd_step
        if grad is None or laplacian is None:
            self.derivative_mode = "finite-difference"

    def __call__(self, x, y):
        x, y = _xy(x, y)
        return np.asarray(self.func(x, y), dtype=float)

    def grad(self, x, y):
        if self._grad is not None:
            return self._grad(*_xy(x, y))
        x, y = _xy(x, y)
        h = self.fd_step
        return ((self(x + h, y) - self(x - h, y)) / (2 * h),
                (self(x, y + h) - self(x, y - h)) / (2 * h))

    def laplacian(self, x, y):
        if self._lap is not None:
            return self._lap(*_xy(x, y))
        return fd_laplacian(self, x, y, self.fd_step)


def fd_laplacian(f: ScalarField, x, y, step: float):
    """Five-point finite-difference Laplacian of ``f`` at ``(x, y)``."""
    x, y = _xy(x, y)
    h = float(step)
    c = f(x, y)
    return (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * c) / (h * h)


# ---------------------------------------------------------------------------
# sphere caps


@dataclass(frozen=True)
class SphereCapSpec:
    """Stereographic chart of a sphere of radius ``R`` cut at planar radius ``r``."""

    R: float
    r: float
    orientation: str = FAR_POLE

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"sphere radius R must be positive, got {self.R}")
        if not self.r > 0:
            raise ValueError(f"planar radius r must be positive, got {self.r}")
        if self.r > self.R:
            raise ValueError(f"r={self.r} exceeds R={self.R}: cap height undefined")
        if self.orientation not in (FAR_POLE, NEAR_POLE):
            raise ValueError(f"orientation must be {FAR_POLE!r} or {NEAR_POLE!r}")

    @property
    def h(self) -> float:
        return math.sqrt(max(self.R * self.R - self.r * self.r, 0.0))

    @property
    def a(self) -> float:
        return self.R + self.h if self.orientation == FAR_POLE else self.R - self.h

    @property
    def lam(self) -> float:
        """Coefficient in ``Delta u + lam exp(2u) = 0``."""
        return 1.0 / (self.R * self.R)


class CapField(ScalarField):
    def __init__(self, spec: SphereCapSpec, center=(0.0, 0.0)):
        self.spec = spec
        self.center = (float(center[0]), float(center[1]))
        a = spec.a
        if not a > 0:
            raise ValueError("degenerate cap: a = R - h must be positive")
        self._a2 = a * a
        self._log2Ra = math.log(2.0 * spec.R * a)

    def _q(self, x, y):
        x, y = _xy(x, y)
        dx, dy = x - self.center[0], y - self.center[1]
        return dx, dy, dx * dx + dy * dy + self._a2

    def __call__(self, x, y):
        _, _, q = self._q(x, y)
        return self._log2Ra - np.log(q)

    def grad(self, x, y):
        dx, dy, q = self._q(x, y)
        return -2.0 * dx / q, -2.0 * dy / q

    def laplacian(self, x, y):
        _, _, q = self._q(x, y)
        return -4.0 * self._a2 / (q * q)

    def to_config(self):
        return {"family": "cap", "R": self.spec.R, "r": self.spec.r,
                "orientation": self.spec.orientation, "center": list(self.center)}

    def __repr__(self):
        return f"CapField({self.spec!r})"


def cap_field(spec: SphereCapSpec, center=(0.0, 0.0)) -> CapField:
    return CapField(spec, center)


def cap_area(spec: SphereCapSpec, rho: float) -> float:
    """Exact metric area ``int_{B_rho} exp(2u)`` of the cap chart.

    Equals ``4 pi R^2 rho^2 / (rho^2 + a^2)``; at ``rho = r`` this is
    ``2 pi R (R - h)`` for the far pole and ``2 pi R (R + h)`` for the near pole.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    R, a = spec.R, spec.a
    if math.isinf(rho):
        return 4.0 * math.pi * R * R
    return 4.0 * math.pi * R * R * rho * rho / (rho * rho + a * a)


# ---------------------------------------------------------------------------
# planar domains


class PlanarDomain:
    simply_connected = True

    def contains(self, x, y):
        raise NotImplementedError

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def boundary(self, m: int = 2048):
        """Vertices of the boundary as an ``(m, 2)`` array, or None if not analytic."""
        return None

    def to_config(self) -> dict:
        raise TypeError(f"{type(self).__name__} is not serializable")


@dataclass(frozen=True)
class Disk(PlanarDomain):
    radius: float
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")

    def contains(self, x, y):
        x, y = _xy(x, y)
        dx, dy = x - self.center[0], y - self.center[1]
        return dx * dx + dy * dy < self.radius * self.radius

    @property
    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    @property
    def area(self):
        return math.pi * self.radius ** 2

    def boundary(self, m: int = 2048):
        phi = np.linspace(0.0, 2.0 * math.pi, m, endpoint=False)
        return np.column_stack([self.center[0] + self.radius * np.cos(phi),
                                self.center[1] + self.radius * np.sin(phi)])

    def to_config(self):
        return {"shape": "disk", "radius": self.radius, "center": list(self.center)}


@dataclass(frozen=True)
class Rectangle(PlanarDomain):
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle needs x0 < x1 and y0 < y1")

    def contains(self, x, y):
        x, y = _xy(x, y)
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)

    @property
    def bbox(self):
        return (self.x0, self.x1, self.y0, self.y1)

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def boundary(self, m: int = 2048):
        k = max(m // 4, 1)
        t = np.linspace(0.0, 1.0, k, endpoint=False)
        x0, x1, y0, y1 = self.bbox
        sides = [
            np.column_stack([x0 + (x1 - x0) * t, np.full(k, y0)]),
            np.column_stack([np.full(k, x1), y0 + (y1 - y0) * t]),
            np.column_stack([x1 - (x1 - x0) * t, np.full(k, y1)]),
            np.column_stack([np.full(k, x0), y1 - (y1 - y0) * t]),
        ]
        return np.vstack(sides)

    def to_config(self):
        return {"shape": "rectangle", "bounds": [self.x0, self.x1, self.y0, self.y1]}


class LevelSetDomain(PlanarDomain):
    """``{p in within : sign * (F(p) - level) > 0}``."""

    def __init__(self, field: ScalarField, within: PlanarDomain, level: float = 0.0,
                 sense: str = ">", simply_connected: bool = True):
        if sense not in (">", "<"):
            raise ValueError("sense must be '>' or '<'")
        self.field = field
        self.within = within
        self.level = float(level)
        self.sense = sense
        self.simply_connected = simply_connected

    def contains(self, x, y):
        v = self.field(x, y) - self.level
        inside = v > 0 if self.sense == ">" else v < 0
        return self.within.contains(x, y) & inside

    @property
    def bbox(self):
        return self.within.bbox


class MaskDomain(PlanarDomain):
    """Union of grid cells flagged in a boolean mask (rows = y, cols = x)."""

    def __init__(self, bounds, mask, simply_connected: bool = True):
        self.bounds = tuple(float(b) for b in bounds)
        self.mask = np.asarray(mask, dtype=bool)
        self.simply_connected = simply_connected
        ny, nx = self.mask.shape
        x0, x1, y0, y1 = self.bounds
        self._hx = (x1 - x0) / nx
        self._hy = (y1 - y0) / ny

    def contains(self, x, y):
        x, y = _xy(x, y)
        x0, x1, y0, y1 = self.bounds
        j = np.floor((x - x0) / self._hx).astype(int)
        i = np.floor((y - y0) / self._hy).astype(int)
        ny, nx = self.mask.shape
        ok = (i >= 0) & (i < ny) & (j >= 0) & (j < nx)
        out = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        out[ok] = self.mask[i[ok], j[ok]]
        return out

    def component_count(self) -> int:
        from scipy import ndimage

        _, count = ndimage.label(self.mask)
        return int(count)

    @property
    def bbox(self):
        return self.bounds


def domain_from_config(cfg: dict) -> PlanarDomain:
    shape = cfg.get("shape")
    if shape == "disk":
        return Disk(float(cfg["radius"]), tuple(float(c) for c in cfg.get("center", (0.0, 0.0))))
    if shape == "rectangle":
        x0, x1, y0, y1 = (float(b) for b in cfg["bounds"])
        return Rectangle(x0, x1, y0, y1)
    raise ValueError(f"unknown domain shape {shape!r}")


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ConformalMetric:
    """``g = exp(2w) |dx|^2`` on ``domain``."""

    domain: PlanarDomain
    w: ScalarField = field(default_factory=ConstantField)

    def area_density(self, x, y):
        return np.exp(2.0 * self.w(x, y))

    def length_density(self, x, y):
        return np.exp(self.w(x, y))

    def laplace_beltrami(self, u: ScalarField, x, y):
        return np.exp(-2.0 * self.w(x, y)) * u.laplacian(x, y)

    @property
    def is_flat_exponent(self) -> bool:
        return isinstance(self.w, ConstantField)


class CurvatureField(ScalarField):
    """``K = -exp(-2w) Delta w``; its own derivatives are not provided."""

    def __init__(self, w: ScalarField):
        self.w = w
        self.derivative_mode = w.derivative_mode

    def __call__(self, x, y):
        return -np.exp(-2.0 * self.w(x, y)) * self.w.laplacian(x, y)


def gauss_curvature(metric: ConformalMetric) -> ScalarField:
    if isinstance(metric.w, CurvatureField):
        raise DerivativeUnavailable("conformal exponent has no Laplacian")
    if isinstance(metric.w, ConstantField):
        return ConstantField(0.0)
    return CurvatureField(metric.w)


def conformal_rescale(metric: ConformalMetric, u: ScalarField) -> ConformalMetric:
    """Metric ``exp(2u) g``; its curvature is ``exp(-2u) (K - Delta_g u)``."""
    if isinstance(u, ConstantField) and u.value == 0.0:
        return metric
    return ConformalMetric(metric.domain, metric.w + u)


def field_from_config(cfg: dict) -> ScalarField:
    """Rebuild an analytic field from its ``to_config`` dictionary."""
    fam = cfg.get("family")
    if fam == "constant":
        return ConstantField(float(cfg["value"]))
    if fam == "zero":
        return ConstantField(0.0)
    if fam == "linear":
        return LinearField(float(cfg.get("ax", 0.0)), float(cfg.get("ay", 0.0)),
                           float(cfg.get("c", 0.0)))
    if fam == "radial-polynomial":
        return RadialPolynomialField(cfg["coeffs"], tuple(cfg.get("center", (0.0, 0.0))))
    if fam == "cap":
        spec = SphereCapSpec(float(cfg["R"]), float(cfg["r"]), cfg.get("orientation", FAR_POLE))
        return CapField(spec, tuple(cfg.get("center", (0.0, 0.0))))
    if fam == "sum":
        return SumField([(float(t.get("coef", 1.0)), field_from_config(t["field"]))
                         for t in cfg["terms"]])
    if fam == "exp":
        return ExpField(field_from_config(cfg["field"]), float(cfg.get("scale", 1.0)))
    if fam == "log":
        return LogField(field_from_config(cfg["field"]))
    raise ValueError(f"unknown field family {fam!r}")
