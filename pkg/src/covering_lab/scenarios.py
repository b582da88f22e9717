"""Scenario files: schema, parameter expressions and the built-in suite.

Scenario files are YAML mappings.  Every numeric entry may be a number or
an arithmetic expression over the ``params`` table (``"2/(1+h)"``,
``"sqrt(1-h**2)"``), evaluated by a small AST walker.  Unknown keys are
errors; diagnostics carry the line of the offending entry.

Minimal example::

    schema_version: 1
    name: caps
    kind: covering-lambda
    params: {R: 1.25, r: 0.6}
    domain0: {shape: disk, radius: r}
    u1: {family: cap, R: 1, r: r, orientation: far-pole}
    u2: {family: cap, R: R, r: r, orientation: near-pole}
    lam: 1/R**2
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

import yaml

from .conformal_geometry import (FAR_POLE, NEAR_POLE, ConformalMetric, Disk, LevelSetDomain,
                                 Rectangle, SphereCapSpec, cap_field, field_from_config)
from .solver import RadialRequest
from .verifiers import KIND_ALIASES, KINDS, ScenarioSpec, Tolerances, concentric_disks

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "name", "description", "kind", "params", "domain0", "domain",
            "metric", "u1", "u", "u2", "lam", "f", "h", "H", "c", "theta", "kappa",
            "simply_connected", "grid", "tolerances", "supporting"}
ISO_KEYS = {"schema_version", "name", "description", "params", "domain0", "metric", "theta",
            "kappa", "family", "grid"}
FIELD_KEYS = {
    "constant": {"value"},
    "zero": set(),
    "linear": {"ax", "ay", "c"},
    "radial-polynomial": {"coeffs", "center"},
    "cap": {"R", "r", "orientation", "center"},
    "sum": {"terms"},
    "exp": {"field", "scale"},
    "log": {"field"},
}
SOLVER_KEYS = {"solver", "lam", "radius", "boundary", "f", "h", "guess", "center", "degree"}
GRID_KEYS = {"n", "max_refinements"}
TOL_KEYS = set(Tolerances.__dataclass_fields__)


class SchemaError(ValueError):
    """A scenario file does not match the schema; the message names field and line."""


# ---------------------------------------------------------------------------
# expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log, "sin": math.sin,
          "cos": math.cos, "tan": math.tan, "abs": abs}
_CONSTS = {"pi": math.pi, "e": math.e}


def evaluate(expr, params: dict) -> float:
    """Evaluate a numeric literal or an arithmetic expression over ``params``."""
    if isinstance(expr, bool):
        raise ValueError("expected a number, got a boolean")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise ValueError(f"expected a number or expression, got {type(expr).__name__}")
    tree = ast.parse(expr.strip(), mode="eval")

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](walk(node.operand))
        if isinstance(node, ast.Name):
            if node.id in params:
                return float(params[node.id])
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ValueError(f"unknown name {node.id!r}")
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            return float(_FUNCS[node.func.id](*(walk(a) for a in node.args)))
        raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")

    return float(walk(tree))


# ---------------------------------------------------------------------------
# YAML with line numbers


def _plain(node, path, lines):
    """Convert a composed YAML node into Python data, recording line numbers by path."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = k.value
            if key in out:
                raise SchemaError(f"line {k.start_mark.line + 1}: duplicate key {key!r}")
            out[key] = _plain(v, path + (key,), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node)) if node.tag != "tag:yaml.org,2002:str" \
        else node.value


def parse_text(text: str) -> tuple[dict, dict]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise SchemaError(f"not valid YAML: {exc}") from exc
    if node is None or not isinstance(node, yaml.MappingNode):
        raise SchemaError("line 1: scenario must be a mapping")
    lines: dict = {}
    return _plain(node, (), lines), lines


class _Ctx:
    def __init__(self, lines, params, source):
        self.lines = lines
        self.params = params
        self.source = source

    def fail(self, path, msg):
        line = None
        p = tuple(path)
        while p and line is None:
            line = self.lines.get(p)
            p = p[:-1]
        where = ".".join(str(x) for x in path) or "<top>"
        loc = f"{self.source}:{line}" if line else self.source
        raise SchemaError(f"{loc}: field '{where}': {msg}")

    def missing(self, key, anchor=("kind",), why=""):
        line = self.lines.get(tuple(anchor)) or self.lines.get(())
        loc = f"{self.source}:{line}" if line else self.source
        raise SchemaError(f"{loc}: field '{key}': missing required field{why}")

    def num(self, value, path):
        try:
            return evaluate(value, self.params)
        except (ValueError, SyntaxError, ZeroDivisionError, OverflowError) as exc:
            self.fail(path, str(exc))

    def keys(self, d, allowed, path, required=()):
        if not isinstance(d, dict):
            self.fail(path, "expected a mapping")
        for k in d:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown field (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in d:
                self.fail(path, f"missing required field '{k}'")


def _field(cfg, ctx: _Ctx, path):
    """A field config with expressions evaluated, or a radial solver request."""
    if isinstance(cfg, (int, float, str)) and not isinstance(cfg, bool):
        return field_from_config({"family": "constant", "value": ctx.num(cfg, path)})
    if not isinstance(cfg, dict):
        ctx.fail(path, "expected a field mapping or a number")
    if "solver" in cfg:
        return _request(cfg, ctx, path)
    fam = cfg.get("family")
    if fam not in FIELD_KEYS:
        ctx.fail(tuple(path) + ("family",), f"unknown field family {fam!r}")
    ctx.keys(cfg, FIELD_KEYS[fam] | {"family"}, path)
    out = {"family": fam}
    p = tuple(path)
    if fam == "constant":
        out["value"] = ctx.num(cfg.get("value", 0.0), p + ("value",))
    elif fam == "linear":
        for k in ("ax", "ay", "c"):
            out[k] = ctx.num(cfg.get(k, 0.0), p + (k,))
    elif fam == "radial-polynomial":
        coeffs = cfg.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            ctx.fail(p + ("coeffs",), "expected a nonempty list")
        out["coeffs"] = [ctx.num(v, p + ("coeffs", i)) for i, v in enumerate(coeffs)]
        out["center"] = _pair(cfg.get("center", [0, 0]), ctx, p + ("center",))
    elif fam == "cap":
        ctx.keys(cfg, FIELD_KEYS["cap"] | {"family"}, path, required=("R", "r"))
        out["R"] = ctx.num(cfg["R"], p + ("R",))
        out["r"] = ctx.num(cfg["r"], p + ("r",))
        orient = cfg.get("orientation", FAR_POLE)
        if orient not in (FAR_POLE, NEAR_POLE):
            ctx.fail(p + ("orientation",), f"must be {FAR_POLE!r} or {NEAR_POLE!r}")
        out["orientation"] = orient
        out["center"] = _pair(cfg.get("center", [0, 0]), ctx, p + ("center",))
        try:
            return cap_field(SphereCapSpec(out["R"], out["r"], orient), tuple(out["center"]))
        except ValueError as exc:
            ctx.fail(path, str(exc))
    elif fam == "sum":
        terms = cfg.get("terms")
        if not isinstance(terms, list) or not terms:
            ctx.fail(p + ("terms",), "expected a nonempty list")
        built = []
        for i, t in enumerate(terms):
            ctx.keys(t, {"coef", "field"}, p + ("terms", i), required=("field",))
            coef = ctx.num(t.get("coef", 1.0), p + ("terms", i, "coef"))
            built.append((coef, _field(t["field"], ctx, p + ("terms", i, "field"))))
        from .conformal_geometry import SumField
        return SumField(built)
    elif fam in ("exp", "log"):
        if "field" not in cfg:
            ctx.fail(path, "missing required field 'field'")
        inner = _field(cfg["field"], ctx, p + ("field",))
        from .conformal_geometry import ExpField, LogField
        if fam == "exp":
            return ExpField(inner, ctx.num(cfg.get("scale", 1.0), p + ("scale",)))
        return LogField(inner)
    return field_from_config(out)


def _pair(v, ctx, path):
    if not isinstance(v, list) or len(v) != 2:
        ctx.fail(path, "expected a pair [x, y]")
    return [ctx.num(v[0], tuple(path) + (0,)), ctx.num(v[1], tuple(path) + (1,))]


def _request(cfg, ctx: _Ctx, path):
    p = tuple(path)
    ctx.keys(cfg, SOLVER_KEYS, path, required=("lam", "radius"))
    if cfg["solver"] != "radial":
        ctx.fail(p + ("solver",), "only the 'radial' solver can be requested from a file")
    guess = cfg.get("guess")
    if isinstance(guess, dict):
        guess = _field(guess, ctx, p + ("guess",))
    elif guess not in (None, "cap"):
        ctx.fail(p + ("guess",), "guess must be 'cap' or a field")

    def data(k, default):
        if k not in cfg:
            return default
        v = cfg[k]
        if isinstance(v, dict):
            return _field(v, ctx, p + (k,))
        return ctx.num(v, p + (k,))

    degree = cfg.get("degree", 64)
    if not isinstance(degree, int) or degree < 8:
        ctx.fail(p + ("degree",), "degree must be an integer >= 8")
    radius = ctx.num(cfg["radius"], p + ("radius",))
    if not radius > 0:
        ctx.fail(p + ("radius",), "radius must be positive")
    return RadialRequest(lam=ctx.num(cfg["lam"], p + ("lam",)), radius=radius,
                         boundary=ctx.num(cfg.get("boundary", 0.0), p + ("boundary",)),
                         f=data("f", 0.0), h=data("h", 1.0), guess=guess,
                         center=tuple(_pair(cfg.get("center", [0, 0]), ctx, p + ("center",))),
                         degree=degree)


def _domain(cfg, ctx: _Ctx, path):
    p = tuple(path)
    if not isinstance(cfg, dict):
        ctx.fail(path, "expected a domain mapping")
    shape = cfg.get("shape")
    if shape == "disk":
        ctx.keys(cfg, {"shape", "radius", "center"}, path, required=("radius",))
        radius = ctx.num(cfg["radius"], p + ("radius",))
        if not radius > 0:
            ctx.fail(p + ("radius",), "radius must be positive")
        return Disk(radius, tuple(_pair(cfg.get("center", [0, 0]), ctx, p + ("center",))))
    if shape == "rectangle":
        ctx.keys(cfg, {"shape", "bounds"}, path, required=("bounds",))
        b = cfg["bounds"]
        if not isinstance(b, list) or len(b) != 4:
            ctx.fail(p + ("bounds",), "expected [x0, x1, y0, y1]")
        vals = [ctx.num(v, p + ("bounds", i)) for i, v in enumerate(b)]
        if not (vals[1] > vals[0] and vals[3] > vals[2]):
            ctx.fail(p + ("bounds",), "empty rectangle")
        return Rectangle(*vals)
    if shape == "level-set":
        ctx.keys(cfg, {"shape", "field", "within", "level", "sense"}, path,
                 required=("field", "within"))
        sense = cfg.get("sense", ">")
        if sense not in (">", "<"):
            ctx.fail(p + ("sense",), "sense must be '>' or '<'")
        return LevelSetDomain(_field(cfg["field"], ctx, p + ("field",)),
                              _domain(cfg["within"], ctx, p + ("within",)),
                              ctx.num(cfg.get("level", 0.0), p + ("level",)), sense)
    ctx.fail(p + ("shape",), f"unknown domain shape {shape!r} (disk, rectangle, level-set)")


def _header(data, ctx: _Ctx, allowed):
    ctx.keys(data, allowed, ())
    ver = data.get("schema_version")
    if ver is None:
        ctx.missing("schema_version", anchor=())
    if ver != SCHEMA_VERSION:
        ctx.fail(("schema_version",), f"unsupported version {ver!r} (expected {SCHEMA_VERSION})")
    if "domain0" not in data:
        ctx.missing("domain0", anchor=())


def _params(data, lines, source, overrides):
    raw = data.get("params", {}) or {}
    ctx = _Ctx(lines, {}, source)
    if not isinstance(raw, dict):
        ctx.fail(("params",), "expected a mapping")
    params: dict = {}
    # params may refer to earlier params
    for k, v in raw.items():
        if k in (overrides or {}):
            params[k] = float(overrides[k])
            continue
        ctx.params = params
        params[k] = ctx.num(v, ("params", k))
    for k, v in (overrides or {}).items():
        if k not in params and k not in ("n",):
            raise SchemaError(f"{source}: override of unknown parameter '{k}'")
        params.setdefault(k, float(v))
    ctx.params = params
    return ctx


def scenario_from_dict(data: dict, lines: dict | None = None, source: str = "<scenario>",
                       overrides: dict | None = None) -> ScenarioSpec:
    """Validate a parsed scenario and build the ScenarioSpec.

    ``overrides`` replaces entries of the ``params`` table (``n`` overrides
    the grid resolution).
    """
    lines = lines or {}
    ctx = _params(data, lines, source, overrides)
    _header(data, ctx, TOP_KEYS)
    kind = data.get("kind")
    if kind is None:
        ctx.missing("kind", anchor=())
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        ctx.fail(("kind",), f"unknown kind {kind!r} (one of {', '.join(KINDS)})")
    if "u" in data and "u1" in data:
        ctx.fail(("u",), "give either 'u' or 'u1', not both")
    ukey = "u" if "u" in data else "u1"
    if ukey not in data:
        ctx.missing("u1", why=" (or 'u')")
    needs_u2 = kind not in ("comparison-primal", "comparison-dual", "general-primal",
                            "general-dual")
    if needs_u2 and "u2" not in data:
        ctx.missing("u2", why=f" for kind {kind}")
    if not needs_u2 and "u2" in data:
        ctx.fail(("u2",), f"kind {kind} takes a single field 'u'")
    needs_lam = kind in ("covering-lambda", "comparison-primal", "comparison-dual",
                         "general-primal", "general-dual")
    if needs_lam and "lam" not in data:
        ctx.missing("lam", why=f" for kind {kind}")
    if kind == "weighted" and "h" not in data:
        ctx.missing("h", why=" for kind weighted")

    kw: dict[str, Any] = {}
    kw["domain0"] = _domain(data["domain0"], ctx, ("domain0",))
    if "domain" in data:
        kw["domain"] = _domain(data["domain"], ctx, ("domain",))
    if "metric" in data:
        ctx.keys(data["metric"], {"w"}, ("metric",), required=("w",))
        kw["w"] = _field(data["metric"]["w"], ctx, ("metric", "w"))
    kw["u1"] = _field(data[ukey], ctx, (ukey,))
    if "u2" in data:
        kw["u2"] = _field(data["u2"], ctx, ("u2",))
    for k in ("f", "h", "H"):
        if k in data:
            kw[k] = _field(data[k], ctx, (k,))
    for k in ("lam", "c", "theta", "kappa"):
        if k in data:
            kw[k] = ctx.num(data[k], (k,))
    if "theta" in kw and not 0 < kw["theta"] <= 1:
        ctx.fail(("theta",), "theta must lie in (0, 1]")
    for k in ("simply_connected", "supporting"):
        if k in data:
            if not isinstance(data[k], bool):
                ctx.fail((k,), "expected true or false")
            kw[k] = data[k]
    if "grid" in data:
        ctx.keys(data["grid"], GRID_KEYS, ("grid",))
        g = data["grid"]
        if "n" in g:
            kw["n"] = _int(g["n"], ctx, ("grid", "n"), 16)
        if "max_refinements" in g:
            kw["max_refinements"] = _int(g["max_refinements"], ctx, ("grid", "max_refinements"), 0)
    if overrides and "n" in overrides:
        kw["n"] = int(overrides["n"])
    if "tolerances" in data:
        ctx.keys(data["tolerances"], TOL_KEYS, ("tolerances",))
        vals = {}
        for k, v in data["tolerances"].items():
            x = ctx.num(v, ("tolerances", k))
            if not x > 0:
                ctx.fail(("tolerances", k), "tolerance must be positive")
            vals[k] = x
        kw["tolerances"] = Tolerances(**vals)
    name = data.get("name", Path(source).stem if source else "scenario")
    return ScenarioSpec(kind=kind, name=str(name), params=dict(ctx.params), **kw)


def _int(v, ctx, path, lo):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        ctx.fail(path, f"expected an integer >= {lo}")
    return v


def load_scenario(path, overrides: dict | None = None) -> ScenarioSpec:
    path = Path(path)
    data, lines = parse_text(path.read_text())
    return scenario_from_dict(data, lines, str(path), overrides)


def loads_scenario(text: str, overrides: dict | None = None, source="<string>") -> ScenarioSpec:
    data, lines = parse_text(text)
    return scenario_from_dict(data, lines, source, overrides)


@dataclass
class IsoperimetricJob:
    name: str
    metric: ConformalMetric
    family: Any
    theta: float
    kappa: float
    n: int = 512


def load_isoperimetric(path, overrides: dict | None = None) -> IsoperimetricJob:
    """An isoperimetric scan file: metric, ``(theta, kappa)`` and a family of sets.

    ``family`` is ``{type: disks, radii: [...], center: [x, y]}``,
    ``{type: superlevel, field: ...}`` or ``{type: domains, members: [...]}``.
    """
    path = Path(path)
    data, lines = parse_text(path.read_text())
    ctx = _params(data, lines, str(path), overrides)
    _header(data, ctx, ISO_KEYS)
    dom0 = _domain(data["domain0"], ctx, ("domain0",))
    w = None
    if "metric" in data:
        ctx.keys(data["metric"], {"w"}, ("metric",), required=("w",))
        w = _field(data["metric"]["w"], ctx, ("metric", "w"))
    metric = ConformalMetric(dom0, w) if w is not None else ConformalMetric(dom0)
    theta = ctx.num(data.get("theta", 1.0), ("theta",))
    kappa = ctx.num(data.get("kappa", 0.0), ("kappa",))
    if not 0 < theta <= 1:
        ctx.fail(("theta",), "theta must lie in (0, 1]")
    fam = data.get("family")
    if not isinstance(fam, dict):
        ctx.fail(("family",), "missing or malformed family")
    t = fam.get("type")
    if t == "disks":
        ctx.keys(fam, {"type", "radii", "center"}, ("family",), required=("radii",))
        radii = [ctx.num(v, ("family", "radii", i)) for i, v in enumerate(fam["radii"])]
        family = concentric_disks(tuple(_pair(fam.get("center", [0, 0]), ctx,
                                              ("family", "center"))), radii)
    elif t == "superlevel":
        ctx.keys(fam, {"type", "field"}, ("family",), required=("field",))
        family = _field(fam["field"], ctx, ("family", "field"))
    elif t == "domains":
        ctx.keys(fam, {"type", "members"}, ("family",), required=("members",))
        family = [_domain(m, ctx, ("family", "members", i)) for i, m in enumerate(fam["members"])]
    else:
        ctx.fail(("family", "type"), "family type must be disks, superlevel or domains")
    n = 512
    if "grid" in data:
        ctx.keys(data["grid"], {"n"}, ("grid",))
        n = _int(data["grid"].get("n", 512), ctx, ("grid", "n"), 16)
    return IsoperimetricJob(str(data.get("name", path.stem)), metric, family, theta, kappa, n)


# ---------------------------------------------------------------------------
# built-in suite


@dataclass
class Builtin:
    name: str
    spec: ScenarioSpec
    allowed: tuple = ("holds",)
    note: str = ""
    expect_margin: tuple | None = None  # (value, tolerance)
    expect_mass: tuple | None = None


def example1(r=0.6, R=1.25, n=512, **kw) -> ScenarioSpec:
    """Unit far-pole cap below the near-pole cap of radius ``R`` (covering with lam = R^-2)."""
    u1 = cap_field(SphereCapSpec(1.0, r, FAR_POLE))
    u2 = cap_field(SphereCapSpec(R, r, NEAR_POLE))
    d = Disk(r)
    kw.setdefault("kind", "covering-lambda")
    kw.setdefault("lam", R ** -2)
    return ScenarioSpec(domain0=d, u1=u1, u2=u2, domain=d, n=n,
                        params={"r": r, "R": R}, name=kw.pop("name", "example-1"), **kw)


def example2(r=0.6, R=0.8, n=512, **kw) -> ScenarioSpec:
    """Unit near-pole cap above the far-pole cap of radius ``R < 1`` (dual)."""
    u1 = cap_field(SphereCapSpec(1.0, r, NEAR_POLE))
    u2 = cap_field(SphereCapSpec(R, r, FAR_POLE))
    d = Disk(r)
    return ScenarioSpec(kind="dual", domain0=d, u1=u1, u2=u2, domain=d, n=n,
                        params={"r": r, "R": R}, name=kw.pop("name", "example-2"), **kw)


def example3(h=0.9, n=512, **kw) -> ScenarioSpec:
    """``u = u2 - u1`` for the sharpness family ``R = 2/(1+h)``, ``r = sqrt(1-h^2)``."""
    r = math.sqrt(1.0 - h * h)
    u1 = cap_field(SphereCapSpec(1.0, r, FAR_POLE))
    u2 = cap_field(SphereCapSpec(2.0 / (1.0 + h), r, NEAR_POLE))
    d = Disk(r)
    kw.setdefault("kind", "comparison-primal")
    kw.setdefault("lam", 1.0)
    return ScenarioSpec(domain0=d, u1=u2 - u1, domain=d, n=n, params={"h": h, "r": r},
                        name=kw.pop("name", f"example-3-h{h:g}"), **kw)


# values of int_{B_r} e^{2(u2-u1)} dx + pi r^2 from adaptive 1-D quadrature of the radial
# integrand (scipy.integrate.quad, relative tolerance 1e-13)
EXAMPLE3_Q = {0.9: 12.734041950973076, 0.99: 12.569397719420767, 0.999: 12.566415243160439}
# closed forms: 2 pi (1 - h1) + 2 pi R (R + h2) - 4 pi R^2 and 2 pi (1 + h1) + 2 pi R (R - h2) - 4 pi
EXAMPLE1_MARGIN = 2 * math.pi * (1 - 0.8) + 2 * math.pi * 1.25 * (1.25 + math.sqrt(1.25 ** 2 - 0.36)) \
    - 4 * math.pi * 1.25 ** 2
EXAMPLE2_MARGIN = 2 * math.pi * (1 + 0.8) + 2 * math.pi * 0.8 * (0.8 - math.sqrt(0.64 - 0.36)) \
    - 4 * math.pi


def builtin_scenarios() -> list:
    from .conformal_geometry import ConstantField

    out = [
        Builtin("example-1", example1(supporting=True), expect_margin=(EXAMPLE1_MARGIN, 0.005)),
        Builtin("example-2", example2(), expect_margin=(EXAMPLE2_MARGIN, 0.01)),
    ]
    for h, q in EXAMPLE3_Q.items():
        out.append(Builtin(f"example-3-h{h:g}", example3(h), expect_mass=(q, None)))
    # dispatch identities
    out.append(Builtin("identity-covering", example1(kind="covering", lam=None,
                                                     name="identity-covering")))
    out.append(Builtin("identity-covering-lambda-1", example1(lam=1.0,
                                                              name="identity-covering-lambda-1")))
    out.append(Builtin("identity-weighted-h1", example1(kind="weighted", h=ConstantField(1.0),
                                                        name="identity-weighted-h1")))
    out.append(Builtin("identity-general-primal", example3(0.9, kind="general-primal",
                                                           theta=1.0, kappa=1.0,
                                                           name="identity-general-primal")))
    pair = equal_mass_pair()
    out.append(Builtin("equal-mass-pair", pair))
    out.append(Builtin("identity-equal-mass-h1", replace(pair, h=ConstantField(1.0),
                                                         name="identity-equal-mass-h1")))
    return out


IDENTITY_PAIRS = (("identity-covering", "identity-covering-lambda-1"),
                  ("example-1", "identity-weighted-h1"),
                  ("example-3-h0.9", "identity-general-primal"),
                  ("equal-mass-pair", "identity-equal-mass-h1"))


def with_grid(spec: ScenarioSpec, n: int) -> ScenarioSpec:
    return replace(spec, n=int(n), max_refinements=0)


def _shoot(p, k, r):
    """Radial IVP ``u'' + u'/rho = k - e^{2u}``, ``u(0) = p``; returns (solution, u(r), mass)."""
    from scipy.integrate import solve_ivp

    t0 = 1e-7
    a = (k - math.exp(2 * p)) / 4.0

    def rhs(t, y):
        return [y[1], k - math.exp(2 * y[0]) - y[1] / t]

    sol = solve_ivp(rhs, [t0, r], [p + a * t0 * t0, 2 * a * t0], rtol=1e-12, atol=1e-13,
                    dense_output=True)
    u, du = sol.y[:, -1]
    return sol, float(u), k * math.pi * r * r - 2 * math.pi * r * float(du)


def equal_mass_pair(k=5.0, r=0.6, p1=2.5, n=512, **kw) -> ScenarioSpec:
    """Two radial solutions of ``Delta u + e^{2u} = k`` on ``B_r`` with equal masses.

    For large enough ``k r^2`` the mass is not monotone in the peak value, so
    a second solution with the same mass exists past the maximum.  Its
    boundary offset ``c`` is found by root-finding the mass difference; both
    solutions are then recomputed by the radial solver from shooting guesses.
    """
    from scipy.optimize import brentq

    _, b1, m1 = _shoot(p1, k, r)
    # walk up in the peak value past the mass maximum until the mass drops below m1
    lo, hi, peak = p1, None, m1
    for j in range(1, 200):
        p = p1 + 0.05 * j
        m = _shoot(p, k, r)[2]
        peak = max(peak, m)
        if peak > m1 and m < m1:
            hi = p
            break
        lo = p
    if hi is None:
        raise ValueError("no second solution with the same mass in the scanned range")
    p2 = brentq(lambda p: _shoot(p, k, r)[2] - m1, lo, hi, xtol=1e-14)
    s2, b2, _ = _shoot(p2, k, r)
    s1, _, _ = _shoot(p1, k, r)

    def guess(sol):
        return lambda rho: sol.sol(np.clip(rho, 1e-7, r))[0]

    u1 = RadialRequest(1.0, r, b1, f=k, guess=guess(s1)).resolve()
    u2 = RadialRequest(1.0, r, b2, f=k, guess=guess(s2)).resolve()
    d = Disk(r)
    return ScenarioSpec(kind=kw.pop("kind", "equal-mass-equation"), domain0=d, domain=d,
                        u1=u1, u2=u2, c=b2 - b1, n=n,
                        params={"k": k, "r": r, "p1": p1, "p2": p2, "c": b2 - b1},
                        name=kw.pop("name", "equal-mass-pair"), **kw)
