"""Parameter sweeps over scenario files and seeded random admissible scenarios."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conformal_geometry import (FAR_POLE, ConstantField, Disk, RadialPolynomialField,
                                 SphereCapSpec, cap_field)
from .solver import RadialRequest, SolverError
from .verifiers import (COMPARISON_DUAL, COMPARISON_PRIMAL, COVERING_LAMBDA, DUAL, GENERAL_DUAL,
                        GENERAL_PRIMAL, VIOLATED, ScenarioSpec, verify)

SWEEP_KEYS = ("R", "r", "lam", "h", "n")


# ---------------------------------------------------------------------------
# ranges


def parse_range(text: str) -> tuple[str, list]:
    """``k=v1:v2:n`` (n evenly spaced points) or ``k=a,b,c``."""
    if "=" not in text:
        raise ValueError(f"range {text!r} must look like k=v1:v2:n or k=a,b,c")
    key, spec = text.split("=", 1)
    key = key.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"range {text!r}: expected v1:v2:n")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError(f"range {text!r}: n must be positive")
        vals = [a] if n == 1 else list(np.linspace(a, b, n))
    else:
        vals = [float(v) for v in spec.split(",") if v.strip()]
    if not vals:
        raise ValueError(f"range {text!r} is empty")
    if key == "n":
        vals = [int(round(v)) for v in vals]
    return key, [float(v) if key != "n" else v for v in vals]


def grid_points(ranges: list[tuple[str, list]]) -> list[dict]:
    """Cartesian product in the order the ranges were given (last key varies fastest)."""
    if not ranges:
        return [{}]
    keys = [k for k, _ in ranges]
    if len(set(keys)) != len(keys):
        raise ValueError("a parameter appears in more than one range")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in ranges))]


SUMMARY_COLUMNS = ("name", "kind", "lhs", "rhs", "margin", "error", "verdict", "n",
                   "mass_lhs", "mass_rhs")


def summary_row(report) -> dict:
    return {"name": report.name, "kind": report.kind, "lhs": report.lhs, "rhs": report.rhs,
            "margin": report.margin, "error": report.error, "verdict": report.verdict,
            "n": report.provenance.get("grid", {}).get("n"),
            "mass_lhs": report.extras.get("mass_lhs"), "mass_rhs": report.extras.get("mass_rhs")}


def _sweep_point(args):
    path, point, tol = args
    from .scenarios import load_scenario

    row = dict(point)
    try:
        spec = load_scenario(path, overrides=point)
        if tol is not None:
            from dataclasses import replace
            spec = replace(spec, tolerances=replace(spec.tolerances, pointwise=tol))
        rep = verify(spec)
        row.update(summary_row(rep))
        row["status"] = "ok"
    except Exception as exc:  # recorded per point; the sweep continues
        row.update({k: None for k in SUMMARY_COLUMNS})
        row["verdict"] = "error"
        row["status"] = f"{type(exc).__name__}: {exc}"
    return row


def run_sweep(path, ranges, tol=None, jobs: int = 1) -> list[dict]:
    """One row per point of the cartesian product, in input order."""
    points = grid_points(ranges)
    tasks = [(str(path), p, tol) for p in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


# ---------------------------------------------------------------------------
# random admissible scenarios

PROPERTY_KINDS = (COVERING_LAMBDA, DUAL, COMPARISON_PRIMAL, COMPARISON_DUAL, GENERAL_PRIMAL,
                  GENERAL_DUAL)


class Rejected(Exception):
    """The sampled data did not produce an admissible scenario."""


@dataclass
class _Base:
    """Flat plane or the unit-sphere cap metric, as seen by the radial solver."""

    w: object
    K: float

    def W(self, rho):
        return np.exp(2.0 * self.w(rho, np.zeros_like(rho)))


def _base(rng, r) -> _Base:
    if rng.random() < 0.5:
        return _Base(ConstantField(0.0), 0.0)
    # the unit sphere in stereographic coordinates, K = 1
    w = cap_field(SphereCapSpec(1.0, float(rng.uniform(0.3, 0.99)), FAR_POLE))
    return _Base(w, 1.0)


def _solve(req: RadialRequest):
    try:
        return req.resolve()
    except SolverError as exc:
        raise Rejected(f"solver: {exc}") from exc


def _profile(fld, rho):
    return fld.profile(rho)[0]


def _positive_inside(fld, radius, sign=1.0):
    rho = np.linspace(0.0, radius, 65)[:-1]
    return bool(np.all(sign * _profile(fld, rho) > 0))


def _gen_covering_lambda(rng, n):
    r = float(rng.uniform(0.3, 1.0))
    base = _base(rng, r)
    lam1 = float(rng.uniform(0.6, 1.2))
    lam = float(rng.uniform(0.3, 1.0))
    c0, c1 = float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5))
    b = float(rng.uniform(-1.2, 0.3))
    extra = float(rng.choice([0.0, rng.uniform(0.0, 1.0)]))
    f1 = lambda rho: c0 + c1 * rho ** 2
    u1 = _solve(RadialRequest(lam1, r, b, f=lambda rho: base.W(rho) * (base.K + f1(rho)),
                              h=base.W))

    def F1(rho):
        # W (Delta_g u1 + e^{2 u1}) in flat terms
        return base.W(rho) * (base.K + f1(rho) + (1.0 - lam1) * np.exp(2 * _profile(u1, rho)))

    u2 = _solve(RadialRequest(lam, r, b, f=lambda rho: F1(rho) + base.W(rho) * extra,
                              h=base.W, guess="cap"))
    if not _positive_inside(_Diff(u2, u1), r):
        raise Rejected("u2 > u1 fails")
    d = Disk(r)
    return ScenarioSpec(kind=COVERING_LAMBDA, domain0=d, domain=d, u1=u1, u2=u2, w=base.w,
                        lam=lam, n=n, params={"r": r, "lam": lam, "lam1": lam1, "c0": c0,
                                              "c1": c1, "b": b, "extra": extra, "K": base.K})


def _gen_dual(rng, n):
    r = float(rng.uniform(0.3, 1.0))
    base = _base(rng, r)
    c0, c1 = float(rng.uniform(0.0, 0.6)), float(rng.uniform(0.0, 0.6))
    b = float(rng.uniform(-1.0, 0.3))
    lam2 = float(rng.uniform(1.0, 2.0))
    s = float(rng.uniform(0.0, 1.0))
    f1 = lambda rho: c0 + c1 * rho ** 2
    W = base.W
    u1 = _solve(RadialRequest(1.0, r, b, f=lambda rho: W(rho) * (base.K + f1(rho)), h=W,
                              guess="cap"))
    u2 = _solve(RadialRequest(lam2, r, b, f=lambda rho: s * W(rho) * (base.K + f1(rho)), h=W))
    if not _positive_inside(_Diff(u1, u2), r):
        raise Rejected("u2 < u1 fails")
    d = Disk(r)
    return ScenarioSpec(kind=DUAL, domain0=d, domain=d, u1=u1, u2=u2, w=base.w, lam=1.0, n=n,
                        params={"r": r, "lam2": lam2, "c0": c0, "c1": c1, "b": b, "s": s,
                                "K": base.K})


def _single(rng, n, kind, dual, general):
    r = float(rng.uniform(0.3, 1.0))
    base = _base(rng, r)
    W = base.W
    lam = float(rng.uniform(0.3, 2.0))
    theta, kappa = 1.0, 1.0
    if general:
        theta, kappa = float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.0, 1.0))
    if general:
        c1 = float(rng.uniform(-1.0, 1.0))
        if dual:
            # kappa - f(r) > lam makes the small branch negative near the boundary
            lam = float(rng.uniform(0.05, 1.0))
            c0 = kappa - c1 * r * r - lam - float(rng.uniform(0.0, 1.0))
        else:
            c0 = float(rng.uniform(-1.0, 1.0))
        fdata = RadialPolynomialField([c0, c1])
        rhs = lambda rho: W(rho) * (kappa - (c0 + c1 * rho ** 2))
    else:
        eps = float(rng.uniform(0.0, 0.8))
        c0, c1 = (-eps, 0.0) if dual else (eps, 0.0)
        fdata = None
        if dual:
            lam = float(rng.uniform(0.05, 1.0 - eps)) if eps < 0.95 else 0.02
        rhs = lambda rho: W(rho) * (1.0 + c0)
    sign = -1.0 if dual else 1.0
    u = None
    for guess in ((None, "cap") if not dual else (None,)):
        try:
            cand = _solve(RadialRequest(lam, r, 0.0, f=rhs, h=W, guess=guess))
        except Rejected:
            continue
        if _positive_inside(cand, r, sign):
            u = cand
            break
    if u is None:
        raise Rejected("no branch with the required sign")
    d = Disk(r)
    return ScenarioSpec(kind=kind, domain0=d, domain=d, u1=u, w=base.w, lam=lam, f=fdata,
                        theta=theta, kappa=kappa, n=n,
                        params={"r": r, "lam": lam, "theta": theta, "kappa": kappa, "c0": c0,
                                "c1": c1, "K": base.K})


class _Diff:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def profile(self, rho):
        return (self.a.profile(rho)[0] - self.b.profile(rho)[0],)


GENERATORS = {
    COVERING_LAMBDA: _gen_covering_lambda,
    DUAL: _gen_dual,
    COMPARISON_PRIMAL: lambda rng, n: _single(rng, n, COMPARISON_PRIMAL, False, False),
    COMPARISON_DUAL: lambda rng, n: _single(rng, n, COMPARISON_DUAL, True, False),
    GENERAL_PRIMAL: lambda rng, n: _single(rng, n, GENERAL_PRIMAL, False, True),
    GENERAL_DUAL: lambda rng, n: _single(rng, n, GENERAL_DUAL, True, True),
}


@dataclass
class PropertySweep:
    kind: str
    seed: int
    admissible: int
    attempts: int
    min_slack: float  # min over scenarios of margin + error
    worst: dict
    violated: int
    verdicts: dict = field(default_factory=dict)
    rejections: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violated == 0 and self.min_slack >= 0.0


def property_sweep(kind: str, count: int = 100, seed: int = 0, n: int = 128,
                   max_attempts: int | None = None) -> PropertySweep:
    """Verify ``count`` random admissible scenarios of ``kind``.

    A scenario counts as admissible when the generator produced it and every
    hypothesis of the verifier passed; everything else is tallied as a
    rejection.
    """
    gen = GENERATORS[kind]
    rng = np.random.default_rng(seed)
    max_attempts = max_attempts or 20 * count
    admissible = attempts = violated = 0
    min_slack, worst = math.inf, {}
    verdicts: dict = {}
    rejections: dict = {}
    while admissible < count and attempts < max_attempts:
        attempts += 1
        try:
            spec = gen(rng, n)
        except Rejected as exc:
            key = str(exc).split(":")[0]
            rejections[key] = rejections.get(key, 0) + 1
            continue
        spec.name = f"{kind}-{seed}-{attempts}"
        rep = verify(spec)
        failed = [h.name for h in rep.hypotheses if not h.passed]
        if failed:
            key = "hypothesis " + ",".join(failed)
            rejections[key] = rejections.get(key, 0) + 1
            continue
        admissible += 1
        verdicts[rep.verdict] = verdicts.get(rep.verdict, 0) + 1
        violated += rep.verdict == VIOLATED
        slack = rep.margin + rep.error
        if slack < min_slack:
            min_slack = slack
            worst = {"name": spec.name, "margin": rep.margin, "error": rep.error,
                     "verdict": rep.verdict, "params": dict(spec.params)}
    return PropertySweep(kind, seed, admissible, attempts, min_slack, worst, violated,
                         verdicts, rejections)
