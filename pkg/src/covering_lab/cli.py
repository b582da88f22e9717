"""Command line: ``covering-lab verify|sweep|suite|profile|isoperimetric|properties``.

Exit status: 0 when every verdict holds, 2 when something is inconclusive,
1 for violations and errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import platform
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .conformal_geometry import ConformalMetric, LevelSetDomain
from .levelset import (SUBLEVEL, SUPERLEVEL, MonotoneParams, compute_profile, monotone_functional,
                       monotonicity_verdict, profile_csv)
from .scenarios import (EXAMPLE3_Q, IDENTITY_PAIRS, SchemaError, builtin_scenarios,
                        load_isoperimetric, load_scenario)
from .sweeps import (PROPERTY_KINDS, SUMMARY_COLUMNS, parse_range, property_sweep, run_sweep,
                     summary_row)
from .verifiers import (COMPARISON_DUAL, COMPARISON_PRIMAL, COVERING, COVERING_LAMBDA, DUAL,
                        GENERAL_DUAL, GENERAL_PRIMAL, HOLDS, INCONCLUSIVE, VIOLATED, WEIGHTED,
                        ScenarioError, dumps, isoperimetric_scan, resolve_scenario, verify)

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2


@dataclass
class RunConfig:
    scenario: Path | None = None
    out: Path | None = None
    grid: int | None = None
    tol: float | None = None
    format: str = "json"

    def __post_init__(self):
        if self.grid is not None and self.grid < 16:
            raise ValueError("--grid must be at least 16")
        if self.tol is not None and not self.tol > 0:
            raise ValueError("--tol must be positive")
        if self.format not in ("json", "csv", "both"):
            raise ValueError("--format must be json, csv or both")


def exit_code(verdicts) -> int:
    verdicts = list(verdicts)
    if any(v not in (HOLDS, INCONCLUSIVE) for v in verdicts):
        return EXIT_FAIL
    if any(v == INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def rows_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def metadata(command: str, argv) -> dict:
    return {"command": command, "argv": list(argv), "version": __version__,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "python": platform.python_version(),
            "numpy": np.__version__}


def _apply_tol(spec, tol):
    if tol is None:
        return spec
    return replace(spec, tolerances=replace(spec.tolerances, pointwise=tol))


def _emit(text: str, out: Path | None, filename: str):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / filename).write_text(text if text.endswith("\n") else text + "\n")


def _write_meta(out: Path | None, stem: str, meta: dict):
    # timestamps live beside the report so reports stay byte-identical across runs
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.meta.json").write_text(dumps(meta) + "\n")


def _summary_line(rep) -> str:
    failed = [h.name for h in rep.hypotheses if not h.passed]
    tail = f"  failed hypotheses: {', '.join(failed)}" if failed else ""
    return (f"{rep.name or rep.kind}: {rep.verdict}  margin={rep.margin:.6g} "
            f"+- {rep.error:.2e}  (lhs={rep.lhs:.10g}, rhs={rep.rhs:.10g}){tail}")


# ---------------------------------------------------------------------------
# commands


def run(cfg: RunConfig, argv=()) -> int:
    """Verify one scenario file and write its report(s)."""
    spec = _apply_tol(load_scenario(cfg.scenario), cfg.tol)
    rep = verify(spec, grid=cfg.grid)
    stem = spec.name or cfg.scenario.stem
    if cfg.format in ("json", "both"):
        _emit(rep.to_json(), cfg.out, f"{stem}.json")
    if cfg.format in ("csv", "both"):
        _emit(rows_csv([summary_row(rep)], SUMMARY_COLUMNS), cfg.out, f"{stem}.csv")
    _write_meta(cfg.out, stem, metadata("verify", argv))
    print(_summary_line(rep), file=sys.stderr)
    return exit_code([rep.verdict])


def cmd_sweep(cfg: RunConfig, ranges, jobs=1, argv=()) -> int:
    parsed = [parse_range(r) for r in ranges]
    for k, vals in parsed:
        if k == "n" and any(v < 16 for v in vals):
            raise ValueError("grid sizes in a sweep must be at least 16")
    if cfg.grid is not None:
        if any(k == "n" for k, _ in parsed):
            raise ValueError("--grid conflicts with a range over n")
        parsed.append(("n", [cfg.grid]))
    rows = run_sweep(cfg.scenario, parsed, tol=cfg.tol, jobs=jobs)
    keys = [k for k, _ in parsed]
    columns = keys + [c for c in SUMMARY_COLUMNS if c not in keys] + ["status"]
    stem = f"{cfg.scenario.stem}-sweep"
    _emit(rows_csv(rows, columns), cfg.out, f"{stem}.csv")
    if cfg.format in ("json", "both") and cfg.out is not None:
        _emit(dumps(rows), cfg.out, f"{stem}.json")
    _write_meta(cfg.out, stem, metadata("sweep", argv))
    for r in rows:
        if r["status"] != "ok":
            print(f"point {dict((k, r[k]) for k in keys)} failed: {r['status']}", file=sys.stderr)
    return exit_code(r["verdict"] for r in rows)


def run_suite(grid: int | None = None) -> tuple[list[dict], list]:
    """Run the built-ins; each row has a ``pass`` flag and a reason."""
    rows, reports = [], {}
    for b in builtin_scenarios():
        rep = verify(b.spec, grid=grid)
        reports[b.name] = rep
        ok, why = rep.verdict in b.allowed, f"verdict {rep.verdict}"
        if ok and b.expect_margin is not None and grid is None:
            target, tol = b.expect_margin
            ok = abs(rep.margin - target) <= tol
            why = f"margin {rep.margin:.6g} vs {target:.6g} +- {tol:g}"
        if ok and b.expect_mass is not None and grid is None:
            q = rep.extras.get("mass_lhs")
            tol = max(b.expect_mass[1] or 0.0, 4 * (rep.extras.get("mass_error") or 0.0))
            ok = q is not None and abs(q - b.expect_mass[0]) <= tol
            why = f"Q {q:.12g} vs {b.expect_mass[0]:.12g} +- {tol:.1e}"
        rows.append({"name": b.name, "kind": rep.kind, "verdict": rep.verdict,
                     "margin": rep.margin, "error": rep.error, "pass": ok, "check": why})
    for a, b in IDENTITY_PAIRS:
        ra, rb = reports[a], reports[b]
        same = ra.margin == rb.margin and ra.verdict == rb.verdict
        rows.append({"name": f"{a} == {b}", "kind": "identity", "verdict": rb.verdict,
                     "margin": rb.margin - ra.margin, "error": 0.0, "pass": same,
                     "check": "margins and verdicts bit-identical" if same else "mismatch"})
    qs = [reports[f"example-3-h{h:g}"].extras.get("mass_lhs") for h in EXAMPLE3_Q]
    dec = all(q is not None for q in qs) and all(x > y > 4 * math.pi for x, y in zip(qs, qs[1:]))
    rows.append({"name": "example-3 sharpness", "kind": "sweep", "verdict": "", "margin": None,
                 "error": None, "pass": bool(dec),
                 "check": "Q(h) strictly decreasing and > 4 pi" if dec else "not monotone"})
    return rows, list(reports.values())


def cmd_suite(grid, out, fmt, argv=()) -> int:
    rows, reports = run_suite(grid)
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{mark}  {r['name']:<{width}}  {r['verdict']:<12} {r['check']}")
    npass = sum(r["pass"] for r in rows)
    print(f"{npass}/{len(rows)} built-in checks passed")
    if out is not None:
        if fmt in ("json", "both"):
            _emit(dumps({"checks": rows, "reports": [r.to_dict() for r in reports]}), out,
                  "suite.json")
        if fmt in ("csv", "both"):
            _emit(rows_csv([summary_row(r) for r in reports], SUMMARY_COLUMNS), out, "suite.csv")
        _write_meta(out, "suite", metadata("suite", argv))
    if any(r["verdict"] == VIOLATED for r in rows):
        return EXIT_FAIL
    return EXIT_OK if npass == len(rows) else EXIT_FAIL


def scenario_profile(spec, levels: int = 200, n: int | None = None):
    """Level-set profile and monotone functional for a scenario's defining field."""
    rep = verify(spec, grid=n)
    resolved, _ = resolve_scenario(spec)
    ex = rep.extras
    if spec.kind in (COVERING, COVERING_LAMBDA, DUAL, WEIGHTED):
        if spec.kind == WEIGHTED:
            raise ScenarioError("profile is not available for the weighted kind")
        dual = spec.kind == DUAL
        u = resolved.u2 - resolved.u1
        dom = spec.domain or LevelSetDomain(u, spec.domain0, 0.0, "<" if dual else ">")
        metric = ConformalMetric(dom, spec.w + resolved.u1)
        params = MonotoneParams(max(1.0 - ex["Theta"], 1e-12), 1.0, ex["lam"], 0.0)
    elif spec.kind in (COMPARISON_PRIMAL, COMPARISON_DUAL, GENERAL_PRIMAL, GENERAL_DUAL):
        dual = spec.kind in (COMPARISON_DUAL, GENERAL_DUAL)
        u = resolved.u1
        dom = spec.domain or LevelSetDomain(u, spec.domain0, 0.0, "<" if dual else ">")
        metric = ConformalMetric(dom, spec.w)
        params = MonotoneParams(ex["theta"], ex["kappa"], ex["lam"], ex["Theta"])
    else:
        raise ScenarioError(f"profile is not available for kind {spec.kind}")
    prof = compute_profile(u, metric, SUBLEVEL if dual else SUPERLEVEL, n=n or spec.n,
                           levels=levels, lengths=True)
    series = monotone_functional(prof, params)
    return rep, prof, series, monotonicity_verdict(series)


def cmd_profile(cfg: RunConfig, levels, argv=()) -> int:
    spec = _apply_tol(load_scenario(cfg.scenario), cfg.tol)
    rep, prof, series, mono = scenario_profile(spec, levels, cfg.grid)
    stem = f"{spec.name or cfg.scenario.stem}-profile"
    _emit(profile_csv(prof, series), cfg.out, f"{stem}.csv")
    _write_meta(cfg.out, stem, metadata("profile", argv))
    g0, e0 = series.at_zero()
    print(f"monotone functional: {'nondecreasing' if mono.passed else 'DECREASES'} over "
          f"{len(prof)} levels (worst step {mono.worst:.3e}); G(0) = {g0:.6g} +- {e0:.1e}",
          file=sys.stderr)
    if not mono.passed:
        return EXIT_FAIL
    return exit_code([rep.verdict])


def cmd_isoperimetric(cfg: RunConfig, argv=()) -> int:
    job = load_isoperimetric(cfg.scenario)
    scan = isoperimetric_scan(job.metric, job.family, job.theta, job.kappa,
                              n=cfg.grid or job.n)
    stem = f"{job.name}-isoperimetric"
    if cfg.format in ("json", "both"):
        _emit(dumps(scan.to_dict()), cfg.out, f"{stem}.json")
    if cfg.format in ("csv", "both"):
        rows = [vars(m) for m in scan.members]
        _emit(rows_csv(rows, list(rows[0])), cfg.out, f"{stem}.csv")
    _write_meta(cfg.out, stem, metadata("isoperimetric", argv))
    print(f"minimum deficit {scan.min_deficit:.6g} at {scan.argmin}; "
          f"{'all members satisfy' if scan.passed else 'some member violates'} the "
          f"({job.theta:g}, {job.kappa:g}) inequality", file=sys.stderr)
    return EXIT_OK if scan.passed else EXIT_FAIL


def cmd_properties(kinds, count, seed, n, out, argv=()) -> int:
    rows = []
    for k in kinds:
        t0 = time.perf_counter()
        r = property_sweep(k, count, seed, n)
        rows.append({"kind": k, "admissible": r.admissible, "attempts": r.attempts,
                     "min_slack": r.min_slack, "violated": r.violated,
                     "worst": r.worst.get("name"), "pass": r.passed and r.admissible >= count,
                     "seconds": round(time.perf_counter() - t0, 1)})
        print(f"{'PASS' if rows[-1]['pass'] else 'FAIL'}  {k:<18} {r.admissible}/{r.attempts} "
              f"admissible, min(margin + error) = {r.min_slack:.3e}, violated = {r.violated}")
    if out is not None:
        _emit(rows_csv(rows, list(rows[0])), out, "properties.csv")
        _write_meta(out, "properties", metadata("properties", argv))
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covering-lab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt=True):
        sp.add_argument("--grid", type=int, help="force grid size N (disables refinement)")
        sp.add_argument("--tol", type=float, help="pointwise hypothesis tolerance")
        sp.add_argument("--out", type=Path, help="output directory (default: stdout)")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv", "both"), default="json")

    sp = sub.add_parser("verify", help="verify one scenario file")
    sp.add_argument("scenario", type=Path)
    common(sp)

    sp = sub.add_parser("sweep", help="cartesian parameter sweep over a scenario file")
    sp.add_argument("scenario", type=Path)
    sp.add_argument("--range", action="append", required=True, dest="ranges",
                    metavar="K=V1:V2:N", help="parameter range, or K=a,b,c; repeatable")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    common(sp)

    sp = sub.add_parser("suite", help="run the built-in scenarios")
    sp.add_argument("--grid", type=int, help="force grid size N for every built-in")
    sp.add_argument("--out", type=Path)
    sp.add_argument("--format", choices=("json", "csv", "both"), default="json")

    sp = sub.add_parser("profile", help="level-set CSV of a scenario's monotone functional")
    sp.add_argument("scenario", type=Path)
    sp.add_argument("--levels", type=int, default=200)
    common(sp, fmt=False)

    sp = sub.add_parser("isoperimetric", help="isoperimetric deficits over a family of sets")
    sp.add_argument("scenario", type=Path)
    common(sp)

    sp = sub.add_parser("properties", help="random admissible scenarios per theorem kind")
    sp.add_argument("--kind", action="append", choices=PROPERTY_KINDS, dest="kinds")
    sp.add_argument("--count", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--grid", type=int, default=128)
    sp.add_argument("--out", type=Path)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "suite":
            if args.grid is not None and args.grid < 16:
                raise ValueError("--grid must be at least 16")
            return cmd_suite(args.grid, args.out, args.format, argv)
        if args.command == "properties":
            return cmd_properties(args.kinds or PROPERTY_KINDS, args.count, args.seed, args.grid,
                                  args.out, argv)
        cfg = RunConfig(args.scenario, args.out, args.grid, args.tol,
                        getattr(args, "format", "csv"))
        if args.command == "verify":
            return run(cfg, argv)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.ranges, args.jobs, argv)
        if args.command == "profile":
            return cmd_profile(cfg, args.levels, argv)
        return cmd_isoperimetric(cfg, argv)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
