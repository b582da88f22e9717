import math
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covering_lab.scenarios import (EXAMPLE1_MARGIN, SchemaError, builtin_scenarios, evaluate,
                                    load_isoperimetric, load_scenario, loads_scenario)
from covering_lab.solver import RadialRequest

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

BASE = """\
schema_version: 1
name: t
kind: covering-lambda
params: {r: 0.6, R: 1.25}
domain0: {shape: disk, radius: r}
u1: {family: cap, R: 1, r: r, orientation: far-pole}
u2: {family: cap, R: R, r: r, orientation: near-pole}
lam: 1/R**2
"""


def test_parse_example_file():
    s = load_scenario(SCENARIOS / "example1.yaml")
    assert s.kind == "covering-lambda"
    assert s.lam == pytest.approx(1.25 ** -2)
    assert s.n == 512 and s.params == {"r": 0.6, "R": 1.25}
    assert s.u1(0.6, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "radial_comparison"])
def test_shipped_scenarios_load(name):
    s = load_scenario(SCENARIOS / f"{name}.yaml")
    assert s.name


def test_solver_request_parsed():
    s = load_scenario(SCENARIOS / "radial_comparison.yaml")
    assert isinstance(s.u1, RadialRequest)
    assert s.u1.guess == "cap" and s.u1.f == 1.3


def test_missing_lam_names_field_and_line():
    text = BASE.replace("lam: 1/R**2\n", "")
    with pytest.raises(SchemaError) as exc:
        loads_scenario(text, source="s.yaml")
    msg = str(exc.value)
    assert "'lam'" in msg and "s.yaml:3" in msg and "covering-lambda" in msg


def test_unknown_field_reports_line():
    text = BASE + "colour: blue\n"
    with pytest.raises(SchemaError) as exc:
        loads_scenario(text, source="s.yaml")
    assert "s.yaml:9" in str(exc.value) and "colour" in str(exc.value)


def test_unknown_nested_field_reports_line():
    text = BASE.replace("orientation: near-pole", "orientation: near-pole, tilt: 2")
    with pytest.raises(SchemaError) as exc:
        loads_scenario(text, source="s.yaml")
    assert "s.yaml:7" in str(exc.value) and "u2.tilt" in str(exc.value)


def test_bad_expression_reported():
    with pytest.raises(SchemaError) as exc:
        loads_scenario(BASE.replace("1/R**2", "1/Q"), source="s.yaml")
    assert "s.yaml:8" in str(exc.value) and "'Q'" in str(exc.value)


def test_missing_kind():
    with pytest.raises(SchemaError):
        loads_scenario(BASE.replace("kind: covering-lambda\n", ""))


def test_duplicate_key():
    with pytest.raises(SchemaError):
        loads_scenario(BASE + "lam: 1\n")


def test_not_a_mapping():
    with pytest.raises(SchemaError):
        loads_scenario("- 1\n- 2\n")


def test_param_override():
    s = loads_scenario(BASE, overrides={"R": 2.0})
    assert s.lam == pytest.approx(0.25)
    assert s.params["R"] == 2.0


def test_grid_override():
    s = loads_scenario(BASE, overrides={"n": 64})
    assert s.n == 64


def test_isoperimetric_file():
    job = load_isoperimetric(SCENARIOS / "cap_circles.yaml")
    assert job.theta == 1.0 and job.kappa == 1.0 and len(job.family) == 5


def test_builtins_cover_examples():
    names = {b.name for b in builtin_scenarios()}
    assert {"example-1", "example-2", "example-3-h0.9", "equal-mass-pair"} <= names
    ex1 = next(b for b in builtin_scenarios() if b.name == "example-1")
    assert ex1.expect_margin == (EXAMPLE1_MARGIN, 0.005)


def test_example_margins_precomputed():
    # 2 pi (1 - 0.8) + 2 pi 1.25 (1.25 + sqrt(1.25^2 - 0.36)) - 4 pi 1.25^2
    assert EXAMPLE1_MARGIN == pytest.approx(0.0517233, abs=1e-7)


class TestExpressions:
    def test_arithmetic(self):
        assert evaluate("sqrt(1 - h**2)", {"h": 0.6}) == pytest.approx(0.8)
        assert evaluate("2*pi*e", {}) == pytest.approx(2 * math.pi * math.e)
        assert evaluate(3, {}) == 3.0

    @pytest.mark.parametrize("expr", ["__import__('os')", "x.real", "[1][0]", "lambda: 1",
                                      "open('f')", "1 if 1 else 2", "True"])
    def test_rejects_non_arithmetic(self, expr):
        with pytest.raises((ValueError, SyntaxError)):
            evaluate(expr, {"x": 1.0})

    def test_rejects_booleans(self):
        with pytest.raises(ValueError):
            evaluate(True, {})

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-100, 100), b=st.floats(0.1, 100))
    def test_matches_python(self, a, b):
        assert evaluate("a*b - a/b + (a+b)**2", {"a": a, "b": b}) == pytest.approx(
            a * b - a / b + (a + b) ** 2)

    @settings(max_examples=100, deadline=None)
    @given(text=st.text(max_size=20))
    def test_arbitrary_text_never_escapes(self, text):
        try:
            v = evaluate(text, {"x": 1.0})
        except (ValueError, SyntaxError, TypeError, ZeroDivisionError, OverflowError,
                RecursionError, MemoryError):
            return
        assert isinstance(v, float)
