import json
import math
from dataclasses import replace
from pathlib import Path

import pytest

from covering_lab.conformal_geometry import (ConformalMetric, ConstantField, Disk,
                                             NEAR_POLE, RadialPolynomialField, Rectangle,
                                             SphereCapSpec,
                                             cap_field)
from covering_lab.scenarios import (EXAMPLE1_MARGIN, EXAMPLE2_MARGIN, EXAMPLE3_Q,
                                    equal_mass_pair, example1, example2, example3, load_scenario)
from covering_lab.verifiers import (HOLDS, INCONCLUSIVE, VIOLATED, ScenarioError, ScenarioSpec,
                                    compute_theta, concentric_disks, isoperimetric_certificate,
                                    isoperimetric_scan, verify, weight_substitution,
                                    _verdict)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="module")
def ex1():
    return verify(example1(supporting=True))


@pytest.fixture(scope="module")
def pair():
    return equal_mass_pair()


def _core(rep):
    return (rep.lhs, rep.rhs, rep.margin, rep.error, rep.verdict)


class TestCovering:
    def test_example1_margin(self, ex1):
        assert ex1.verdict == HOLDS and ex1.hypotheses_ok
        assert ex1.margin == pytest.approx(EXAMPLE1_MARGIN, abs=0.005)
        assert abs(ex1.margin - EXAMPLE1_MARGIN) <= ex1.error
        assert ex1.rhs == pytest.approx(4 * math.pi * 1.25 ** 2)

    def test_example1_theta_zero(self, ex1):
        assert abs(ex1.extras["Theta"]) < 1e-10

    def test_example1_monotone_functional(self, ex1):
        mono = ex1.extras["monotonicity"]
        assert mono["passed"] and mono["levels"] >= 201
        # -G(0) and the quadratic-form margin agree within the combined error
        assert abs(-mono["G0"] - ex1.extras["quadratic_margin"]) <= 4 * mono["G0_error"] + 1e-3

    def test_example2_margin(self):
        rep = verify(example2())
        assert rep.verdict == HOLDS
        assert rep.margin == pytest.approx(EXAMPLE2_MARGIN, abs=0.01)
        assert rep.rhs == pytest.approx(4 * math.pi)

    def test_swapped_pair_fails_order(self):
        s = example1()
        rep = verify(replace(s, u1=s.u2, u2=s.u1))
        assert rep.verdict != HOLDS
        assert not rep.hypothesis("strict_order").passed

    def test_mass_bound_failure(self):
        d = Disk(0.6)
        s = ScenarioSpec(kind="covering", domain0=d, domain=d, u1=ConstantField(2.0),
                         u2=ConstantField(2.5) + RadialPolynomialField([0.0, 0.0]))
        rep = verify(s)
        assert not rep.hypothesis("mass_bound").passed
        assert rep.verdict == INCONCLUSIVE

    def test_mass_bound_failure_for_large_cap(self):
        # near-pole cap with R = 2 over B_1.5 has mass 2 pi R (R + h) > 4 pi
        d = Disk(1.5)
        u1 = cap_field(SphereCapSpec(2.0, 1.5, NEAR_POLE))
        u2 = u1 + RadialPolynomialField([0.225, -0.1])
        rep = verify(ScenarioSpec(kind="covering", domain0=d, domain=d, u1=u1, u2=u2, n=256))
        assert not rep.hypothesis("mass_bound").passed
        assert rep.verdict == INCONCLUSIVE

    def test_covering_lambda_needs_lam(self):
        with pytest.raises(ScenarioError):
            verify(example1(lam=None))

    def test_unknown_kind(self):
        with pytest.raises(ScenarioError):
            example1(kind="triple")

    def test_lambda_out_of_range(self):
        rep = verify(example1(lam=1.5))
        assert not rep.hypothesis("lambda_range").passed


class TestDispatchIdentities:
    def test_covering_is_covering_lambda_one(self):
        a = verify(example1(kind="covering", lam=None))
        b = verify(example1(lam=1.0))
        assert _core(a) == _core(b)

    def test_weighted_with_unit_weight(self):
        a = verify(example1())
        b = verify(example1(kind="weighted", h=ConstantField(1.0)))
        assert _core(a) == _core(b)

    def test_general_with_unit_parameters(self):
        a = verify(example3(0.9, n=256))
        b = verify(example3(0.9, n=256, kind="general-primal", theta=1.0, kappa=1.0))
        assert (a.lhs, a.rhs, a.margin) == (b.lhs, b.rhs, b.margin)

    def test_equal_mass_unit_weight(self, pair):
        a = verify(pair)
        b = verify(replace(pair, h=ConstantField(1.0)))
        assert _core(a) == _core(b)


class TestWeightSubstitution:
    def test_unit_weight_is_identity(self):
        u = cap_field(SphereCapSpec(1.0, 0.6))
        assert weight_substitution(u, 1.0) is u
        assert weight_substitution(u, None) is u

    def test_constant_weight_shifts(self):
        u = cap_field(SphereCapSpec(1.0, 0.6))
        v = weight_substitution(u, math.e ** 2)
        assert v(0.1, 0.2) == pytest.approx(u(0.1, 0.2) + 1.0, rel=1e-15)

    def test_field_weight(self):
        u = ConstantField(0.0)
        h = RadialPolynomialField([1.0, 1.0])
        v = weight_substitution(u, h, Disk(0.5))
        assert v(0.3, 0.4) == pytest.approx(0.5 * math.log(1.25))

    def test_nonpositive_weight(self):
        with pytest.raises(ValueError):
            weight_substitution(ConstantField(0.0), 0.0)
        with pytest.raises(ValueError):
            weight_substitution(ConstantField(0.0), RadialPolynomialField([-1.0, 1.0]), Disk(0.5))


class TestTheta:
    def test_constant_positive_part(self):
        g = ConformalMetric(Disk(1.0))
        assert compute_theta(ConstantField(1.0), g) == pytest.approx(0.5, abs=1e-4)
        assert compute_theta(ConstantField(-1.0), g) == 0.0

    def test_negative_part(self):
        g = ConformalMetric(Disk(1.0))
        assert compute_theta(ConstantField(-2.0), g, sign="negative-part") == pytest.approx(
            1.0, abs=1e-4)

    def test_metric_weighting(self):
        # K of a unit cap integrated over the cap: (1/2pi) * 2 pi (1 - h) = 0.2
        g = ConformalMetric(Disk(0.6), cap_field(SphereCapSpec(1.0, 0.6)))
        assert compute_theta(ConstantField(1.0), g, n=512) == pytest.approx(0.2, abs=1e-5)

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            compute_theta(ConstantField(1.0), ConformalMetric(Disk(1.0)), sign="both")


class TestComparison:
    @pytest.mark.parametrize("h", sorted(EXAMPLE3_Q))
    def test_example3_mass_matches_golden(self, h):
        rep = verify(example3(h))
        assert rep.extras["mass_lhs"] == pytest.approx(EXAMPLE3_Q[h], abs=max(rep.extras["mass_error"], 1e-6))
        assert rep.verdict in (HOLDS, INCONCLUSIVE)

    def test_margin_vanishes_with_u(self):
        margins = []
        for eps in (0.1, 0.01, 0.001):
            u = RadialPolynomialField([0.36 * eps, -eps])
            s = ScenarioSpec(kind="general-primal", domain0=Disk(0.6), domain=Disk(0.6), u1=u,
                             lam=1.0, theta=1.0, kappa=1.0, n=128)
            rep = verify(s)
            assert rep.margin >= -rep.error
            margins.append(rep.margin)
        assert margins[0] > margins[1] > margins[2] >= 0
        assert margins[2] < 1e-2

    def test_solver_built_mass_bound(self):
        rep = verify(load_scenario(SCENARIOS / "radial_comparison.yaml"))
        assert rep.verdict == HOLDS
        assert rep.extras["mass_margin"] >= -rep.extras["mass_error"]
        assert rep.extras["monotonicity"]["passed"]

    def test_comparison_requires_lam(self):
        with pytest.raises(ScenarioError):
            verify(example3(0.9, n=64, lam=None))

    def test_unresolved_peak_is_not_violated(self):
        # at 32 cells the peak of e^{2u} is narrower than one cell
        rep = verify(example3(0.999, n=32, max_refinements=0))
        assert rep.verdict == INCONCLUSIVE
        assert not rep.hypothesis("quadrature_resolution").passed

    def test_unresolved_peak_triggers_refinement(self):
        rep = verify(example3(0.999, n=64, max_refinements=4))
        assert rep.verdict == HOLDS
        assert rep.hypothesis("quadrature_resolution").passed

    def test_sign_condition_violation(self):
        s = example3(0.9, n=128)
        rep = verify(replace(s, u1=-1.0 * s.u1))
        assert rep.verdict != HOLDS


class TestEqualMass:
    def test_identical_fields_inconclusive(self):
        u = cap_field(SphereCapSpec(1.0, 0.6))
        s = ScenarioSpec(kind="equal-mass", domain0=Disk(0.6), u1=u, u2=u, n=128)
        rep = verify(s)
        assert rep.verdict == INCONCLUSIVE
        assert not rep.hypothesis("not_identical").passed

    def test_pair_holds(self, pair):
        rep = verify(pair)
        assert rep.verdict == HOLDS, [h.to_dict() for h in rep.hypotheses if not h.passed]
        assert rep.lhs >= 4 * math.pi
        for key in ("mu_plus", "mu_minus", "mass_plus", "mass_minus", "band_measure"):
            assert key in rep.extras
        assert abs(rep.extras["mass_u1"] - rep.extras["mass_u2"]) < 1e-3

    def test_pair_parameters(self, pair):
        assert pair.params["p2"] > pair.params["p1"]
        assert pair.c == pytest.approx(pair.params["c"])


class TestReports:
    def test_json_round_trip(self, ex1):
        data = json.loads(ex1.to_json())
        assert data["verdict"] == HOLDS and data["margin"] == ex1.margin
        assert {"hypotheses", "lhs", "rhs", "error", "provenance", "extras"} <= set(data)

    def test_json_deterministic(self):
        assert verify(example2(n=128)).to_json() == verify(example2(n=128)).to_json()

    @pytest.mark.parametrize("margin, err, ok, expected", [
        (1.0, 0.1, True, HOLDS), (-1.0, 0.1, True, VIOLATED), (0.05, 0.1, True, INCONCLUSIVE),
        (1.0, 0.1, False, INCONCLUSIVE), (-1.0, 0.1, False, INCONCLUSIVE)])
    def test_verdict_rule(self, margin, err, ok, expected):
        assert _verdict(margin, err, ok) == expected


class TestIsoperimetric:
    def test_flat_disks_equality(self):
        g = ConformalMetric(Rectangle(-1, 1, -1, 1))
        scan = isoperimetric_scan(g, concentric_disks(radii=(0.2, 0.5, 0.9)), 1.0, 0.0)
        for m in scan.members:
            assert abs(m.deficit) <= 1e-3 * m.s ** 2

    def test_cap_circles_equality(self):
        g = ConformalMetric(Disk(1.0), cap_field(SphereCapSpec(1.0, 1.0 - 1e-9)))
        scan = isoperimetric_scan(g, concentric_disks(radii=(0.3, 0.6, 0.9)), 1.0, 1.0)
        for m in scan.members:
            assert abs(m.deficit) <= 1e-3 * m.s ** 2

    def test_unit_square(self):
        g = ConformalMetric(Rectangle(-1, 1, -1, 1))
        scan = isoperimetric_scan(g, [Rectangle(-0.5, 0.5, -0.5, 0.5)], 1.0, 0.0)
        m = scan.members[0]
        assert abs(m.deficit - (16 - 4 * math.pi)) <= max(m.error, 1e-9)
        assert scan.passed

    def test_superlevel_family(self):
        g = ConformalMetric(Disk(0.9))
        scan = isoperimetric_scan(g, RadialPolynomialField([1.0, -1.0]), 1.0, 0.0, n=256)
        assert scan.passed and len(scan.members) > 10

    def test_certificate_for_flat_disk(self):
        cert = isoperimetric_certificate(ConformalMetric(Disk(0.6)), 1.0, 1.0)
        assert cert["certified"]
