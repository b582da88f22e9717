import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covering_lab.conformal_geometry import (ConformalMetric, Disk, LinearField,
                                             RadialPolynomialField, SphereCapSpec, cap_area,
                                             cap_field)
from covering_lab.levelset import (SUBLEVEL, SUPERLEVEL, FunctionalSeries, MonotoneParams,
                                   compute_profile, default_levels, monotone_functional,
                                   monotonicity_verdict, profile_csv)

R, r = 1.25, 0.6
SPEC = SphereCapSpec(R, r)
U = cap_field(SPEC)
FLAT = ConformalMetric(Disk(r))


@pytest.fixture(scope="module")
def profile():
    return compute_profile(U, FLAT, n=256, lengths=True)


def radius_of_level(t):
    # e^u = 2Ra/(rho^2 + a^2) = e^t
    return np.sqrt(np.maximum(2 * R * SPEC.a * np.exp(-t) - SPEC.a ** 2, 0.0))


def test_alpha_at_zero_is_cap_area(profile):
    assert profile.t[0] == 0.0
    exact = cap_area(SPEC, r)
    assert abs(profile.alpha[0] - exact) <= max(profile.alpha_err[0], 1e-5)
    assert profile.beta[0] == pytest.approx(math.pi * r * r, abs=1e-4)
    assert profile.total_area == pytest.approx(math.pi * r * r, abs=1e-4)


def test_alpha_matches_closed_form_along_levels(profile):
    rho = radius_of_level(profile.t)
    exact = np.array([cap_area(SPEC, x) if x > 0 else 0.0 for x in rho])
    assert np.max(np.abs(profile.alpha - exact)) < 5e-4


def test_boundary_length(profile):
    assert profile.length[0] == pytest.approx(2 * math.pi * r, rel=1e-3)
    rho = radius_of_level(profile.t[50])
    assert profile.length[50] == pytest.approx(2 * math.pi * rho, rel=1e-3)


def test_measures_nonincreasing(profile):
    assert np.all(np.diff(profile.alpha) <= 1e-12)
    assert np.all(np.diff(profile.beta) <= 1e-12)


def test_functional_monotone_for_cap(profile):
    series = monotone_functional(profile, MonotoneParams(theta=1.0, kappa=0.0, lam=R ** -2))
    assert monotonicity_verdict(series).passed
    # the cap is the equality case: G(0) is zero within its error
    G0, err = series.at_zero()
    assert abs(G0) <= max(4 * err, 1e-3)


def test_csv_columns(profile):
    text = profile_csv(profile, monotone_functional(profile, MonotoneParams(kappa=0.0)))
    lines = text.splitlines()
    assert lines[0] == "t,alpha,beta,s,G,err"
    assert len(lines) == len(profile) + 1
    assert float(lines[1].split(",")[0]) == 0.0


def test_sublevel_profile_of_negative_field():
    v = RadialPolynomialField([-0.36, 1.0])  # rho^2 - r^2 <= 0 inside
    prof = compute_profile(v, FLAT, SUBLEVEL, n=128)
    assert prof.t[-1] == 0.0 and prof.t[0] == pytest.approx(-0.36, abs=1e-2)
    assert prof.beta[-1] == pytest.approx(math.pi * r * r, abs=1e-3)
    assert np.all(np.diff(prof.beta) >= -1e-12)


def test_nonzero_trace_rejected():
    with pytest.raises(ValueError):
        compute_profile(LinearField(1.0), FLAT, n=64)


def test_empty_ranges_rejected():
    with pytest.raises(ValueError):
        default_levels(-1.0, 0.0, SUPERLEVEL)
    with pytest.raises(ValueError):
        default_levels(0.0, 1.0, SUBLEVEL)
    with pytest.raises(ValueError):
        compute_profile(U, FLAT, t_samples=[-0.1, 0.2], n=64)


def test_params_validation():
    with pytest.raises(ValueError):
        MonotoneParams(theta=0.0)
    with pytest.raises(ValueError):
        MonotoneParams(Theta=-1.0)
    with pytest.raises(ValueError):
        MonotoneParams(lam=math.nan)


def test_verdict_reports_first_drop():
    v = monotonicity_verdict([0.0, 1.0, 0.5, 2.0])
    assert not v and v.index == 1 and v.worst == -0.5
    assert monotonicity_verdict([0.0, 1.0, 0.5], tol=0.6).passed


@settings(max_examples=30, deadline=None)
@given(G=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_verdict_agrees_with_sorted(G):
    assert monotonicity_verdict(G).passed == all(b >= a for a, b in zip(G, G[1:]))


@settings(max_examples=10, deadline=None)
@given(Rr=st.floats(0.7, 3.0), frac=st.floats(0.2, 0.9))
def test_alpha_monotone_for_random_caps(Rr, frac):
    rad = frac * Rr
    spec = SphereCapSpec(Rr, rad)
    prof = compute_profile(cap_field(spec), ConformalMetric(Disk(rad)), n=64, levels=40)
    assert np.all(np.diff(prof.alpha) <= 1e-12)
    series = monotone_functional(prof, MonotoneParams(theta=1.0, kappa=0.0, lam=Rr ** -2))
    assert isinstance(series, FunctionalSeries)
    assert monotonicity_verdict(series).passed
