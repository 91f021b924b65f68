import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from joinlab import indicator as ind
from joinlab.spectrum import ExponentEstimate

# Legendre oracle min_alpha D_alpha <alpha, v>, D_alpha from the two-shell series
# bisection over 161 functionals at L = 12; angles in degrees
PSI_ORACLE = {
    "bending_pair": [(34.638, 0.1898, 0.04), (37.175, 0.2023, 0.015), (39.712, 0.2040, 0.015),
                     (42.249, 0.1942, 0.015), (44.786, 0.1700, 0.04)],
    "power_pair": [(51.279, 0.2365, 0.04), (53.526, 0.2763, 0.04), (55.773, 0.2972, 0.015),
                   (58.020, 0.2943, 0.015), (60.266, 0.2519, 0.04)],
}


def unit(deg):
    t = math.radians(deg)
    return np.array([math.cos(t), math.sin(t)])


def synthetic_profile(lo=0.3, hi=1.27, n=129, f=lambda d: np.sqrt(d[:, 0] * d[:, 1])):
    """Profile of a known concave homogeneous function on an angular range."""
    th = np.linspace(lo, hi, n)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    psi = f(dirs)
    ests = [ExponentEstimate(float(p), 1e-4, (0.0, 1.0), 1000) for p in psi]
    cone = ind.ConeEstimate(2, dirs[[0, -1]], 0.0, math.tan(lo), math.tan(hi), 0.5, 1.5,
                            (math.tan(lo), math.tan(hi)))
    i = int(np.argmax(psi))
    return ind.GrowthIndicatorProfile(2, dirs, ests, (0.1,), cone, dirs[i], float(psi[i]), 1e-4)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.4, 2.5))
def test_dual_vector_of_known_function(ratio):
    # psi = sqrt(v1 v2): u_alpha = (1/(2 a1), 1/(2 a2)), psi(u_alpha) = 1 / (2 sqrt(a1 a2))
    prof = synthetic_profile()
    a = np.array([1.0, ratio])
    pair = ind.dual_vector(prof, a)
    assert pair.u_alpha @ a == pytest.approx(1.0, abs=1e-12)
    # the maximum is flat, so its location is only second-order accurate
    assert np.allclose(pair.u_alpha, 1 / (2 * a), rtol=1e-2, atol=0)
    assert pair.delta_u == pytest.approx(1 / (2 * math.sqrt(ratio)), rel=1e-4)


def test_dual_at_direction_of_known_function():
    prof = synthetic_profile()
    u = unit(40.0)
    pair = ind.dual_at_direction(prof, u)
    assert np.allclose(pair.alpha, 1 / (2 * u), atol=1e-3)
    assert pair.delta_u == pytest.approx(math.sqrt(u[0] * u[1]), abs=1e-6)
    with pytest.raises(ind.DualConeError):
        ind.dual_at_direction(prof, unit(85.0))


def test_dual_at_max_is_exact():
    prof = synthetic_profile()
    pair = ind.dual_at_max(prof, 0.5)
    assert np.allclose(pair.u_alpha, prof.u_max)
    assert pair.delta_u == 0.5 and np.allclose(pair.psi_u, 0.5 * prof.u_max)


def test_dual_vector_rejects_non_dual_functional():
    with pytest.raises(ind.DualConeError):
        ind.dual_vector(synthetic_profile(), np.array([1.0, -0.5]))


@given(st.floats(0.0, math.pi / 2), st.floats(0.01, 5.0), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_tent_is_homogeneous_and_minimal(theta, scale, d1, d2):
    v = unit(math.degrees(theta))
    t = ind.tent_function(v, [d1, d2])[0]
    assert ind.tent_function(scale * v, [d1, d2])[0] == pytest.approx(scale * t)
    assert t <= v[0] * d1 + 1e-15 and t <= v[1] * d2 + 1e-15


def test_symmetry_check_on_symmetric_function():
    prof = synthetic_profile(0.3, math.pi / 2 - 0.3)
    c = ind.symmetry_check(prof)
    assert c.ok and c.values["sup_deviation"] < 1e-3


def test_symmetry_check_detects_asymmetry():
    prof = synthetic_profile(0.3, math.pi / 2 - 0.3, f=lambda d: np.sqrt(d[:, 0] * d[:, 1]) * (1 + 0.3 * d[:, 0]))
    assert not ind.symmetry_check(prof).ok


def test_thurston_check_signs():
    prof = synthetic_profile()
    cone = ind.ConeEstimate(2, prof.cone.directions, 0.0, 0.45, 1.2, 0.4588, 1.1603, (0.5, 1.1))
    c = ind.thurston_check(cone, [0.2661, 0.3365], 0.02)
    assert c.ok
    assert c.values["d_plus_delta2_minus_delta1"] == pytest.approx(1.1603 * 0.3365 - 0.2661)
    flat = ind.ConeEstimate(2, prof.cone.directions, 0.0, 1.0, 1.0, 1.0, 1.0, (1.0, 1.0))
    assert ind.thurston_check(flat, [0.65, 0.65]).ok is None


def test_gap_check_arithmetic():
    prof = synthetic_profile()
    c = ind.gap_check(prof, [1.0, 1.0], dim_lambda=1.0, delta=0.3, margin=0.02, bound=0.9)
    u = prof.u_max
    assert c.values["gap_tent"] == pytest.approx(min(u) - 0.3)
    assert c.values["gap_dim"] == pytest.approx(1 / math.sqrt(2) - 0.3)
    assert c.ok
    assert not ind.gap_check(prof, [1.0, 1.0], 1.0, 0.7, 0.02).ok


def test_stretch_constants():
    from joinlab.orbit import ConjugacyClassEntry

    classes = [ConjugacyClassEntry((0,), (2.0, 1.0)), ConjugacyClassEntry((2,), (1.0, 3.0))]
    assert ind.stretch_constants(classes) == (0.5, 3.0)


@pytest.mark.parametrize("seed", range(5))
def test_interior_duals_are_positive_on_the_cone(seed):
    cone = synthetic_profile().cone
    for a in ind.interior_duals(cone, 4, np.random.default_rng(seed)):
        assert np.all(cone.directions @ a > 0)
        assert np.linalg.norm(a) == pytest.approx(1.0)


@pytest.mark.parametrize("name", sorted(PSI_ORACLE))
def test_profile_matches_legendre_oracle(name, runs):
    prof = runs[name].profile
    for deg, want, tol in PSI_ORACLE[name]:
        assert prof.interpolate(unit(deg)) == pytest.approx(want, abs=tol), deg


def test_profile_maximum_is_the_critical_exponent(runs):
    for name in ("bending_pair", "power_pair", "twisted_pair"):
        run = runs[name]
        assert run.profile.psi_max == pytest.approx(run.delta.value, abs=0.015)


def test_offset_cones_only_lower_the_estimate(runs):
    data = runs["bending_pair"].data
    view = ind.ConeView(data)
    v = unit(38.0)
    assert ind.growth_indicator(view, v).value <= ind.growth_indicator(view, v, offsets=False).value


def test_regression_window_at_least_two_generator_periods(runs):
    data = runs["bending_pair"].data
    view = ind.ConeView(data)
    assert view.min_window == pytest.approx(2 * ind.generator_norm(data))
    est = ind.growth_indicator(view, unit(38.0))
    assert est.window[1] - est.window[0] >= view.min_window


def test_growth_indicator_needs_unit_vector(runs):
    with pytest.raises(ValueError):
        ind.growth_indicator(runs["bending_pair"].data, np.array([1.0, 1.0]))


def test_profile_exports(runs):
    prof = runs["bending_pair"].profile
    csv = prof.to_csv().splitlines()
    assert csv[0].split(",")[:3] == ["v1", "v2", "psi"]
    assert len(csv) == len(prof.directions) + 1
    import json

    doc = json.loads(ind.profile_json(prof))
    assert doc["k"] == 2 and len(doc["grid"]) == len(prof.directions)


def test_conjugate_pair_profile_collapses(runs):
    run = runs["conjugate_pair"]
    assert run.cone.slope_min == pytest.approx(1.0, abs=1e-9)
    assert run.cone.slope_max == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(run.profile.u_max, np.ones(2) / math.sqrt(2))
