import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from joinlab import orbit, repcore, spectrum as sp
from joinlab.repcore import RepresentationSpec
from joinlab.spectrum import ExponentEstimate, InsufficientDataError

from conftest import real_factor

PAIRS = ["conjugate_pair", "bending_pair", "power_pair", "twisted_pair", "h2xh3_pair"]


def exact_growth(delta, n=200_000):
    """Scores whose counting function is exactly floor(exp(delta T))."""
    return np.log(np.arange(1, n + 1)) / delta


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 2.0))
def test_abscissa_of_exact_exponential(delta):
    est = sp.abscissa_from_values(exact_growth(delta))
    assert est.value == pytest.approx(delta, rel=2e-3)
    assert est.window[0] < est.window[1]


def test_abscissa_is_scale_covariant():
    v = exact_growth(0.5)
    a = sp.abscissa_from_values(v)
    b = sp.abscissa_from_values(3.0 * v)
    assert b.value == pytest.approx(a.value / 3.0, rel=1e-9)
    assert sp.scaled(a, 3.0).value == pytest.approx(b.value, rel=1e-9)


def test_abscissa_rejects_short_inputs():
    with pytest.raises(InsufficientDataError):
        sp.abscissa_from_values(np.arange(50.0))
    with pytest.raises(InsufficientDataError, match="too short"):
        sp.abscissa_from_values(exact_growth(0.5), min_window=1e3)
    with pytest.raises(InsufficientDataError):
        sp.abscissa_from_values(np.ones(1000))


def test_horizon_caps_the_window():
    v = exact_growth(0.5)
    est = sp.abscissa_from_values(v, horizon=15.0)
    assert est.window[1] == 15.0


def test_cyclic_group_has_zero_exponent():
    rep = RepresentationSpec(1, (real_factor(repcore.diag(3.0)),))
    data = orbit.enumerate_orbit(rep, 60)
    # linear growth: two points per displacement level, so log N(T) ~ log T
    assert sp.critical_exponent(data, min_count=4).value < 0.05
    assert sp.poincare_bisection_exponent(data, sp.norm_score) < 0.05


def test_bisection_oracle_on_synthetic_shells():
    # shell n: (2r-1)^n points at distance n; exponent log(2r-1) per unit
    class Fake:
        max_length = 6
        lengths = np.repeat(np.arange(1, 7), [3 ** n for n in range(1, 7)])
        mu = lengths[:, None].astype(float)
    assert sp.poincare_bisection_exponent(Fake, sp.norm_score) == pytest.approx(math.log(3), abs=1e-9)


def test_manhattan_rejects_non_dual_functional(small_bend):
    data = orbit.enumerate_orbit(small_bend, 6)
    with pytest.raises(sp.DualConeError):
        sp.manhattan_exponent(data, np.array([1.0, -1.0]))


def test_exponent_chain_logic():
    e = lambda v: ExponentEstimate(v, 0.001, (0, 1), 1000)
    ok = sp.exponent_chain(e(0.30), e(0.36), e(0.56), 2)
    assert ok["ok"]
    bad = sp.exponent_chain(e(0.30), e(0.50), e(0.56), 2)
    assert not bad["ok"] and not bad["delta_max <= sqrt(k) delta"]["ok"]


@pytest.mark.parametrize("name", PAIRS)
def test_exponents_match_series_oracle(name, runs, reference):
    """Regression estimates against the two-shell bisection values frozen in the configs."""
    run, ref = runs[name], reference[name]
    assert run.delta.value == pytest.approx(ref["delta"], abs=0.01)
    for i, e in enumerate(run.factor_exps):
        assert e.value == pytest.approx(ref[f"delta_{i + 1}"], abs=0.01)
    dmin, dmax = run.minmax
    assert dmin.value == pytest.approx(ref["delta_min"], abs=0.015)
    assert dmax.value == pytest.approx(ref["delta_max"], abs=0.015)
    d11 = sp.manhattan_exponent(run.data, np.ones(2), directions=run.cone.directions)
    assert d11.value == pytest.approx(ref["D_11"], abs=0.01)


@pytest.mark.parametrize("name", PAIRS)
def test_exponent_chain_on_bundled_pairs(name, runs):
    run = runs[name]
    dmin, dmax = run.minmax
    assert sp.exponent_chain(run.delta, dmax, dmin, 2)["ok"]


def test_factor_exponent_index_checked(runs):
    with pytest.raises(IndexError):
        sp.factor_exponent(runs["conjugate_pair"].data, 2)
