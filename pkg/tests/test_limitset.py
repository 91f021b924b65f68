import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from joinlab import limitset as ls
from joinlab.indicator import DualPair
from joinlab.spectrum import InsufficientDataError


def circle(theta):
    return np.column_stack([np.cos(theta), np.sin(theta)])


def cantor(n, depth=24, seed=0):
    digits = np.random.default_rng(seed).integers(0, 2, size=(n, depth)) * 2
    return digits @ (3.0 ** -np.arange(1, depth + 1))


def test_box_dimension_of_a_circle():
    theta = np.random.default_rng(1).uniform(0, 2 * np.pi, 200_000)
    est = ls.box_dimension(circle(theta))
    assert est.value == pytest.approx(1.0, abs=0.05)


def test_box_dimension_of_a_sphere():
    p = np.random.default_rng(2).normal(size=(300_000, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    assert ls.box_dimension(p).value == pytest.approx(2.0, abs=0.1)


def test_box_dimension_of_a_cantor_arc():
    est = ls.box_dimension(circle(0.5 + cantor(200_000)))
    assert est.value == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_box_dimension_adds_over_products():
    rng = np.random.default_rng(4)
    xi = np.hstack([circle(0.5 + cantor(300_000, seed=5)), circle(rng.uniform(0, 2 * np.pi, 300_000))])
    est = ls.box_dimension(xi, dims=(2, 2))
    assert est.value == pytest.approx(1 + math.log(2) / math.log(3), abs=0.1)


def test_box_counts_are_monotone():
    theta = np.random.default_rng(6).uniform(0, 1, 50_000)
    counts = ls.box_counts(circle(theta), range(2, 20))
    assert np.all(np.diff(counts) >= 0)
    assert counts[-1] <= 50_000


def test_box_dimension_needs_scales():
    with pytest.raises(InsufficientDataError):
        ls.box_dimension(circle(np.array([0.1, 0.2])))


def test_shadow_radii():
    assert np.allclose(ls.shadow_radii([1.0, 2.0], 2.0), np.exp(2.0 - np.array([1.0, 2.0])))


@pytest.fixture(scope="module")
def bend(runs):
    return runs["bending_pair"]


@pytest.fixture(scope="module")
def measure(bend):
    return ls.ps_measure(bend.data, bend.duals["u_max"], eta=0.05)


def test_ray_endpoints_lie_on_spheres_and_near_attracting_points(bend):
    data = bend.data
    rows = np.flatnonzero((data.lengths == data.max_length) & data.loxodromic)[:2000]
    ends = ls.ray_endpoints(data, rows)
    for sl in data.factor_slices():
        assert np.allclose(np.linalg.norm(ends[:, sl], axis=1), 1.0, atol=1e-9)
    gap = np.linalg.norm(ends - data.xi[rows], axis=1)
    assert np.median(gap) < 1e-3


def test_measure_is_a_probability_vector(measure, bend):
    assert measure.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(measure.weights > 0)
    f = measure.dual.psi_u_of(measure.mu)
    order = np.argsort(f)
    assert np.all(np.diff(measure.weights[order]) <= 1e-18)
    assert measure.s == pytest.approx(1.05 * measure.abscissa)


def test_measure_refuses_divergent_exponent(bend):
    dual = bend.duals["u_max"]
    with pytest.raises(ls.DivergentMeasureError):
        ls.ps_measure(bend.data, dual, s=0.5, abscissa=1.0)


def test_full_ball_carries_all_mass(measure):
    c = measure.points[0]
    mass, counts = ls.ball_profile(measure, c, measure.dual.u_alpha, [0.0])
    assert mass[0] == pytest.approx(1.0, abs=1e-12)
    assert counts[0] == len(measure)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_product_ball_query_matches_brute_force(measure, j, r1, r2):
    c = measure.points[j % len(measure)]
    got = np.sort(measure.in_product_ball(c, [r1, r2]))
    sl = measure.slices()
    inside = np.ones(len(measure), dtype=bool)
    for s, r in zip(sl, (r1, r2)):
        inside &= np.linalg.norm(measure.points[:, s] - c[s], axis=1) <= r
    assert np.array_equal(got, np.flatnonzero(inside))


def test_ball_mass_decreases_in_t(measure):
    c = measure.points[10]
    mass, _ = ls.ball_profile(measure, c, measure.dual.u_alpha, np.linspace(0, 20, 50))
    assert np.all(np.diff(mass) <= 1e-15)


def test_directional_samples_empty_strip(bend):
    with pytest.raises(InsufficientDataError):
        ls.directional_samples(bend.data, np.array([1.0, 0.0]), 0.01, norm_floor=1e9)


def test_samples_csv_has_provenance(bend):
    s = ls.boundary_samples(bend.data).subset(np.arange(5))
    lines = s.to_csv().splitlines()
    assert lines[0] == "xi1_0,xi1_1,xi2_0,xi2_1,word,mu_norm"
    assert len(lines) == 6 and lines[1].split(",")[4].isalpha()


def test_interior_directions_are_in_the_profile_range(bend):
    prof = bend.profile
    for v in ls.interior_directions(prof):
        assert np.isfinite(prof.interpolate(v))


def test_measure_json_records_provenance(measure):
    doc = measure.to_json()
    assert doc["atoms"] == len(measure) and doc["s"] > doc["abscissa"]
