import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from joinlab import orbit, repcore
from joinlab.repcore import RepresentationSpec

from conftest import real_factor, schottky


@pytest.fixture(scope="module")
def bend8(small_bend):
    return orbit.enumerate_orbit(small_bend, 8)


def rank_rep(r):
    gens = [repcore.conjugate(repcore.rotation(j * math.pi / (2 * r)), repcore.diag(8.0))
            for j in range(r)]
    return RepresentationSpec(r, (real_factor(*gens),))


@pytest.mark.parametrize("r", [2, 3])
def test_word_counts(r):
    data = orbit.enumerate_orbit(rank_rep(r), 8 if r == 2 else 6)
    for n in range(1, data.max_length + 1):
        assert np.count_nonzero(data.lengths == n) == 2 * r * (2 * r - 1) ** (n - 1)
        assert orbit.words_at_depth(r, n) == 2 * r * (2 * r - 1) ** (n - 1)


def test_mu_matches_direct_products(bend8, small_bend):
    rng = np.random.default_rng(0)
    for i in rng.choice(len(bend8), 40, replace=False):
        w = bend8.word(i)
        assert repcore.is_reduced(w) and len(w) == bend8.lengths[i]
        for f in range(2):
            g = repcore.compose(w, small_bend, f)
            assert bend8.mu[i, f] == pytest.approx(repcore.displacement(g), abs=1e-9)


def test_thread_count_does_not_change_output(small_bend):
    a = orbit.enumerate_orbit(small_bend, 7, threads=1)
    b = orbit.enumerate_orbit(small_bend, 7, threads=4)
    assert a == b and a.fingerprint() == b.fingerprint()


def test_t_cap_keeps_exactly_the_short_points(small_bend, bend8):
    cap = 25.0
    capped = orbit.enumerate_orbit(small_bend, 8, t_cap=cap)
    assert len(capped) == np.count_nonzero(bend8.norms <= cap)
    assert capped.norms.max() <= cap


def test_memory_budget_raises_with_partial_data(small_bend):
    with pytest.raises(orbit.EnumerationBudgetError) as err:
        orbit.enumerate_orbit(small_bend, 12, memory_budget=2_000_000)
    assert err.value.completed_depth < 12
    assert err.value.partial is not None and len(err.value.partial) > 0


def test_cache_roundtrip(tmp_path, bend8, small_bend):
    path = tmp_path / "x.jlab"
    orbit.save_dataset(bend8, path)
    back = orbit.load_dataset(path, small_bend)
    assert back == bend8
    assert back.fingerprint() == bend8.fingerprint()
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(orbit.CacheFormatError):
        orbit.load_dataset(path, small_bend)


def test_cache_rejects_other_representation(tmp_path, bend8):
    path = tmp_path / "x.jlab"
    orbit.save_dataset(bend8, path)
    a, b = schottky(3.0, 90.0)
    other = RepresentationSpec(2, (real_factor(a, b), real_factor(a, b)))
    with pytest.raises(orbit.CacheFormatError):
        orbit.load_dataset(path, other)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=16))
def test_pack_unpack_roundtrip(word):
    code = orbit.pack_word(word, 2)
    assert orbit.unpack_word(code, len(word), 2) == tuple(word)


def test_conjugacy_class_canonical_form():
    w = repcore.word_from_str
    keys = {orbit.canonical_class_word(w(s)) for s in ("ab", "ba", "BA")}
    assert len(keys) == 1


@given(st.lists(st.integers(0, 3), min_size=2, max_size=8))
def test_canonical_word_is_rotation_invariant(word):
    rot = word[1:] + word[:1]
    assert orbit.canonical_class_word(word) == orbit.canonical_class_word(rot)
    assert orbit.canonical_class_word(word) == orbit.canonical_class_word(repcore.word_inverse(word))


def test_conjugacy_classes_of_conjugate_pair_have_ratio_one():
    a, b = schottky(3.0, 90.0)
    f = real_factor(a, b)
    classes = orbit.enumerate_conjugacy_classes(RepresentationSpec(2, (f, f)), 5)
    names = {c.name for c in classes}
    assert "ab" in names and "ba" not in names
    assert all(c.lengths[0] == pytest.approx(c.lengths[1]) for c in classes)


def test_filters(bend8):
    u = np.array([0.8, 0.6])
    strip = orbit.filter_strip(bend8, u, 3.0)
    assert len(strip) > 0
    assert orbit.strip_distance(strip.mu, u).max() <= 3.0
    cone = orbit.filter_cone(bend8, u, 0.1)
    assert np.all(cone.mu @ u / cone.norms > math.cos(0.1))
    with pytest.raises(ValueError):
        orbit.filter_strip(bend8, np.array([1.0, 1.0]), 3.0)
