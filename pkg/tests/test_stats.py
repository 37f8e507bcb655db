import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from dcpl.errors import (DegenerateSeries, EmptyGroup, EmptySeries, InsufficientSentences,
                         LengthMismatch, MisalignedCheckpoints, TooManyAssignments)
from dcpl.stats import (corpus_correlation_protocol, dtw_distance, pearson, pitman_test,
                        sentence_correlation_protocol, spearman, z_heatmap, z_normalize)

from oracles import brute_dtw, brute_pitman, naive_pearson, naive_spearman


# -- correlations -------------------------------------------------------------

def test_correlation_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(
        naive_spearman([1, 2, 2, 3], [1, 3, 2, 4]), abs=1e-12)
    x = np.random.default_rng(0).normal(size=20)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(DegenerateSeries):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(DegenerateSeries):
        spearman([1], [2])
    with pytest.raises(LengthMismatch):
        pearson([1, 2], [1, 2, 3])


@settings(max_examples=60)
@given(st.lists(st.integers(-3, 3), min_size=3, max_size=30), st.integers(0, 2**31))
def test_spearman_matches_oracle_with_ties(xs, seed):
    ys = np.random.default_rng(seed).integers(-2, 3, size=len(xs)).tolist()
    assume(len(set(xs)) > 1 and len(set(ys)) > 1)
    assert spearman(xs, ys) == pytest.approx(naive_spearman(xs, ys), abs=1e-12)
    assert pearson(xs, ys) == pytest.approx(naive_pearson(xs, ys), abs=1e-12)


@settings(max_examples=60)
@given(st.lists(st.integers(-100, 100), min_size=3, max_size=20, unique=True),
       st.integers(0, 2**31))
def test_spearman_monotone_invariance(xs, seed):
    ys = np.random.default_rng(seed).normal(size=len(xs))
    base = spearman(xs, ys)
    assert spearman(np.exp(np.asarray(xs) / 50), ys) == pytest.approx(base, abs=1e-12)
    assert spearman(xs, ys ** 3) == pytest.approx(base, abs=1e-12)


# -- dtw -----------------------------------------------------------------------

def test_dtw_examples():
    assert dtw_distance([0, 0], [1, 1]).distance == 2.0
    assert brute_dtw([0, 0], [1, 1]) == 2
    assert dtw_distance([1, 2, 3], [1, 2, 2, 3]).distance == 0.0
    x = [0.3, -1.0, 2.5]
    assert dtw_distance(x, x).distance == 0.0
    assert dtw_distance(x, x).path_length == 3
    with pytest.raises(EmptySeries):
        dtw_distance([], [1.0])


ints = st.lists(st.integers(-5, 5), min_size=1, max_size=6)


@settings(max_examples=80, deadline=None)
@given(ints, ints)
def test_dtw_brute_force_and_symmetry(a, b):
    d = dtw_distance(a, b).distance
    assert d == brute_dtw(a, b)
    assert d == dtw_distance(b, a).distance


@settings(max_examples=80)
@given(ints, st.data())
def test_dtw_repeated_point(a, data):
    i = data.draw(st.integers(0, len(a) - 1))
    b = data.draw(ints)
    stretched = a[:i + 1] + [a[i]] + a[i + 1:]
    assert dtw_distance(stretched, a).distance == 0.0
    assert dtw_distance(stretched, b).distance >= dtw_distance(a, b).distance


# -- z-normalization -------------------------------------------------------

def test_z_normalize():
    assert z_normalize([0, 2]).tolist() == [-1.0, 1.0]
    x = np.random.default_rng(1).normal(size=15) * 4 + 7
    z = z_normalize(x)
    assert abs(z.mean()) < 1e-12 and abs(z.std() - 1) < 1e-12
    np.testing.assert_allclose(z_normalize(x + 1e3), z, atol=1e-12)
    np.testing.assert_allclose(z_normalize(z), z, atol=1e-12)
    keyed = z_normalize({"a": 1.0, "b": 3.0})
    assert keyed == {"a": -1.0, "b": 1.0}
    with pytest.raises(DegenerateSeries):
        z_normalize([2.0, 2.0])
    heat = z_heatmap({"m1": [0, 1], "m2": [0, 2], "m3": [5, 5]})
    assert heat[("m1", "m2")] == heat[("m2", "m1")] and len(heat) == 6


# -- pitman ------------------------------------------------------------------

def test_pitman_examples():
    res = pitman_test([1, 2], [3, 4])
    assert res.p_value == pytest.approx(2 / 6) and res.draws == 6 and res.statistic == 2.0
    assert pitman_test([5, 5, 5], [5, 5]).p_value == 1.0
    with pytest.raises(EmptyGroup):
        pitman_test([], [1])
    with pytest.raises(TooManyAssignments):
        pitman_test(range(20), range(20), max_assignments=1000)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 9), min_size=1, max_size=4),
       st.lists(st.integers(0, 9), min_size=1, max_size=4))
def test_pitman_exact_matches_oracle(a, b):
    res = pitman_test(a, b)
    assert res.p_value == pytest.approx(brute_pitman(a, b), abs=1e-15)
    m = res.p_value * res.draws
    assert abs(m - round(m)) < 1e-9 and 1 <= round(m) <= res.draws


def test_pitman_monte_carlo_is_seeded():
    a, b = [0.1, 0.5, 0.9, 1.3], [1.0, 1.4, 2.2, 0.2]
    r1 = pitman_test(a, b, mode="monte_carlo", seed=4, draws=5000)
    r2 = pitman_test(a, b, mode="monte_carlo", seed=4, draws=5000)
    assert r1 == r2
    exact = pitman_test(a, b).p_value
    se = math.sqrt(exact * (1 - exact) / 5000)
    assert abs(r1.p_value - exact) < 3 * se + 1 / 5000


# -- protocols ----------------------------------------------------------------

def test_corpus_protocol_examples():
    ind = {c: float(c * c % 7) for c in range(10)}
    assert corpus_correlation_protocol(ind, dict(ind)) == pytest.approx(1.0)
    assert corpus_correlation_protocol(ind, {c: -v for c, v in ind.items()}) == pytest.approx(1.0)
    # monotone concave indicator vs monotone convex score
    mono = {c: math.log1p(c) + 0.01 * math.sin(c) for c in range(10)}
    score = {c: c ** 1.5 for c in range(10)}
    value = corpus_correlation_protocol(mono, score)
    da = [mono[i + 1] - mono[i] for i in range(9)]
    ds = [score[i + 1] - score[i] for i in range(9)]
    assert value == pytest.approx(abs(naive_spearman(da, ds)), abs=1e-12)
    assert 0.9 <= value <= 1.0
    with pytest.raises(MisalignedCheckpoints):
        corpus_correlation_protocol(ind, {0: 1.0, 1: 2.0})
    assert 0 <= corpus_correlation_protocol(ind, score, seed=3, num_pairs=5,
                                            pairing="random") <= 1


def test_sentence_protocol_examples():
    rng = np.random.default_rng(2)
    ind = {(c, f"s{k}"): float(rng.normal()) for c in range(4) for k in range(10)}
    assert sentence_correlation_protocol([ind], [dict(ind)], k=10, seed=1) == pytest.approx(1.0)
    const = {key: 0.5 for key in ind}
    with pytest.raises(DegenerateSeries):
        sentence_correlation_protocol([ind], [const], k=10)
    two = {key: v for key, v in ind.items() if key[0] < 2}
    with pytest.raises(DegenerateSeries):
        sentence_correlation_protocol([two], [two], k=1)
    with pytest.raises(InsufficientSentences):
        sentence_correlation_protocol([ind], [ind], k=11)
    a = sentence_correlation_protocol([ind, ind], [const, ind], k=5, seed=9)
    assert a == sentence_correlation_protocol([ind, ind], [const, ind], k=5, seed=9)
