import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vleminer.discretize import (
    Binning,
    EqualFrequencyDiscretizer,
    FixedCutpointDiscretizer,
    apply,
    apply_array,
    equal_frequency_bins,
    fixed_cutpoint_bins,
)
from vleminer.exceptions import TooFewValues


def bin_sizes(binning, values):
    return np.bincount(apply_array(binning, values), minlength=binning.n_bins)


def largest_tie(values):
    return int(np.unique(values, return_counts=True)[1].max())


def test_step30_bins():
    b = fixed_cutpoint_bins()
    assert b.zero_separate and b.boundaries == (30.0, 60.0, 90.0)
    assert b.labels() == ["0", "(0,30]", "(30,60]", "(60,90]", "(90,inf)"]
    assert [apply(b, v) for v in (0, 1, 30, 31, 60, 61, 90, 91, 10**6)] == [0, 1, 1, 2, 2, 3, 3, 4, 4]


def test_fixed_cutpoint_variants():
    assert fixed_cutpoint_bins(10, 30).boundaries == (10.0, 20.0, 30.0)
    with pytest.raises(ValueError):
        fixed_cutpoint_bins(0)


def test_equal_frequency_small_oracles():
    # values 1..8 into 4 bins: two per bin, cuts halfway between neighbours
    assert equal_frequency_bins(range(1, 9), 4).boundaries == (2.5, 4.5, 6.5)
    b = equal_frequency_bins([0, 0, 0, 0, 5, 6, 7, 8, 9, 10], 2)
    assert b.boundaries == (5.5,)
    assert bin_sizes(b, [0, 0, 0, 0, 5, 6, 7, 8, 9, 10]).tolist() == [5, 5]
    # a tie group of six zeros cannot be split, so the cut goes right after it
    b = equal_frequency_bins([0] * 6 + [1, 2, 3, 4], 2)
    assert b.boundaries == (0.5,)


def test_degenerate_when_few_distinct_values():
    b = equal_frequency_bins([5, 5, 5, 5], 2)
    assert b.degenerate and b.boundaries == () and b.n_bins == 1
    b = equal_frequency_bins([1, 1, 2, 2, 2, 3], 5)
    assert b.degenerate and b.boundaries == (1.5, 2.5)


def test_too_few_values():
    with pytest.raises(TooFewValues):
        equal_frequency_bins([1, 2, 3], 5)


def test_round_trip_string():
    for b in (fixed_cutpoint_bins(), equal_frequency_bins([0.5, 1, 2, 3, 4, 7.25], 3)):
        assert Binning.from_string(b.to_string()) == b
    assert fixed_cutpoint_bins().to_string() == "FixedCutpoints;true;30,60,90"


def _best_spread(values, k):
    """Exhaustive minimum bin-size spread over cuts at tie-group edges."""
    v = np.sort(values)
    n = len(v)
    edges = [p for p in range(1, n) if v[p] > v[p - 1]]
    best = None
    for cuts in itertools.combinations(edges, k - 1):
        sizes = np.diff([0, *cuts, n])
        spread = int(sizes.max() - sizes.min())
        best = spread if best is None else min(best, spread)
    return best


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=5, max_size=18), st.integers(2, 5))
def test_spread_within_tie_group_and_near_optimal(values, k):
    if len(set(values)) < k:
        return
    b = equal_frequency_bins(values, k)
    sizes = bin_sizes(b, values)
    assert (sizes > 0).all() and len(sizes) == k
    spread = int(sizes.max() - sizes.min())
    assert spread <= largest_tie(values)
    assert _best_spread(np.array(values), k) <= spread


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 400), min_size=10, max_size=400), st.integers(2, 8))
def test_spread_property_large(values, k):
    if len(set(values)) < k:
        return
    sizes = bin_sizes(equal_frequency_bins(values, k), values)
    assert sizes.max() - sizes.min() <= largest_tie(values)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 300), min_size=5, max_size=60), st.integers(0, 300), st.integers(0, 300))
def test_apply_is_monotone(values, x, y):
    lo, hi = sorted((x, y))
    for b in (equal_frequency_bins(values, 5), fixed_cutpoint_bins()):
        assert apply(b, lo) <= apply(b, hi)
        assert 0 <= apply(b, hi) < b.n_bins


def test_apply_array_matches_scalar():
    b = equal_frequency_bins(np.arange(50) % 13, 4)
    vals = np.arange(0, 20)
    assert apply_array(b, vals).tolist() == [apply(b, v) for v in vals]
    with pytest.raises(ValueError):
        apply(b, -1)


def test_estimators():
    X = np.array([[0, 10], [31, 20], [95, 30], [5, 40], [61, 50], [8, 60]])
    fixed = FixedCutpointDiscretizer().fit(X)
    assert fixed.transform(X)[:, 0].tolist() == [0, 2, 4, 1, 3, 1]
    ef = EqualFrequencyDiscretizer(n_bins=3).fit(X)
    assert len(ef.binnings_) == 2
    assert ef.transform(X)[:, 1].tolist() == [0, 0, 1, 1, 2, 2]
    assert ef.get_params() == {"n_bins": 3}


@settings(max_examples=150, deadline=None)
@given(st.sets(st.integers(0, 10_000), min_size=2, max_size=300), st.integers(2, 9))
def test_tie_free_bins_are_floor_or_ceil(values, k):
    values = sorted(values)
    if len(values) < k:
        return
    sizes = bin_sizes(equal_frequency_bins(values, k), values)
    n = len(values)
    assert sizes.min() >= n // k and sizes.max() <= -(-n // k)


def test_draws_from_generated_counts(small_cohort):
    # 1000 active-week totals from the generator, many tied small counts
    totals = small_cohort.weekly_totals[:, 1:]
    values = totals[totals > 0][:1000]
    assert values.size == 1000
    b = equal_frequency_bins(values, 5)
    sizes = bin_sizes(b, values)
    assert sizes.max() - sizes.min() <= largest_tie(values)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=5, max_size=50), st.lists(st.integers(0, 600), max_size=30))
def test_apply_matches_linear_scan(values, probes):
    for b in (equal_frequency_bins(values, 5), fixed_cutpoint_bins()):
        for v in probes:
            if b.zero_separate:
                expect = 0 if v == 0 else 1 + sum(v > x for x in b.boundaries)
            else:
                expect = sum(v > x for x in b.boundaries)
            assert apply(b, v) == expect
    assert apply(fixed_cutpoint_bins(), 45) == 2
