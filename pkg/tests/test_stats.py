import itertools

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from dbnimpute.stats import signed_ranks, wilcoxon_signed_rank

# Differences drawn once from N(0.4, 1), rounded to 0.01 (so ties occur).
# The exact p-value was obtained by convolving the null distribution over
# doubled ranks; the normal value matches scipy's tie-corrected approximation.
FIXTURE_30 = [1.97, 1.14, -0.57, 0.19, 0.11, 2.76, -0.54, 1.78, 0.52, 1.42, 0.4, 0.79,
              0.89, 0.51, 1.05, 0.75, 1.63, 2.21, 0.31, 0.21, 0.81, -1.26, 0.71, -0.12,
              -0.42, -1.18, 0.18, 0.91, -0.13, -0.51]
FIXTURE_30_EXACT_P = 0.004741476848721504
FIXTURE_30_NORMAL_P = 0.006033671041712578


def enumerate_p(diffs):
    """Two-sided exact p by visiting all 2^n sign assignments."""
    ranks, signs = signed_ranks(diffs)
    w_obs = ranks[signs > 0].sum()
    lower = upper = 0
    for flips in itertools.product((0, 1), repeat=len(ranks)):
        w = sum(r for r, f in zip(ranks, flips) if f)
        lower += w <= w_obs + 1e-9
        upper += w >= w_obs - 1e-9
    return min(1.0, 2 * min(lower, upper) / 2 ** len(ranks))


def test_all_positive_five():
    res = wilcoxon_signed_rank([(d, 0) for d in (1, 2, 3, 4, 5)])
    assert (res.w_plus, res.w_minus, res.statistic) == (15.0, 0.0, 0.0)
    assert res.p_value == 0.0625 and res.method == "exact"


@pytest.mark.parametrize("seed", range(20))
def test_exact_matches_enumeration(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(1, 13))
    diffs = gen.integers(-6, 7, size=n)  # small integers: zeros and ties
    if not diffs.any():
        diffs[0] = 1
    res = wilcoxon_signed_rank([(d, 0) for d in diffs])
    assert abs(res.p_value - enumerate_p(diffs)) < 1e-12


def test_zero_and_tie_handling():
    res = wilcoxon_signed_rank([(1, 1), (3, 1), (1, 3), (5, 1)])
    assert res.n == 3
    assert (res.w_plus, res.w_minus) == (4.5, 1.5)  # ranks 1.5, 1.5, 3
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([(2, 2), (0, 0)])


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=18))
@settings(max_examples=60, deadline=None)
def test_swap_symmetry(diffs):
    if not any(diffs):
        return
    a = wilcoxon_signed_rank([(d, 0) for d in diffs])
    b = wilcoxon_signed_rank([(0, d) for d in diffs])
    assert a.p_value == b.p_value
    assert (a.w_plus, a.w_minus) == (b.w_minus, b.w_plus)


@pytest.mark.parametrize("seed", range(10))
def test_exact_agrees_with_scipy_without_ties(seed):
    gen = np.random.default_rng(seed)
    diffs = gen.permutation(np.arange(1, 16)) * gen.choice([-1, 1], size=15)
    ours = wilcoxon_signed_rank([(d, 0) for d in diffs]).p_value
    ref = scipy.stats.wilcoxon(diffs, method="exact").pvalue
    assert ours == pytest.approx(ref, abs=1e-12)


def convolve_p(diffs):
    """Exact p from the generating polynomial prod(1 + z^(2 r)) over doubled ranks."""
    ranks, signs = signed_ranks(diffs)
    dist = np.array([1], dtype=object)
    for r in ranks:
        term = np.zeros(int(round(2 * r)) + 1, dtype=object)
        term[0] = term[-1] = 1
        dist = np.convolve(dist, term)
    w2 = int(round(2 * ranks[signs > 0].sum()))
    tail = min(dist[: w2 + 1].sum(), dist[w2:].sum())
    return min(1.0, 2 * tail / 2 ** len(ranks))


def test_fixture_30():
    assert convolve_p(FIXTURE_30) == pytest.approx(FIXTURE_30_EXACT_P, abs=1e-15)
    pairs = [(d, 0.0) for d in FIXTURE_30]
    exact = wilcoxon_signed_rank(pairs, exact_max_n=30)
    normal = wilcoxon_signed_rank(pairs)
    assert exact.method == "exact" and normal.method == "normal"
    assert exact.p_value == pytest.approx(FIXTURE_30_EXACT_P, abs=1e-15)
    assert normal.p_value == pytest.approx(FIXTURE_30_NORMAL_P, abs=1e-12)
    assert abs(exact.p_value - normal.p_value) < 0.01
    ref = scipy.stats.wilcoxon(FIXTURE_30, method="approx", correction=True).pvalue
    assert normal.p_value == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("n", range(20, 26))
def test_exact_close_to_normal(n):
    gen = np.random.default_rng(n)
    diffs = gen.normal(0.3, 1.0, size=n)
    pairs = [(d, 0) for d in diffs]
    exact = wilcoxon_signed_rank(pairs).p_value
    normal = wilcoxon_signed_rank(pairs, exact_max_n=0).p_value
    assert abs(exact - normal) < 0.01
