from __future__ import annotations

import itertools
import random

import pytest

from oadetect.stats import InsufficientPairsError, WilcoxonResult, wilcoxon_signed_rank


def _pairs_from_diffs(diffs):
    return [(d, 0.0) for d in diffs]


def test_hand_ranked_case():
    res = wilcoxon_signed_rank(_pairs_from_diffs([+1, -2, +3, -4, +5]))
    assert res.w_plus == 9 and res.w_minus == 6
    assert res.w == 6


def test_all_positive_exact_p():
    res = wilcoxon_signed_rank(_pairs_from_diffs([1, 2, 3, 4, 5]))
    assert res.w == 0
    assert res.p_value == pytest.approx(0.0625)


def test_all_zero_diffs_error():
    with pytest.raises(InsufficientPairsError, match="insufficient pairs"):
        wilcoxon_signed_rank([(1.0, 1.0)] * 8)


def test_too_few_nonzero_diffs_error():
    with pytest.raises(InsufficientPairsError):
        wilcoxon_signed_rank(_pairs_from_diffs([1, 2, 3, 4]))


def _enumeration_oracle(diffs) -> WilcoxonResult:
    """Literal sign-assignment enumeration, independent of the implementation."""
    from oadetect.stats import _ranks

    ranks = _ranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)
    total = sum(ranks)
    hits = 0
    n = len(diffs)
    for signs in itertools.product((0, 1), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s)
        if min(wp, total - wp) <= w + 1e-9:
            hits += 1
    return WilcoxonResult(w=w, p_value=min(1.0, hits / 2**n), n=n, w_plus=w_plus, w_minus=w_minus)


def test_exact_p_matches_enumeration_oracle_small_n():
    rng = random.Random(99)
    for trial in range(40):
        n = rng.randint(5, 10)
        diffs = []
        while len([d for d in diffs if d != 0]) < 5:
            diffs = [rng.randint(-6, 6) for _ in range(n)]
        diffs = [d for d in diffs if d != 0]
        got = wilcoxon_signed_rank(_pairs_from_diffs(diffs))
        want = _enumeration_oracle(diffs)
        assert got.w == want.w
        assert got.p_value == pytest.approx(want.p_value)


def test_large_n_uses_normal_approximation():
    rng = random.Random(7)
    diffs = [rng.choice([-1, 1]) * rng.randint(1, 50) for _ in range(40)]
    res = wilcoxon_signed_rank(_pairs_from_diffs(diffs))
    assert 0.0 <= res.p_value <= 1.0
    assert res.n == 40


def test_balanced_diffs_insignificant():
    diffs = [1, -1, 2, -2, 3, -3, 4, -4]
    res = wilcoxon_signed_rank(_pairs_from_diffs(diffs))
    assert res.p_value == pytest.approx(1.0)
