"""Wilcoxon signed-rank test for paired samples.

Zero differences are discarded and tied absolute differences share their
average rank. The two-sided p-value is exact for up to ``exact_max_n``
non-zero differences (the null distribution of W+ is built by counting sign
assignments over the doubled ranks, which are integers even with ties) and
uses the tie-corrected normal approximation with continuity correction
above that.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class WilcoxonResult:
    w_plus: float
    w_minus: float
    p_value: float
    n: int
    method: str

    @property
    def statistic(self) -> float:
        return min(self.w_plus, self.w_minus)


def signed_ranks(differences) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of ``|d|`` and the signs, zero differences removed."""
    d = np.asarray(list(differences), dtype=float)
    d = d[d != 0]
    return rankdata(np.abs(d), method="average"), np.sign(d)


def _null_counts(doubled_ranks: Iterable[int]) -> list[int]:
    """``counts[s]``: number of sign assignments whose doubled W+ equals ``s``."""
    counts = [1]
    for r in doubled_ranks:
        nxt = counts + [0] * r
        for s, c in enumerate(counts):
            if c:
                nxt[s + r] += c
        counts = nxt
    return counts


def exact_p_value(ranks: np.ndarray, w_plus: float) -> float:
    doubled = [int(round(2 * r)) for r in ranks]
    counts = _null_counts(doubled)
    w2 = int(round(2 * w_plus))
    lower = sum(counts[: w2 + 1])
    upper = sum(counts[w2:])
    total = 2 ** len(doubled)
    return min(1.0, 2 * min(lower, upper) / total)


def normal_p_value(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24 - float(np.sum(tie_sizes**3 - tie_sizes)) / 48
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2)))


def wilcoxon_signed_rank(pairs, exact_max_n: int = 25) -> WilcoxonResult:
    """Two-sided test of ``value_a - value_b`` over ``(value_a, value_b)`` pairs."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    ranks, signs = signed_ranks(a - b for a, b in pairs)
    n = len(ranks)
    if n == 0:
        raise ValueError("all differences are zero; the test is undefined")
    w_plus = float(ranks[signs > 0].sum())
    w_minus = float(ranks[signs < 0].sum())
    if n <= exact_max_n:
        return WilcoxonResult(w_plus, w_minus, exact_p_value(ranks, w_plus), n, "exact")
    return WilcoxonResult(w_plus, w_minus, normal_p_value(ranks, w_plus), n, "normal")
