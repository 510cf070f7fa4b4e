"""Wilcoxon signed-rank test: exact enumeration for small samples, normal approximation above."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX_N = 20


class WilcoxonError(ValueError):
    pass


@dataclass
class WilcoxonResult:
    statistic: float  # min(T+, T-)
    pvalue: float
    n: int  # nonzero differences
    method: str  # "exact" | "normal"
    t_plus: float
    t_minus: float

    def to_dict(self) -> dict:
        return {"W": self.statistic, "p": self.pvalue, "n": self.n, "method": self.method,
                "t_plus": self.t_plus, "t_minus": self.t_minus}


def signed_ranks(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |a - b| and the sign of each nonzero difference."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    d = d[d != 0]
    return rankdata(np.abs(d)), np.sign(d)


def subset_sums(ranks: np.ndarray) -> np.ndarray:
    """T+ for every one of the 2**n sign assignments (enumerated, not convolved)."""
    sums = np.zeros(1)
    for r in ranks:
        sums = np.concatenate([sums, sums + r])
    return sums


def exact_pvalue(ranks: np.ndarray, w: float) -> float:
    sums = subset_sums(ranks)
    # ranks are multiples of 1/2; compare on doubled integers to dodge rounding
    k = np.round(2 * sums).astype(np.int64)
    return min(1.0, 2.0 * np.count_nonzero(k <= round(2 * w)) / len(sums))


def normal_pvalue(ranks: np.ndarray, w: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts ** 3 - counts) / 48.0
    if var <= 0:
        return 1.0
    z = (w - mean + 0.5) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.cdf(z)))


def wilcoxon_signed_rank(a, b, exact_max_n: int = EXACT_MAX_N) -> WilcoxonResult:
    """Two-sided test of a - b against symmetry about zero; zero differences are dropped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise WilcoxonError(f"samples must be equal-length 1D, got {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise WilcoxonError("samples contain non-finite values")
    ranks, sign = signed_ranks(a, b)
    n = len(ranks)
    if n == 0:
        raise WilcoxonError("degenerate: identical samples")
    if n < 5:
        raise WilcoxonError(f"need at least 5 nonzero differences, got {n}")
    t_plus = float(ranks[sign > 0].sum())
    t_minus = float(ranks[sign < 0].sum())
    w = min(t_plus, t_minus)
    if n <= exact_max_n:
        p, method = exact_pvalue(ranks, w), "exact"
    else:
        p, method = normal_pvalue(ranks, w), "normal"
    return WilcoxonResult(w, p, n, method, t_plus, t_minus)
