"""Pearson, Spearman and Kendall coefficients between accuracy and FLOPs.

Kendall follows the ranking-fidelity convention used for super-supernet
evaluation: a pair is concordant only when both differences share a strict
sign, every other pair (ties included) counts as discordant, and the
coefficient is ``|C - D| / (Q(Q-1)/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class ConstantSeriesError(ValueError):
    pass


@dataclass(frozen=True)
class PairedSeries:
    acc: np.ndarray
    flops: np.ndarray

    def __post_init__(self):
        acc = np.asarray(self.acc, dtype=float)
        flops = np.asarray(self.flops, dtype=float)
        if acc.ndim != 1 or acc.shape != flops.shape:
            raise ValueError("acc and flops must be 1-D vectors of equal length")
        if len(acc) < 2:
            raise ValueError("need at least two paired observations")
        object.__setattr__(self, "acc", acc)
        object.__setattr__(self, "flops", flops)

    def __len__(self) -> int:
        return len(self.acc)


def _series(series, flops=None) -> PairedSeries:
    if isinstance(series, PairedSeries):
        return series
    return PairedSeries(series, flops)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((dx * dx).mean()), np.sqrt((dy * dy).mean())
    if sx == 0 or sy == 0:
        raise ConstantSeriesError("Pearson coefficient is undefined for a constant vector")
    return float(np.clip((dx * dy).mean() / (sx * sy), -1.0, 1.0))


def pearson(series, flops=None) -> float:
    s = _series(series, flops)
    return _pearson(s.acc, s.flops)


def spearman(series, flops=None) -> float:
    """Closed form ``1 - 6 sum(d^2) / (Q(Q^2 - 1))`` without ties, midrank Pearson otherwise."""
    s = _series(series, flops)
    ra, rf = rankdata(s.acc), rankdata(s.flops)
    q = len(s)
    if len(np.unique(s.acc)) == q and len(np.unique(s.flops)) == q:
        d = ra - rf
        return float(1.0 - 6.0 * (d * d).sum() / (q * (q * q - 1)))
    return _pearson(ra, rf)


def concordant_pairs_brute(acc, flops) -> tuple[int, int]:
    """(concordant, discordant) by enumerating all pairs."""
    acc, flops = np.asarray(acc, dtype=float), np.asarray(flops, dtype=float)
    q = len(acc)
    i, j = np.triu_indices(q, k=1)
    prod = (acc[i] - acc[j]) * (flops[i] - flops[j])
    c = int((prod > 0).sum())
    return c, len(i) - c


def _merge_count(x: np.ndarray) -> int:
    """Number of strict inversions (i < j, x[i] > x[j]) by merge sort."""
    x = list(x)
    swaps = 0
    width = 1
    n = len(x)
    buf = x[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid, hi = min(lo + width, n), min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if x[j] < x[i]:
                    buf[k] = x[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = x[i]
                    i += 1
                k += 1
            buf[k:hi] = x[i:mid] + x[j:hi]
        x, buf = buf, x
        width *= 2
    return swaps


def _tied_pairs(*cols) -> int:
    _, counts = np.unique(np.column_stack(cols), axis=0, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def concordant_pairs_merge(acc, flops) -> tuple[int, int]:
    """(concordant, discordant) in O(Q log Q).

    Sort by (acc, flops); strict flops inversions in that order are the
    strictly discordant pairs, and the tie counts recover the rest.
    """
    acc, flops = np.asarray(acc, dtype=float), np.asarray(flops, dtype=float)
    q = len(acc)
    order = np.lexsort((flops, acc))
    strict_disc = _merge_count(flops[order])
    total = q * (q - 1) // 2
    tie_a, tie_f, tie_both = _tied_pairs(acc), _tied_pairs(flops), _tied_pairs(acc, flops)
    concordant = total - tie_a - tie_f + tie_both - strict_disc
    return concordant, total - concordant


def kendall(series, flops=None, method: str = "merge") -> float:
    s = _series(series, flops)
    count = concordant_pairs_merge if method == "merge" else concordant_pairs_brute
    c, d = count(s.acc, s.flops)
    return abs(c - d) / (c + d)


def kendall_is_degenerate(series, flops=None) -> bool:
    """True when a constant vector forces every pair into the discordant bucket."""
    s = _series(series, flops)
    return len(np.unique(s.acc)) == 1 or len(np.unique(s.flops)) == 1


def all_coefficients(series, flops=None) -> dict:
    s = _series(series, flops)
    return {
        "pearson": pearson(s),
        "spearman": spearman(s),
        "kendall": kendall(s),
        "kendall_degenerate": kendall_is_degenerate(s),
        "n": len(s),
    }
