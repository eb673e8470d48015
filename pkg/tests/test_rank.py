import math

import numpy as np
import pytest
from scipy import stats

from scalenas.rank import (
    ConstantSeriesError,
    PairedSeries,
    all_coefficients,
    concordant_pairs_brute,
    concordant_pairs_merge,
    kendall,
    kendall_is_degenerate,
    pearson,
    spearman,
)


def test_pearson_trivial():
    x = np.arange(10.0)
    assert pearson(x, x) == pytest.approx(1.0)
    assert pearson(-x + 3, x) == pytest.approx(-1.0)


def test_pearson_fixture():
    acc, flops = [1, 2, 3, 5], [1, 2, 4, 8]
    ma, mf = 11 / 4, 15 / 4
    num = sum((a - ma) * (f - mf) for a, f in zip(acc, flops))
    den = math.sqrt(sum((a - ma) ** 2 for a in acc) * sum((f - mf) ** 2 for f in flops))
    assert pearson(acc, flops) == pytest.approx(num / den, abs=1e-12)
    # 15.75 / sqrt(8.75 * 28.75)
    assert pearson(acc, flops) == pytest.approx(0.9930191118612668, abs=1e-12)


def test_pearson_constant():
    with pytest.raises(ConstantSeriesError):
        pearson([1, 1, 1], [1, 2, 3])


def test_spearman():
    x = np.array([0.3, 1.5, 2.2, 9.0])
    assert spearman(np.exp(x), x) == pytest.approx(1.0)
    assert spearman(x[::-1].copy(), x) == pytest.approx(-1.0)
    # midranks (1.5, 1.5, 3) against (1, 2, 3)
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(np.corrcoef([1.5, 1.5, 3], [1, 2, 3])[0, 1])
    assert spearman([1, 1, 2], [1, 2, 3]) == pytest.approx(math.sqrt(3) / 2)


def test_kendall_examples():
    assert kendall([1, 2, 3, 4], [2, 4, 6, 8]) == 1.0
    # swapping the last two gives one discordant pair out of six
    assert kendall([1, 2, 4, 3], [1, 2, 3, 4]) == pytest.approx(4 / 6)
    assert concordant_pairs_brute([1, 2, 4, 3], [1, 2, 3, 4]) == (5, 1)


def test_kendall_constant_is_degenerate():
    assert kendall([5, 5, 5, 5], [1, 2, 3, 4]) == 1.0
    assert kendall_is_degenerate([5, 5, 5, 5], [1, 2, 3, 4])
    assert not kendall_is_degenerate([1, 2], [1, 2])


def test_kendall_ties_count_as_discordant():
    acc, flops = [1, 1, 2], [1, 2, 3]
    # pairs: (0,1) tie -> discordant, (0,2) and (1,2) concordant
    assert concordant_pairs_merge(acc, flops) == (2, 1)
    assert kendall(acc, flops) == pytest.approx(1 / 3)


def test_merge_matches_brute_random():
    rng = np.random.default_rng(3)
    for _ in range(300):
        q = int(rng.integers(2, 60))
        acc = rng.integers(0, 6, q).astype(float)
        flops = rng.integers(0, 6, q).astype(float)
        assert concordant_pairs_merge(acc, flops) == concordant_pairs_brute(acc, flops)


def test_agrees_with_scipy_without_ties():
    rng = np.random.default_rng(4)
    a, f = rng.normal(size=50), rng.normal(size=50)
    assert pearson(a, f) == pytest.approx(stats.pearsonr(a, f)[0], abs=1e-12)
    assert spearman(a, f) == pytest.approx(stats.spearmanr(a, f)[0], abs=1e-12)
    assert kendall(a, f) == pytest.approx(abs(stats.kendalltau(a, f)[0]), abs=1e-12)


def test_series_validation():
    with pytest.raises(ValueError):
        PairedSeries([1.0], [1.0])
    with pytest.raises(ValueError):
        PairedSeries([1.0, 2.0], [1.0])
    out = all_coefficients([1, 2, 3], [1, 2, 3])
    assert out["n"] == 3 and out["kendall"] == 1.0 and not out["kendall_degenerate"]
