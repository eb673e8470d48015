import numpy as np
import pytest

from scalenas.density import kde_modes
from scalenas.flops import BatchFlopsCounter, path_flops
from scalenas.sampling import (
    HSSSampler,
    MixtureWeights,
    UniformSampler,
    sample_hss,
    simulate_hss,
    simulate_uniform,
    stage_of,
    union_strategies,
)
from scalenas.space import IDENTITY, enumerate_grid


def test_weights_validation(imagenet):
    with pytest.raises(ValueError):
        MixtureWeights((0.5, 0.6))
    with pytest.raises(ValueError):
        MixtureWeights((1.5, -0.5))
    assert MixtureWeights.equal(3).eta == (0.25,) * 4
    prop = MixtureWeights.proportional(imagenet)
    assert np.allclose(prop.eta, np.array([1, 48, 75, 147]) / 271)
    with pytest.raises(ValueError):
        HSSSampler(imagenet, MixtureWeights.equal(2))


def test_stage_frequencies(imagenet):
    batch = simulate_hss(imagenet, MixtureWeights.equal(3), 100_000, rng=0)
    freq = np.bincount(batch.stages, minlength=4) / len(batch)
    assert np.all(np.abs(freq - 0.25) < 0.01)


def test_within_stage_uniform(imagenet):
    batch = simulate_hss(imagenet, MixtureWeights((0.0, 1.0, 0.0, 0.0)), 500_000, rng=1)
    counts = np.bincount(batch.strategy_idx - 1, minlength=48)
    assert len(counts) == 48
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 1 / 48) < 0.005)
    assert counts.max() / counts.min() < 1.1


def test_degenerate_weights(imagenet):
    s = HSSSampler(imagenet, MixtureWeights((1.0, 0.0, 0.0, 0.0)), 0)
    for _ in range(50):
        j, base, strat = s.draw()
        assert j == 0 and strat == IDENTITY and base in imagenet


def test_event_strategy_in_stage_grid(imagenet):
    sampler = HSSSampler(imagenet, MixtureWeights.equal(3), 3)
    for _ in range(100):
        ev = sampler.sample()
        assert ev.strategy in imagenet.grids[ev.stage]
        assert ev.flops == path_flops(ev.base, ev.strategy, imagenet)


def test_determinism(imagenet):
    a = [HSSSampler(imagenet, MixtureWeights.equal(3), 5).draw() for _ in range(1)]
    b = [HSSSampler(imagenet, MixtureWeights.equal(3), 5).draw() for _ in range(1)]
    assert a == b
    x = simulate_hss(imagenet, MixtureWeights.equal(3), 1000, rng=9)
    y = simulate_hss(imagenet, MixtureWeights.equal(3), 1000, rng=9)
    assert np.array_equal(x.flops, y.flops)
    assert sample_hss(imagenet, MixtureWeights.equal(3), 4) == sample_hss(imagenet, MixtureWeights.equal(3), 4)


def test_vectorised_matches_scalar(reduced):
    batch = simulate_hss(reduced, MixtureWeights.equal(3), 200, rng=2)
    for i in range(0, 200, 17):
        base = batch.bases.decode(reduced, i)
        s = batch.strategies[batch.strategy_idx[i]]
        assert batch.flops[i] == path_flops(base, s, reduced)
        assert s in reduced.grids[batch.stages[i]]


def test_pooled_frequency_follows_grid_sizes(imagenet):
    batch = simulate_uniform(imagenet, 100_000, rng=0, mode="pooled")
    sizes = np.array([len(g) for g in imagenet.grids], dtype=float)
    freq = np.bincount(batch.stages, minlength=4) / len(batch)
    assert np.allclose(freq, sizes / sizes.sum(), atol=0.01)


def test_per_axis_draws_each_value_equally(imagenet):
    s = UniformSampler(imagenet, 0, mode="per_axis")
    depths = [s.draw()[2].d for _ in range(20_000)]
    values, counts = np.unique(depths, return_counts=True)
    assert len(values) == len(s.axes[0])
    assert counts.max() / counts.min() < 1.25


def test_baseline_stage_label(imagenet):
    s = UniformSampler(imagenet, 1, mode="per_axis")
    for _ in range(200):
        j, _, strat = s.draw()
        assert j == stage_of(imagenet, strat)
    pool = union_strategies(imagenet)
    assert len(pool) == len(set(pool)) == sum(len(enumerate_grid(g)) for g in imagenet.grids)
    with pytest.raises(ValueError):
        UniformSampler(imagenet, 0, mode="bell")


def test_mode_counts(imagenet):
    counter = BatchFlopsCounter(imagenet)
    hss = simulate_hss(imagenet, MixtureWeights.equal(3), 100_000, rng=0, counter=counter)
    uni = simulate_uniform(imagenet, 100_000, rng=0, counter=counter)
    assert kde_modes(hss.flops).count == 4
    assert kde_modes(uni.flops).count == 1


def test_empty_simulation(imagenet):
    assert len(simulate_hss(imagenet, MixtureWeights.equal(3), 0, rng=0)) == 0
    assert len(simulate_uniform(imagenet, 0, rng=0)) == 0
