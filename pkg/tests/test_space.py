import numpy as np
import pytest

from scalenas.space import (
    IDENTITY,
    Axis,
    BaseArch,
    BlockChoice,
    ConfigError,
    ScalingStrategy,
    StrategyGrid,
    apply_strategy,
    ceil_mul,
    crossover,
    enumerate_bases,
    enumerate_grid,
    load_space,
    mutate,
    random_base,
)


def test_ceil_mul_exact_decimal():
    assert ceil_mul(4, 1.48) == 6
    assert ceil_mul(224, 1.14) == 256
    # 100 * 1.1 is 110.00000000000001 in binary floating point
    assert ceil_mul(100, 1.1) == 110
    assert ceil_mul(3, 1.0) == 3


def test_depth_ceiling(imagenet):
    base = random_base(imagenet, 3)
    scaled = apply_strategy(base, ScalingStrategy(1.48, 1.0, 1.0), imagenet)
    for n0, n1 in zip(base.block_counts, scaled.block_counts):
        assert n1 == ceil_mul(n0, 1.48)


def test_resolution_chain(imagenet):
    base = random_base(imagenet, 0)
    res = [apply_strategy(base, ScalingStrategy(1.0, 1.0, r), imagenet).input_resolution
           for r in (1.140, 1.355, 1.580, 2.042, 2.378)]
    assert res == [256, 304, 354, 458, 533]


def test_identity_strategy(imagenet):
    base = random_base(imagenet, 1)
    scaled = apply_strategy(base, IDENTITY, imagenet)
    assert scaled.input_resolution == 224
    assert scaled.block_counts == base.block_counts
    assert tuple(s.blocks for s in scaled.stages) == base.stages
    assert scaled.stem_channels == imagenet.stem.out_channels
    assert [s.out_channels for s in scaled.stages] == [s.out_channels for s in imagenet.stages]


def test_grid_sizes(imagenet):
    assert [len(enumerate_grid(g)) for g in imagenet.grids] == [1, 48, 75, 147]
    assert enumerate_grid(imagenet.grids[0]) == [IDENTITY]
    s1 = enumerate_grid(imagenet.grids[1])
    assert s1[0] == ScalingStrategy(1.04, 1.04, 1.0)
    assert s1[-1] == ScalingStrategy(1.16, 1.16, 1.14)
    assert len(set(s1)) == 48


def test_grid_values_are_exact_decimals():
    ax = Axis(1.40, 0.04, 1.64)
    assert ax.values() == [1.40, 1.44, 1.48, 1.52, 1.56, 1.60, 1.64]
    with pytest.raises(ConfigError):
        Axis(1.0, 0.03, 1.1).values()


def test_stage0_must_be_singleton():
    with pytest.raises(ConfigError):
        StrategyGrid(0, Axis(1.0, 0.1, 1.1), Axis(1, 0, 1), Axis(1, 0, 1))


def test_strategy_rejects_shrinking():
    with pytest.raises(ValueError):
        ScalingStrategy(0.9, 1.0, 1.0)


def test_random_base_seeded(imagenet):
    assert random_base(imagenet, 7) == random_base(imagenet, 7)
    assert random_base(imagenet, 7) in imagenet


def test_random_base_block_count_law(imagenet):
    rng = np.random.default_rng(0)
    spec_idx = next(i for i, s in enumerate(imagenet.stages) if s.n_max - s.n_min + 1 == 4)
    spec = imagenet.stages[spec_idx]
    counts = np.array([len(random_base(imagenet, rng).stages[spec_idx]) for _ in range(10_000)])
    for n in range(spec.n_min, spec.n_max + 1):
        assert abs(np.mean(counts == n) - 0.25) < 0.02


def test_degenerate_space_has_one_arch(tiny):
    space = tiny
    assert space.size() == 1
    only = enumerate_bases(space)
    assert len(only) == 1
    assert all(random_base(space, s) == only[0] for s in range(5))


def test_crossover_and_mutate_trivial_cases(imagenet):
    a = random_base(imagenet, 2)
    assert crossover(a, a, 0) == a
    assert mutate(a, 0.0, imagenet, 0) == a
    with pytest.raises(ValueError):
        mutate(a, 1.5, imagenet, 0)


def test_mutate_full_rate_matches_random_base(imagenet):
    # rate 1 resamples every depth and operator: compare marginals to random_base
    rng = np.random.default_rng(1)
    a = random_base(imagenet, 0)
    mutated = [mutate(a, 1.0, imagenet, rng) for _ in range(10_000)]
    fresh = [random_base(imagenet, rng) for _ in range(10_000)]
    for i, spec in enumerate(imagenet.stages):
        for n in range(spec.n_min, spec.n_max + 1):
            pm = np.mean([len(b.stages[i]) == n for b in mutated])
            pf = np.mean([len(b.stages[i]) == n for b in fresh])
            assert abs(pm - pf) < 0.03
    k_m = np.mean([b.stages[2][0].kernel for b in mutated])
    k_f = np.mean([b.stages[2][0].kernel for b in fresh])
    assert abs(k_m - k_f) < 0.1


def test_base_roundtrip(imagenet):
    b = random_base(imagenet, 4)
    assert BaseArch.from_dict(b.to_dict()) == b
    assert len(b.hash()) == 16


def test_membership(imagenet):
    b = random_base(imagenet, 5)
    bad = BaseArch(b.stages[:-1])
    assert bad not in imagenet
    odd = BaseArch((b.stages[0][:1] * 9,) + b.stages[1:])
    assert odd not in imagenet
    # stage 1 only allows expand rate 1
    exotic = BaseArch(((BlockChoice(6, 3, False),),) + b.stages[1:])
    assert exotic not in imagenet
    with pytest.raises(ValueError):
        BlockChoice(4, 3, False)


def test_load_space_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_space(tmp_path / "nope.yaml")
