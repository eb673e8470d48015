import itertools

import numpy as np
import pytest

from scalenas.space import ScalingStrategy, enumerate_bases, random_base
from scalenas.surrogate import ConstantEvaluator, SurrogateModel, TransformedEvaluator, surrogate_eval


def test_monotone_in_each_multiplier(imagenet):
    model = SurrogateModel(imagenet, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(50):
        base = random_base(imagenet, rng)
        s = ScalingStrategy(*(1 + rng.random(3)))
        bump = np.eye(3)[rng.integers(3)] * 0.01
        t = ScalingStrategy(*(np.array(s.as_tuple()) + bump))
        assert model.evaluate(base, t) > model.evaluate(base, s)


def test_bounded_and_deterministic(imagenet):
    model = SurrogateModel(imagenet, seed=1, sigma=0.05)
    base = random_base(imagenet, 2)
    s = ScalingStrategy(1.2, 1.1, 1.3)
    first = model.evaluate(base, s)
    assert all(model.evaluate(base, s) == first for _ in range(100))
    assert SurrogateModel(imagenet, seed=1, sigma=0.05).evaluate(base, s) == first
    assert 0.0 <= first <= 1.0
    assert surrogate_eval(model, base, s) == first


def test_noise_changes_values(imagenet):
    base = random_base(imagenet, 2)
    clean = SurrogateModel(imagenet, seed=1).evaluate(base, ScalingStrategy())
    noisy = SurrogateModel(imagenet, seed=1, sigma=0.02).evaluate(base, ScalingStrategy())
    assert clean != noisy
    with pytest.raises(ValueError):
        SurrogateModel(imagenet, sigma=-1)


def test_unique_argmax_on_small_space(reduced):
    model = SurrogateModel(reduced, seed=0)
    bases = enumerate_bases(reduced)[::40]
    grid = reduced.strategies(1)
    scores = [model.evaluate(b, s) for b, s in itertools.product(bases, grid)]
    assert len(scores) <= 10_000
    best = max(scores)
    assert sum(v == best for v in scores) == 1


def test_wrappers(reduced):
    model = SurrogateModel(reduced, seed=0)
    base = random_base(reduced, 0)
    wrapped = TransformedEvaluator(model, lambda a: 2 * a + 1)
    assert wrapped.evaluate(base, ScalingStrategy()) == 2 * model.evaluate(base, ScalingStrategy()) + 1
    assert ConstantEvaluator(0.3)(base, ScalingStrategy()) == 0.3
