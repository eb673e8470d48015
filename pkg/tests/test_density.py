import numpy as np
import pytest

from scalenas.density import kde_modes


def test_single_gaussian_one_mode():
    x = np.exp(np.random.default_rng(0).normal(20, 0.2, 50_000))
    rep = kde_modes(x)
    assert rep.count == 1
    assert abs(np.log(rep.modes[0]) - 20) < 0.05


def test_separated_mixture():
    rng = np.random.default_rng(1)
    centers = np.log([1e8, 2e8, 4e8])
    x = np.exp(np.concatenate([rng.normal(c, 0.05, 20_000) for c in centers]))
    rep = kde_modes(x)
    assert rep.count == 3
    assert np.allclose(np.log(rep.modes), centers, atol=0.03)


def test_linear_axis_and_density_normalised():
    x = np.random.default_rng(2).normal(5, 1, 10_000)
    rep = kde_modes(x, log=False)
    assert rep.count == 1
    width = np.diff(rep.grid)[0]
    assert abs(rep.density.sum() * width - 1) < 1e-9


def test_too_few_samples():
    with pytest.raises(ValueError):
        kde_modes([1.0])
