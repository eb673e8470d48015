"""Path sampling for super-supernet training.

The hierarchical sampler draws a scaling stage from the mixture weights, a
strategy uniformly inside that stage's grid and an independent uniform base
model. Two unstratified baselines are provided for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flops import BatchFlopsCounter, EncodedBases, path_flops, sample_encoded
from .space import BaseArch, ScalingStrategy, SearchSpace, enumerate_grid, random_base


@dataclass(frozen=True)
class MixtureWeights:
    eta: tuple[float, ...]

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1 or len(eta) == 0:
            raise ValueError("eta must be a non-empty vector")
        if (eta < 0).any():
            raise ValueError("mixture weights must be non-negative")
        if abs(eta.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {eta.sum()!r}")

    @classmethod
    def equal(cls, M: int) -> "MixtureWeights":
        return cls(tuple([1.0 / (M + 1)] * (M + 1)))

    @classmethod
    def proportional(cls, space: SearchSpace) -> "MixtureWeights":
        sizes = np.array([len(g) for g in space.grids], dtype=float)
        return cls(tuple(sizes / sizes.sum()))

    @classmethod
    def from_mode(cls, mode: str, space: SearchSpace) -> "MixtureWeights":
        if mode == "equal":
            return cls.equal(space.M)
        if mode == "proportional":
            return cls.proportional(space)
        raise ValueError(f"unknown weight mode {mode!r}")

    @property
    def M(self) -> int:
        return len(self.eta) - 1


@dataclass(frozen=True)
class SampleEvent:
    # stage is None when a baseline strategy lies outside every grid
    stage: int | None
    base: BaseArch
    strategy: ScalingStrategy
    flops: int


class HSSSampler:
    """Stateful ancestral sampler; one instance per worker."""

    def __init__(self, space: SearchSpace, weights: MixtureWeights, rng=None):
        if weights.M != space.M:
            raise ValueError("mixture weights must cover scaling stages 0..M")
        self.space = space
        self.weights = weights
        self.rng = np.random.default_rng(rng)
        self.grids = [enumerate_grid(g) for g in space.grids]
        self._eta = np.asarray(weights.eta)

    def draw(self) -> tuple[int, BaseArch, ScalingStrategy]:
        j = int(self.rng.choice(len(self._eta), p=self._eta))
        grid = self.grids[j]
        s = grid[int(self.rng.integers(len(grid)))]
        return j, random_base(self.space, self.rng), s

    def sample(self) -> SampleEvent:
        j, base, s = self.draw()
        return SampleEvent(j, base, s, path_flops(base, s, self.space))

    def __iter__(self):
        while True:
            yield self.sample()


def sample_hss(space: SearchSpace, weights: MixtureWeights, rng=None) -> SampleEvent:
    return HSSSampler(space, weights, rng).sample()


def stage_of(space: SearchSpace, s: ScalingStrategy) -> int | None:
    for g in space.grids:
        if s in g:
            return g.stage_index
    return None


class UniformSampler:
    """Unstratified baseline.

    ``mode="per_axis"`` draws d, w and r independently and uniformly from the
    union of all grid values along each axis (every choice equally likely,
    the classic supernet recipe). ``mode="pooled"`` draws one strategy
    uniformly from the union of all grids.
    """

    def __init__(self, space: SearchSpace, rng=None, mode: str = "per_axis"):
        if mode not in ("per_axis", "pooled"):
            raise ValueError(f"unknown baseline mode {mode!r}")
        self.space = space
        self.mode = mode
        self.rng = np.random.default_rng(rng)
        self.pool = union_strategies(space)
        self.axes = union_axes(space)

    def draw(self) -> tuple[int | None, BaseArch, ScalingStrategy]:
        if self.mode == "pooled":
            s = self.pool[int(self.rng.integers(len(self.pool)))]
        else:
            d, w, r = (ax[int(self.rng.integers(len(ax)))] for ax in self.axes)
            s = ScalingStrategy(d, w, r)
        return stage_of(self.space, s), random_base(self.space, self.rng), s

    def sample(self) -> SampleEvent:
        j, base, s = self.draw()
        return SampleEvent(j, base, s, path_flops(base, s, self.space))

    def __iter__(self):
        while True:
            yield self.sample()


def sample_uniform_baseline(space: SearchSpace, rng=None, mode: str = "per_axis") -> SampleEvent:
    return UniformSampler(space, rng, mode).sample()


def union_strategies(space: SearchSpace) -> list[ScalingStrategy]:
    seen, out = set(), []
    for g in space.grids:
        for s in enumerate_grid(g):
            if s not in seen:
                seen.add(s)
                out.append(s)
    return out


def union_axes(space: SearchSpace) -> tuple[list[float], list[float], list[float]]:
    axes = []
    for name in ("depth_axis", "width_axis", "resolution_axis"):
        values = set()
        for g in space.grids:
            values.update(getattr(g, name).values())
        axes.append(sorted(values))
    return tuple(axes)


# --------------------------------------------------------------------------
# vectorised simulation for FLOPs histograms


@dataclass
class SampleBatch:
    stages: np.ndarray  # -1 where a baseline strategy is in no grid
    strategies: list[ScalingStrategy]
    strategy_idx: np.ndarray
    bases: EncodedBases
    flops: np.ndarray

    def __len__(self) -> int:
        return len(self.flops)


def simulate_hss(space: SearchSpace, weights: MixtureWeights, n: int, rng=None, counter=None) -> SampleBatch:
    rng = np.random.default_rng(rng)
    counter = counter or BatchFlopsCounter(space)
    strategies, offsets = [], []
    for g in space.grids:
        offsets.append(len(strategies))
        strategies.extend(enumerate_grid(g))
    sizes = np.array([len(g) for g in space.grids])
    stages = rng.choice(len(sizes), size=n, p=np.asarray(weights.eta))
    within = (rng.random(n) * sizes[stages]).astype(np.int64)
    idx = np.asarray(offsets)[stages] + within
    enc = sample_encoded(space, n, rng)
    flops = counter.flops_mixed(enc, strategies, idx) if n else np.zeros(0, dtype=np.int64)
    return SampleBatch(stages.astype(np.int64), strategies, idx, enc, flops)


def simulate_uniform(space: SearchSpace, n: int, rng=None, mode: str = "per_axis", counter=None) -> SampleBatch:
    rng = np.random.default_rng(rng)
    counter = counter or BatchFlopsCounter(space)
    if mode == "pooled":
        strategies = union_strategies(space)
        idx = rng.integers(len(strategies), size=n)
    elif mode == "per_axis":
        axes = union_axes(space)
        dims = [len(a) for a in axes]
        strategies = [ScalingStrategy(d, w, r) for d in axes[0] for w in axes[1] for r in axes[2]]
        pick = [rng.integers(k, size=n) for k in dims]
        idx = (pick[0] * dims[1] + pick[1]) * dims[2] + pick[2]
    else:
        raise ValueError(f"unknown baseline mode {mode!r}")
    stage_lookup = np.array([-1 if (j := stage_of(space, s)) is None else j for s in strategies])
    enc = sample_encoded(space, n, rng)
    flops = counter.flops_mixed(enc, strategies, idx) if n else np.zeros(0, dtype=np.int64)
    return SampleBatch(stage_lookup[idx], strategies, idx, enc, flops)
