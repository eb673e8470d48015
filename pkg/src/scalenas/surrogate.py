"""Deterministic synthetic accuracy model for (base, strategy) paths.

The score is a bounded sigmoid of

    base operator utilities + depth/width/resolution response + base x strategy interaction

where the strategy terms are positive multiples of ``log(d)``, ``log(w)`` and
``log(r)``; with zero noise, accuracy is therefore strictly increasing in every
multiplier. Optional noise is a pure function of (seed, base, strategy).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .space import BaseArch, BlockChoice, ScalingStrategy, SearchSpace


def _unit_normal(*key) -> float:
    digest = hashlib.sha256(repr(key).encode()).digest()
    return float(np.random.default_rng(int.from_bytes(digest[:8], "little")).standard_normal())


@dataclass
class SurrogateModel:
    space: SearchSpace
    seed: int = 0
    sigma: float = 0.0
    low: float = 0.05
    high: float = 0.95
    utilities: list = field(init=False, repr=False)
    response: np.ndarray = field(init=False)
    interaction: np.ndarray = field(init=False)
    offset: float = field(init=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise amplitude must be non-negative")
        rng = np.random.default_rng(self.seed)
        self.utilities = []
        for spec in self.space.stages:
            table = {}
            for choice in spec.choices:
                structured = 0.04 * choice.expand_rate / 6 + 0.03 * (choice.kernel - 3) / 4 + 0.02 * choice.use_se
                table[choice] = structured + 0.03 * rng.standard_normal()
            self.utilities.append(table)
        self.response = rng.uniform(0.6, 1.4, size=3)
        self.interaction = rng.uniform(0.0, 0.8, size=3)
        n_lo = sum(s.n_min for s in self.space.stages)
        n_hi = sum(s.n_max for s in self.space.stages)
        self._depth_range = (n_lo, max(n_hi, n_lo + 1))
        self.offset = -0.4 - 0.05 * (n_lo + n_hi) / 2

    @classmethod
    def from_config(cls, space: SearchSpace, cfg: dict | None = None) -> "SurrogateModel":
        cfg = cfg or {}
        return cls(space, seed=int(cfg.get("seed", 0)), sigma=float(cfg.get("sigma", 0.0)))

    def features(self, base: BaseArch) -> np.ndarray:
        """(depth, expansion, kernel) features of a base, each in [0, 1]."""
        blocks: list[BlockChoice] = [b for stage in base.stages for b in stage]
        lo, hi = self._depth_range
        depth = (len(blocks) - lo) / (hi - lo)
        expand = float(np.mean([b.expand_rate for b in blocks])) / 6
        kernel = (float(np.mean([b.kernel for b in blocks])) - 3) / 4
        return np.array([depth, expand, kernel])

    def base_score(self, base: BaseArch) -> float:
        score = 0.0
        for table, blocks in zip(self.utilities, base.stages):
            for b in blocks:
                score += 0.05 + table[b]
        return score

    def logit(self, base: BaseArch, s: ScalingStrategy) -> float:
        logs = np.log([s.d, s.w, s.r])
        strategy_term = float(self.response @ logs)
        cross = float((self.interaction * self.features(base)) @ logs)
        return self.offset + self.base_score(base) + strategy_term + cross

    def evaluate(self, base: BaseArch, s: ScalingStrategy) -> float:
        z = self.logit(base, s)
        acc = self.low + (self.high - self.low) / (1.0 + math.exp(-z))
        if self.sigma > 0:
            acc += self.sigma * _unit_normal(self.seed, base.canonical_json(), s.as_tuple())
        return min(1.0, max(0.0, acc))

    __call__ = evaluate


def surrogate_eval(model: SurrogateModel, base: BaseArch, s: ScalingStrategy) -> float:
    return model.evaluate(base, s)


class TransformedEvaluator:
    """Wraps an evaluator and applies a fixed transform to every output."""

    def __init__(self, inner, fn):
        self.inner = inner
        self.fn = fn

    def evaluate(self, base, s):
        return self.fn(self.inner.evaluate(base, s))

    __call__ = evaluate


class ConstantEvaluator:
    def __init__(self, value: float = 0.5):
        self.value = value

    def evaluate(self, base, s):
        return self.value

    __call__ = evaluate
