"""Analytic FLOPs / parameter counting and FLOPs-budget selection.

Convention: one multiply-accumulate counts as two FLOPs. A k x k convolution
from ``c_in`` to ``c_out`` channels producing an ``H x W`` map costs
``2 * k^2 * c_in * c_out * H * W / groups``. Batch-norm, activations and
residual additions are not counted; global pooling costs one add per input
element.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .space import (
    IDENTITY,
    BaseArch,
    BlockChoice,
    ScaledArch,
    ScalingStrategy,
    SearchSpace,
    apply_strategy,
    ceil_mul,
)

SE_RATIO = 0.25
BUDGET_QUANTUM = 50_000_000


@dataclass(frozen=True)
class FlopsReport:
    total_flops: int
    total_params: int
    per_stage_flops: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if sum(self.per_stage_flops) != self.total_flops:
            raise ValueError("per-stage FLOPs must sum to the total")

    def to_json(self) -> str:
        d = asdict(self)
        d["per_stage_flops"] = list(self.per_stage_flops)
        return json.dumps(d)


def conv_flops(k: int, c_in: int, c_out: int, h: int, w: int, groups: int = 1, mac: int = 2) -> int:
    return mac * k * k * c_in * c_out * h * w // groups


def conv_params(k: int, c_in: int, c_out: int, groups: int = 1) -> int:
    return k * k * c_in * c_out // groups


def out_size(size: int, stride: int) -> int:
    return -(-size // stride)


def se_channels(c_in: int) -> int:
    return max(1, int(c_in * SE_RATIO))


def mbconv_cost(
    block: BlockChoice, c_in: int, c_out: int, size_in: int, stride: int, mac: int = 2
) -> tuple[int, int, int]:
    """(flops, params, output spatial size) of one MBConv block on a square map."""
    size_out = out_size(size_in, stride)
    mid = c_in * block.expand_rate
    flops = params = 0
    if block.expand_rate != 1:
        flops += conv_flops(1, c_in, mid, size_in, size_in, mac=mac)
        params += conv_params(1, c_in, mid)
    flops += conv_flops(block.kernel, mid, mid, size_out, size_out, groups=mid, mac=mac)
    params += conv_params(block.kernel, mid, mid, groups=mid)
    if block.use_se:
        se = se_channels(c_in)
        # squeeze pooling, two FC layers, channel rescale
        flops += mid * size_out * size_out
        flops += mac * mid * se + mac * se * mid
        flops += mid * size_out * size_out
        params += mid * se + se + se * mid + mid
    flops += conv_flops(1, mid, c_out, size_out, size_out, mac=mac)
    params += conv_params(1, mid, c_out)
    return flops, params, size_out


def count_flops(arch: ScaledArch, mac: int = 2) -> FlopsReport:
    """Per-layer FLOPs of a scaled architecture.

    ``per_stage_flops`` lists stem, each MBConv stage, output conv, then
    pooling plus classifier.
    """
    size = arch.input_resolution
    if size < 1:
        raise ValueError("input resolution must be positive")
    per_stage = []
    params = 0

    size = out_size(size, arch.stem_stride)
    per_stage.append(conv_flops(arch.stem_kernel, arch.input_channels, arch.stem_channels, size, size, mac=mac))
    params += conv_params(arch.stem_kernel, arch.input_channels, arch.stem_channels)

    for stage in arch.stages:
        f_stage = 0
        c_in = stage.in_channels
        for i, block in enumerate(stage.blocks):
            stride = stage.stride if i == 0 else 1
            f, p, size = mbconv_cost(block, c_in, stage.out_channels, size, stride, mac=mac)
            f_stage += f
            params += p
            c_in = stage.out_channels
        per_stage.append(f_stage)

    last = arch.stages[-1].out_channels if arch.stages else arch.stem_channels
    per_stage.append(conv_flops(1, last, arch.head_channels, size, size, mac=mac))
    params += conv_params(1, last, arch.head_channels)

    pool = arch.head_channels * size * size
    fc = mac * arch.head_channels * arch.num_classes
    per_stage.append(pool + fc)
    params += arch.head_channels * arch.num_classes + arch.num_classes
    return FlopsReport(sum(per_stage), params, tuple(per_stage))


def path_flops(base: BaseArch, s: ScalingStrategy, space: SearchSpace, mac: int = 2) -> int:
    return count_flops(apply_strategy(base, s, space), mac=mac).total_flops


def within_budget(report, budget: int, tolerance: float) -> bool:
    """``|flops - budget| <= tolerance * budget``; ``report`` may be a FlopsReport or an int."""
    if not 0.0 < tolerance < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    flops = report.total_flops if isinstance(report, FlopsReport) else report
    return abs(flops - budget) <= tolerance * budget


# --------------------------------------------------------------------------
# vectorised counting over encoded bases


@dataclass
class EncodedBases:
    """A batch of base architectures as integer arrays.

    ``counts[i, s]`` is the block count of stage ``s``; ``choices[i, s, b]``
    indexes ``space.stages[s].choices`` (entries past the count are unused).
    """

    counts: np.ndarray
    choices: np.ndarray

    def __len__(self) -> int:
        return len(self.counts)

    def decode(self, space: SearchSpace, i: int) -> BaseArch:
        return BaseArch(
            tuple(
                tuple(spec.choices[c] for c in self.choices[i, s, : self.counts[i, s]])
                for s, spec in enumerate(space.stages)
            )
        )

    @classmethod
    def encode(cls, space: SearchSpace, bases) -> "EncodedBases":
        n_max = max(spec.n_max for spec in space.stages)
        counts = np.zeros((len(bases), len(space.stages)), dtype=np.int64)
        choices = np.zeros((len(bases), len(space.stages), n_max), dtype=np.int64)
        index = [{c: k for k, c in enumerate(spec.choices)} for spec in space.stages]
        for i, base in enumerate(bases):
            for s, blocks in enumerate(base.stages):
                counts[i, s] = len(blocks)
                choices[i, s, : len(blocks)] = [index[s][b] for b in blocks]
        return cls(counts, choices)


def sample_encoded(space: SearchSpace, n: int, rng=None) -> EncodedBases:
    """Vectorised equivalent of drawing ``n`` independent uniform base models."""
    rng = np.random.default_rng(rng)
    n_max = max(spec.n_max for spec in space.stages)
    counts = np.empty((n, len(space.stages)), dtype=np.int64)
    choices = np.empty((n, len(space.stages), n_max), dtype=np.int64)
    for s, spec in enumerate(space.stages):
        counts[:, s] = rng.integers(spec.n_min, spec.n_max + 1, size=n)
        choices[:, s, :] = rng.integers(len(spec.choices), size=(n, n_max))
    return EncodedBases(counts, choices)


class BatchFlopsCounter:
    """FLOPs of many (base, strategy) paths via per-stage lookup tables.

    For a fixed strategy every MBConv stage contributes
    ``first[choice_0] + sum(rest[choice_i]) + extra * rest[choice_last]``, so a
    batch reduces to table gathers. Agrees exactly with :func:`count_flops`.
    """

    def __init__(self, space: SearchSpace, mac: int = 2):
        self.space = space
        self.mac = mac
        self._tables: dict[tuple[float, float], tuple] = {}

    def _tables_for(self, w: float, r: float):
        key = (w, r)
        if key in self._tables:
            return self._tables[key]
        sp, mac = self.space, self.mac
        width = lambda c, ok: ceil_mul(c, w) if ok else c
        size = ceil_mul(sp.base_resolution, r)
        size = out_size(size, sp.stem.stride)
        stem_ch = width(sp.stem.out_channels, sp.stem.scalable_width_out)
        const = conv_flops(sp.stem.kernel, sp.input_channels, stem_ch, size, size, mac=mac)
        firsts, rests = [], []
        c_in = stem_ch
        for spec in sp.stages:
            c_out = width(spec.out_channels, spec.scalable_width_out)
            first = np.empty(len(spec.choices), dtype=np.int64)
            rest = np.empty(len(spec.choices), dtype=np.int64)
            size_out = out_size(size, spec.stride)
            for k, choice in enumerate(spec.choices):
                first[k] = mbconv_cost(choice, c_in, c_out, size, spec.stride, mac=mac)[0]
                rest[k] = mbconv_cost(choice, c_out, c_out, size_out, 1, mac=mac)[0]
            firsts.append(first)
            rests.append(rest)
            size, c_in = size_out, c_out
        head_ch = width(sp.head.out_channels, sp.head.scalable_width_out)
        const += conv_flops(1, c_in, head_ch, size, size, mac=mac)
        const += head_ch * size * size + mac * head_ch * sp.num_classes
        self._tables[key] = (const, firsts, rests)
        return self._tables[key]

    def flops(self, enc: EncodedBases, strategy: ScalingStrategy, idx=None) -> np.ndarray:
        """FLOPs of rows ``idx`` (default all) of ``enc`` under one strategy."""
        counts = enc.counts if idx is None else enc.counts[idx]
        choices = enc.choices if idx is None else enc.choices[idx]
        const, firsts, rests = self._tables_for(strategy.w, strategy.r)
        total = np.full(len(counts), const, dtype=np.int64)
        n_max = choices.shape[2]
        pos = np.arange(n_max)
        for s, spec in enumerate(self.space.stages):
            n = counts[:, s]
            ch = choices[:, s, :]
            total += firsts[s][ch[:, 0]]
            rest_cost = rests[s][ch]
            mask = (pos[None, :] >= 1) & (pos[None, :] < n[:, None])
            total += (rest_cost * mask).sum(axis=1)
            if spec.scalable_depth and strategy.d != 1.0:
                frac = _ceil_mul_array(n, strategy.d)
                last = ch[np.arange(len(n)), n - 1]
                total += (frac - n) * rests[s][last]
        return total

    def flops_mixed(self, enc: EncodedBases, strategies, strategy_idx: np.ndarray) -> np.ndarray:
        """FLOPs when row ``i`` uses ``strategies[strategy_idx[i]]``."""
        out = np.empty(len(enc), dtype=np.int64)
        for k in np.unique(strategy_idx):
            rows = np.nonzero(strategy_idx == k)[0]
            out[rows] = self.flops(enc, strategies[k], rows)
        return out


def _ceil_mul_array(n: np.ndarray, m: float) -> np.ndarray:
    """Exact ``ceil(n * m)`` for small integer arrays."""
    values = np.unique(n)
    table = {int(v): ceil_mul(int(v), m) for v in values}
    return np.vectorize(table.__getitem__, otypes=[np.int64])(n) if len(n) else n.copy()


# --------------------------------------------------------------------------
# budgets


@dataclass(frozen=True)
class BudgetPlan:
    f0: int
    budgets: tuple[int, ...]
    tolerance: float = 0.10
    mean_flops: float | None = None

    def __post_init__(self):
        # a simulated f0 is rounded to 50M by select_budgets; a forced one is taken as given
        if self.f0 < 1:
            raise ValueError("f0 must be positive")
        if any(b != (2**j) * self.f0 for j, b in enumerate(self.budgets)):
            raise ValueError("budgets must be 2^j * f0")

    @classmethod
    def from_f0(cls, f0: int, M: int, tolerance: float = 0.10, mean_flops=None) -> "BudgetPlan":
        return cls(int(f0), tuple((2**j) * int(f0) for j in range(M + 1)), tolerance, mean_flops)

    def to_dict(self) -> dict:
        return {
            "f0": self.f0,
            "budgets": list(self.budgets),
            "tolerance": self.tolerance,
            "mean_flops": self.mean_flops,
        }


def round_to_quantum(x: float, quantum: int = BUDGET_QUANTUM) -> int:
    return max(quantum, int(math.floor(x / quantum + 0.5)) * quantum)


def select_budgets(
    space: SearchSpace,
    n_samples: int = 100_000,
    M: int | None = None,
    rng=None,
    tolerance: float = 0.10,
    f0: int | None = None,
    mac: int = 2,
) -> BudgetPlan:
    """Monte-Carlo base budget: mean FLOPs of uniform base models, rounded to 50M.

    ``f0`` (or ``space.f0``) overrides the simulated value.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    M = space.M if M is None else M
    if M < 1:
        raise ValueError("M must be at least 1")
    enc = sample_encoded(space, n_samples, rng)
    mean = float(BatchFlopsCounter(space, mac=mac).flops(enc, IDENTITY).mean())
    forced = f0 if f0 is not None else space.f0
    chosen = int(forced) if forced is not None else round_to_quantum(mean)
    return BudgetPlan.from_f0(chosen, M, tolerance, mean)
