"""Base-architecture grammar, scaling-strategy grids and path generation.

A base model fixes, for every MBConv stage, how many blocks it stacks and the
operator choice of each block. A scaling strategy ``(d, w, r)`` stretches depth,
width and input resolution; :func:`apply_strategy` turns the pair into a
concrete :class:`ScaledArch`.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np
import yaml


class ConfigError(ValueError):
    pass


def ceil_mul(x: int, m: float) -> int:
    """``ceil(x * m)`` evaluated on the decimal value of ``m``.

    ``224 * 1.25`` must be 280, not 281 because of a trailing ulp, so the
    multiplier is converted through its shortest repr before multiplying.
    """
    return math.ceil(x * Fraction(repr(float(m))))


@dataclass(frozen=True, order=True)
class BlockChoice:
    expand_rate: int
    kernel: int
    use_se: bool

    def __post_init__(self):
        if self.expand_rate not in (1, 3, 6):
            raise ValueError(f"expand_rate must be 1, 3 or 6, got {self.expand_rate}")
        if self.kernel not in (3, 5, 7):
            raise ValueError(f"kernel must be 3, 5 or 7, got {self.kernel}")

    @property
    def label(self) -> str:
        return f"MB{self.expand_rate}_K{self.kernel}" + ("_SE" if self.use_se else "")


@dataclass(frozen=True)
class StageSpec:
    name: str
    n_min: int
    n_max: int
    out_channels: int
    stride: int
    expand_rates: tuple[int, ...] = (3, 6)
    kernels: tuple[int, ...] = (3, 5, 7)
    se_options: tuple[bool, ...] = (False, True)
    scalable_depth: bool = True
    scalable_width_in: bool = True
    scalable_width_out: bool = True
    scalable_resolution: bool = True

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError(f"{self.name}: need 1 <= n_min <= n_max")
        if self.stride not in (1, 2):
            raise ConfigError(f"{self.name}: stride must be 1 or 2")
        if self.out_channels < 1:
            raise ConfigError(f"{self.name}: out_channels must be positive")

    @property
    def choices(self) -> tuple[BlockChoice, ...]:
        return tuple(
            BlockChoice(e, k, se)
            for e, k, se in itertools.product(self.expand_rates, self.kernels, self.se_options)
        )


@dataclass(frozen=True)
class ConvSpec:
    """Fixed single-conv layer (stem or output conv)."""

    name: str
    out_channels: int
    kernel: int
    stride: int
    scalable_width_in: bool
    scalable_width_out: bool
    scalable_resolution: bool = True


@dataclass(frozen=True)
class ScalingStrategy:
    d: float = 1.0
    w: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        for name in ("d", "w", "r"):
            if not getattr(self, name) >= 1.0:
                raise ValueError(f"scaling multiplier {name} must be >= 1, got {getattr(self, name)}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.d, self.w, self.r)

    def dominates(self, other: "ScalingStrategy") -> bool:
        return self.d >= other.d and self.w >= other.w and self.r >= other.r


IDENTITY = ScalingStrategy(1.0, 1.0, 1.0)


@dataclass(frozen=True)
class Axis:
    min: float
    step: float
    max: float

    def values(self) -> list[float]:
        lo, step, hi = (Decimal(repr(v)) for v in (self.min, self.step, self.max))
        if step == 0:
            if lo != hi:
                raise ConfigError("zero step requires min == max")
            return [float(lo)]
        n = int((hi - lo) / step)
        if lo + n * step != hi:
            raise ConfigError(f"axis {self} max is not reachable in whole steps")
        return [float(lo + k * step) for k in range(n + 1)]

    def contains(self, v: float, tol: float = 1e-9) -> bool:
        if v < self.min - tol or v > self.max + tol:
            return False
        if self.step == 0:
            return abs(v - self.min) <= tol
        k = (v - self.min) / self.step
        return abs(k - round(k)) <= 1e-6


@dataclass(frozen=True)
class StrategyGrid:
    stage_index: int
    depth_axis: Axis
    width_axis: Axis
    resolution_axis: Axis
    flops_budget: int | None = None

    def __post_init__(self):
        if self.stage_index == 0:
            for ax in (self.depth_axis, self.width_axis, self.resolution_axis):
                if ax.values() != [1.0]:
                    raise ConfigError("scaling stage 0 grid must be the singleton (1, 1, 1)")
        else:
            for ax in (self.depth_axis, self.width_axis, self.resolution_axis):
                if ax.min < 1.0:
                    raise ConfigError(f"stage {self.stage_index}: multipliers must be >= 1")

    def __contains__(self, s: ScalingStrategy) -> bool:
        return (
            self.depth_axis.contains(s.d)
            and self.width_axis.contains(s.w)
            and self.resolution_axis.contains(s.r)
        )

    def __len__(self) -> int:
        return (
            len(self.depth_axis.values())
            * len(self.width_axis.values())
            * len(self.resolution_axis.values())
        )


def enumerate_grid(grid: StrategyGrid) -> list[ScalingStrategy]:
    """Cartesian product of the three axes in lexicographic (d, w, r) order."""
    return [
        ScalingStrategy(d, w, r)
        for d, w, r in itertools.product(
            grid.depth_axis.values(), grid.width_axis.values(), grid.resolution_axis.values()
        )
    ]


@dataclass(frozen=True)
class BaseArch:
    """Per-stage block lists; ``len(stages[i])`` is the block count of stage i."""

    stages: tuple[tuple[BlockChoice, ...], ...]

    @property
    def block_counts(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.stages)

    def to_dict(self) -> dict:
        return {
            "stages": [
                [{"expand_rate": b.expand_rate, "kernel": b.kernel, "use_se": b.use_se} for b in blocks]
                for blocks in self.stages
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BaseArch":
        return cls(
            tuple(
                tuple(BlockChoice(int(b["expand_rate"]), int(b["kernel"]), bool(b["use_se"])) for b in blocks)
                for blocks in data["stages"]
            )
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def describe(self) -> str:
        return " | ".join(" ".join(b.label for b in blocks) for blocks in self.stages)


@dataclass(frozen=True)
class ScaledStage:
    blocks: tuple[BlockChoice, ...]
    in_channels: int
    out_channels: int
    stride: int


@dataclass(frozen=True)
class ScaledArch:
    input_channels: int
    stem_channels: int
    stem_kernel: int
    stem_stride: int
    stages: tuple[ScaledStage, ...]
    head_channels: int
    num_classes: int
    input_resolution: int

    @property
    def block_counts(self) -> tuple[int, ...]:
        return tuple(len(s.blocks) for s in self.stages)

    @property
    def channels(self) -> tuple[int, ...]:
        return (self.stem_channels,) + tuple(s.out_channels for s in self.stages) + (self.head_channels,)

    def to_dict(self) -> dict:
        return {
            "input_resolution": self.input_resolution,
            "stem_channels": self.stem_channels,
            "stages": [
                {
                    "in_channels": s.in_channels,
                    "out_channels": s.out_channels,
                    "stride": s.stride,
                    "blocks": [b.label for b in s.blocks],
                }
                for s in self.stages
            ],
            "head_channels": self.head_channels,
            "num_classes": self.num_classes,
        }


@dataclass(frozen=True)
class SearchSpace:
    stem: ConvSpec
    stages: tuple[StageSpec, ...]
    head: ConvSpec
    grids: tuple[StrategyGrid, ...]
    base_resolution: int = 224
    input_channels: int = 3
    num_classes: int = 1000
    name: str = "space"
    f0: int | None = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.grids or self.grids[0].stage_index != 0:
            raise ConfigError("the first strategy grid must be scaling stage 0")
        for j, g in enumerate(self.grids):
            if g.stage_index != j:
                raise ConfigError("strategy grids must be listed for stages 0..M in order")

    @property
    def M(self) -> int:
        return len(self.grids) - 1

    def __contains__(self, base: BaseArch) -> bool:
        if len(base.stages) != len(self.stages):
            return False
        for spec, blocks in zip(self.stages, base.stages):
            if not spec.n_min <= len(blocks) <= spec.n_max:
                return False
            allowed = set(spec.choices)
            if any(b not in allowed for b in blocks):
                return False
        return True

    def size(self) -> int:
        """Number of distinct base architectures."""
        total = 1
        for spec in self.stages:
            c = len(spec.choices)
            total *= sum(c**n for n in range(spec.n_min, spec.n_max + 1))
        return total

    def strategies(self, j: int) -> list[ScalingStrategy]:
        return enumerate_grid(self.grids[j])

    def with_budgets(self, budgets) -> "SearchSpace":
        grids = tuple(replace(g, flops_budget=int(b)) for g, b in zip(self.grids, budgets))
        return replace(self, grids=grids, f0=int(budgets[0]))

    def with_grids(self, grids) -> "SearchSpace":
        return replace(self, grids=tuple(grids))

    def scale_channels(self, factor: float) -> "SearchSpace":
        """Copy of the space with every channel count multiplied by ``factor``."""
        stages = tuple(replace(s, out_channels=max(1, round(s.out_channels * factor))) for s in self.stages)
        stem = replace(self.stem, out_channels=max(1, round(self.stem.out_channels * factor)))
        head = replace(self.head, out_channels=max(1, round(self.head.out_channels * factor)))
        return replace(self, stem=stem, stages=stages, head=head, f0=None)


def apply_strategy(base: BaseArch, s: ScalingStrategy, space: SearchSpace) -> ScaledArch:
    """Build the path for ``(base, s)``.

    Depth-scalable stages grow to ``ceil(n * d)`` blocks, the extra blocks
    copying the last block; width-scalable channel counts become
    ``ceil(c * w)``; the input side becomes ``ceil(base_resolution * r)``.
    """
    if not isinstance(s, ScalingStrategy):
        s = ScalingStrategy(*s)
    if base not in space:
        raise ValueError("base architecture does not belong to the search space")

    def width(c: int, scalable: bool) -> int:
        return ceil_mul(c, s.w) if scalable else c

    stem_out = width(space.stem.out_channels, space.stem.scalable_width_out)
    in_ch = stem_out
    stages = []
    for spec, blocks in zip(space.stages, base.stages):
        n = len(blocks)
        n_s = ceil_mul(n, s.d) if spec.scalable_depth else n
        scaled_blocks = tuple(blocks) + (blocks[-1],) * (n_s - n)
        out_ch = width(spec.out_channels, spec.scalable_width_out)
        stages.append(ScaledStage(scaled_blocks, in_ch, out_ch, spec.stride))
        in_ch = out_ch
    head_out = width(space.head.out_channels, space.head.scalable_width_out)
    res = ceil_mul(space.base_resolution, s.r)
    return ScaledArch(
        input_channels=space.input_channels,
        stem_channels=stem_out,
        stem_kernel=space.stem.kernel,
        stem_stride=space.stem.stride,
        stages=tuple(stages),
        head_channels=head_out,
        num_classes=space.num_classes,
        input_resolution=res,
    )


def _random_blocks(spec: StageSpec, n: int, rng: np.random.Generator) -> tuple[BlockChoice, ...]:
    choices = spec.choices
    return tuple(choices[i] for i in rng.integers(len(choices), size=n))


def random_base(space: SearchSpace, rng=None) -> BaseArch:
    """Uniform draw: block count uniform on [n_min, n_max], each block uniform over its operators.

    ``rng`` may be a seed or a ``numpy.random.Generator``.
    """
    rng = np.random.default_rng(rng)
    stages = []
    for spec in space.stages:
        n = int(rng.integers(spec.n_min, spec.n_max + 1))
        stages.append(_random_blocks(spec, n, rng))
    return BaseArch(tuple(stages))


def crossover(a: BaseArch, b: BaseArch, rng=None) -> BaseArch:
    rng = np.random.default_rng(rng)
    picks = rng.random(len(a.stages)) < 0.5
    return BaseArch(tuple(sa if p else sb for sa, sb, p in zip(a.stages, b.stages, picks)))


def mutate(a: BaseArch, rate: float, space: SearchSpace, rng=None) -> BaseArch:
    """Resample each stage's depth and each block's operator with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    if rate == 0.0:
        return a
    stages = []
    for spec, blocks in zip(space.stages, a.stages):
        blocks = list(blocks)
        if rng.random() < rate:
            n = int(rng.integers(spec.n_min, spec.n_max + 1))
            if n < len(blocks):
                blocks = blocks[:n]
            else:
                blocks += list(_random_blocks(spec, n - len(blocks), rng))
        choices = spec.choices
        for i in range(len(blocks)):
            if rng.random() < rate:
                blocks[i] = choices[int(rng.integers(len(choices)))]
        stages.append(tuple(blocks))
    return BaseArch(tuple(stages))


def enumerate_bases(space: SearchSpace, limit: int = 1_000_000) -> list[BaseArch]:
    """Every base architecture of a small space, in a fixed order."""
    if space.size() > limit:
        raise ValueError(f"space has {space.size()} bases, more than the limit of {limit}")
    per_stage = []
    for spec in space.stages:
        options = []
        for n in range(spec.n_min, spec.n_max + 1):
            options.extend(itertools.product(spec.choices, repeat=n))
        per_stage.append(options)
    return [BaseArch(tuple(combo)) for combo in itertools.product(*per_stage)]


# --------------------------------------------------------------------------
# config files


def _axis(raw) -> Axis:
    if isinstance(raw, dict):
        return Axis(float(raw["min"]), float(raw["step"]), float(raw["max"]))
    lo, step, hi = raw
    return Axis(float(lo), float(step), float(hi))


def _flags(raw: dict | None) -> dict:
    raw = raw or {}
    return {
        "depth": bool(raw.get("depth", False)),
        "width_in": bool(raw.get("width_in", False)),
        "width_out": bool(raw.get("width_out", False)),
        "resolution": bool(raw.get("resolution", False)),
    }


def space_from_dict(cfg: dict) -> SearchSpace:
    try:
        stem_raw, head_raw = cfg["stem"], cfg["head"]
        sf, hf = _flags(stem_raw.get("scale")), _flags(head_raw.get("scale"))
        stem = ConvSpec(
            "conv_stem", int(stem_raw["channels"]), int(stem_raw.get("kernel", 3)),
            int(stem_raw.get("stride", 2)), sf["width_in"], sf["width_out"], sf["resolution"],
        )
        head = ConvSpec(
            "conv_out", int(head_raw["channels"]), int(head_raw.get("kernel", 1)),
            int(head_raw.get("stride", 1)), hf["width_in"], hf["width_out"], hf["resolution"],
        )
        stages = []
        for i, row in enumerate(cfg["stages"]):
            fl = _flags(row.get("scale"))
            stages.append(
                StageSpec(
                    name=row.get("name", f"stage{i + 1}"),
                    n_min=int(row["n_min"]),
                    n_max=int(row["n_max"]),
                    out_channels=int(row["channels"]),
                    stride=int(row["stride"]),
                    expand_rates=tuple(int(e) for e in row.get("expand_rates", (3, 6))),
                    kernels=tuple(int(k) for k in row.get("kernels", (3, 5, 7))),
                    se_options=tuple(bool(x) for x in row.get("se", (False, True))),
                    scalable_depth=fl["depth"],
                    scalable_width_in=fl["width_in"],
                    scalable_width_out=fl["width_out"],
                    scalable_resolution=fl["resolution"],
                )
            )
        grids = []
        for row in cfg["scaling_stages"]:
            dw = row.get("depth_width")
            depth = _axis(row["depth"] if "depth" in row else dw)
            width = _axis(row["width"] if "width" in row else dw)
            grids.append(StrategyGrid(int(row["j"]), depth, width, _axis(row["resolution"])))
        f0 = cfg.get("f0")
        space = SearchSpace(
            stem=stem,
            stages=tuple(stages),
            head=head,
            grids=tuple(grids),
            base_resolution=int(cfg.get("base_resolution", 224)),
            input_channels=int(cfg.get("input_channels", 3)),
            num_classes=int(cfg.get("num_classes", 1000)),
            name=str(cfg.get("name", "space")),
            f0=int(f0) if f0 is not None else None,
            source=cfg,
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed search-space config: {exc!r}") from exc
    channel_factor = cfg.get("channel_factor")
    if channel_factor is not None:
        space = replace(space.scale_channels(float(channel_factor)), f0=space.f0)
    return space


def load_space(path) -> SearchSpace:
    path = Path(path)
    with path.open() as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    if "space" in cfg and isinstance(cfg["space"], dict):
        cfg = cfg["space"]
    return space_from_dict(cfg)


CONFIG_DIR = Path(__file__).parent / "configs"


def builtin_space(name: str = "imagenet") -> SearchSpace:
    """Shipped spaces: ``imagenet``, ``imagenet100`` (half channels), ``reduced``."""
    return load_space(CONFIG_DIR / f"{name}.yaml")
