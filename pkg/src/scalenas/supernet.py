"""Toy weight-sharing super-supernet trained by path sampling.

Every (base, strategy) path is a prefix slice of one residual MLP:

* input features  ``m = ceil(F0 * res / base_res)``  (resolution)
* hidden width    ``h = ceil(H0 * c_last / c_last_base)``  (width)
* layers          ``L = ceil(total scaled blocks / blocks_per_layer)``  (depth)
* layer ``l`` takes its operator from a representative block: inner width
  ``ceil(h * e * k / 18)`` and, if the block uses SE, a learned gate ``2 sigmoid(g)``.

A path uses the first ``L`` layers and the first ``m`` / ``h`` / inner units of
each weight matrix, so two paths share parameters exactly on their common prefix.
Input features are ordered by decreasing class information, which makes
larger resolution genuinely useful.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .space import BaseArch, ScalingStrategy, SearchSpace, apply_strategy, enumerate_grid, space_from_dict

FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


def _cdiv(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class ToyConfig:
    base_features: int = 16
    base_hidden: int = 24
    blocks_per_layer: int = 4
    num_classes: int = 10
    clusters_per_class: int = 2
    n_train: int = 8000
    n_val: int = 1000
    separation: float = 1.2
    informative_decay: float = 16.0
    data_seed: int = 1234
    batch_size: int = 64
    momentum: float = 0.9
    lr: float = 0.05
    weight_decay: float = 5e-4
    init_seed: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "ToyConfig":
        d = d or {}
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class PathShape:
    features: int
    hidden: int
    layers: tuple  # per layer: (inner width, use_se)

    @property
    def depth(self) -> int:
        return len(self.layers)


def make_dataset(cfg: ToyConfig, features: int):
    """Gaussian-mixture classification data; the validation split is carved from the training draw."""
    rng = np.random.default_rng(cfg.data_seed)
    n = cfg.n_train + cfg.n_val
    k = cfg.num_classes * cfg.clusters_per_class
    centers = rng.standard_normal((k, features))
    info = np.exp(-np.arange(features) / cfg.informative_decay)
    cluster = rng.integers(k, size=n)
    y = cluster % cfg.num_classes
    x = cfg.separation * centers[cluster] * info + rng.standard_normal((n, features))
    x = (x - x[: cfg.n_train].mean(0)) / x[: cfg.n_train].std(0)
    return (x[: cfg.n_train], y[: cfg.n_train]), (x[cfg.n_train :], y[cfg.n_train :])


class ToySupernet:
    def __init__(self, space: SearchSpace, config: ToyConfig | None = None):
        self.space = space
        self.cfg = config or ToyConfig()
        self._last_base = space.stages[-1].out_channels
        self._max = self._max_shape()
        (self.x_train, self.y_train), (self.x_val, self.y_val) = make_dataset(self.cfg, self._max.features)
        self.params = self._init_params()
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.visits: dict[int, int] = {}
        self.steps_trained = 0
        self.loss_history: list[float] = []
        self.frozen = False
        self._cache: dict = {}

    # -- path geometry ----------------------------------------------------

    def path_shape(self, base: BaseArch, s: ScalingStrategy) -> PathShape:
        arch = apply_strategy(base, s, self.space)
        m = _cdiv(self.cfg.base_features * arch.input_resolution, self.space.base_resolution)
        h = _cdiv(self.cfg.base_hidden * arch.stages[-1].out_channels, self._last_base)
        blocks = [b for st in arch.stages for b in st.blocks]
        L = _cdiv(len(blocks), self.cfg.blocks_per_layer)
        layers = []
        for l in range(L):
            b = blocks[(l * len(blocks)) // L]
            layers.append((max(1, _cdiv(h * b.expand_rate * b.kernel, 18)), bool(b.use_se)))
        return PathShape(m, h, tuple(layers))

    def _max_shape(self) -> PathShape:
        sp = self.space
        d = max(s.d for g in sp.grids for s in enumerate_grid(g))
        w = max(s.w for g in sp.grids for s in enumerate_grid(g))
        r = max(s.r for g in sp.grids for s in enumerate_grid(g))
        big = ScalingStrategy(d, w, r)
        # upper bounds: every stage at n_max with the widest operator
        stages = []
        for spec in sp.stages:
            widest = max(spec.choices, key=lambda c: (c.expand_rate * c.kernel, c.use_se))
            stages.append((widest,) * spec.n_max)
        shape = self.path_shape(BaseArch(tuple(stages)), big)
        e_k = max(c.expand_rate * c.kernel for spec in sp.stages for c in spec.choices)
        inner = max(1, _cdiv(shape.hidden * e_k, 18))
        return PathShape(shape.features, shape.hidden, ((inner, True),) * shape.depth)

    @property
    def max_shape(self) -> PathShape:
        return self._max

    def _init_params(self) -> dict:
        rng = np.random.default_rng(self.cfg.init_seed)
        F, H, L = self._max.features, self._max.hidden, self._max.depth
        U = self._max.layers[0][0]
        C = self.cfg.num_classes
        return {
            "w_in": rng.standard_normal((F, H)) * math.sqrt(2.0 / F),
            "b_in": np.zeros(H),
            "w1": rng.standard_normal((L, H, U)) * math.sqrt(2.0 / H),
            "b1": np.zeros((L, U)),
            "gate": np.zeros((L, U)),
            "w2": rng.standard_normal((L, U, H)) * (0.5 / math.sqrt(U)),
            "w_out": rng.standard_normal((H, C)) * math.sqrt(1.0 / H),
            "b_out": np.zeros(C),
        }

    # -- forward / backward -------------------------------------------------

    def _forward(self, x: np.ndarray, shape: PathShape, keep: bool = False):
        P = self.params
        m, h = shape.features, shape.hidden
        x = x[:, :m]
        pre = x @ P["w_in"][:m, :h] + P["b_in"][:h]
        z = np.maximum(pre, 0.0)
        tape = [(x, pre)]
        for l, (u, se) in enumerate(shape.layers):
            a = z @ P["w1"][l, :h, :u] + P["b1"][l, :u]
            r = np.maximum(a, 0.0)
            g = 2.0 / (1.0 + np.exp(-P["gate"][l, :u])) if se else None
            v = r * g if se else r
            if keep:
                tape.append((z, a, r, g, v))
            z = z + v @ P["w2"][l, :u, :h]
        logits = z @ P["w_out"][:h] + P["b_out"]
        return logits, z, tape

    def _loss_and_grads(self, x, y, shape: PathShape):
        P = self.params
        m, h = shape.features, shape.hidden
        logits, z, tape = self._forward(x, shape, keep=True)
        logits = logits - logits.max(1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(1, keepdims=True)
        n = len(y)
        loss = float(-np.log(p[np.arange(n), y] + 1e-12).mean())
        dlog = p
        dlog[np.arange(n), y] -= 1.0
        dlog /= n
        g = {"w_out": z.T @ dlog, "b_out": dlog.sum(0)}
        dz = dlog @ P["w_out"][:h].T
        w1g, b1g, gg, w2g = [], [], [], []
        for l in range(shape.depth - 1, -1, -1):
            u, se = shape.layers[l]
            zin, a, r, gate, v = tape[l + 1]
            w2g.append((l, u, v.T @ dz))
            dv = dz @ P["w2"][l, :u, :h].T
            if se:
                gs = gate / 2.0
                gg.append((l, u, (dv * r).sum(0) * 2.0 * gs * (1.0 - gs)))
                dr = dv * gate
            else:
                dr = dv
            da = dr * (a > 0)
            w1g.append((l, u, zin.T @ da))
            b1g.append((l, u, da.sum(0)))
            dz = dz + da @ P["w1"][l, :h, :u].T
        x0, pre = tape[0]
        dpre = dz * (pre > 0)
        g["w_in"] = x0.T @ dpre
        g["b_in"] = dpre.sum(0)
        return loss, g, w1g, b1g, gg, w2g

    def _update(self, name: str, idx, grad: np.ndarray, lr: float, decay: bool = True):
        W, V = self.params[name], self.velocity[name]
        if decay and self.cfg.weight_decay:
            grad = grad + self.cfg.weight_decay * W[idx]
        V[idx] = self.cfg.momentum * V[idx] + grad
        W[idx] -= lr * V[idx]

    def train_step(self, base: BaseArch, s: ScalingStrategy, x, y, lr: float) -> float:
        shape = self.path_shape(base, s)
        m, h = shape.features, shape.hidden
        loss, g, w1g, b1g, gg, w2g = self._loss_and_grads(x, y, shape)
        self._update("w_in", np.s_[:m, :h], g["w_in"], lr)
        self._update("b_in", np.s_[:h], g["b_in"], lr, decay=False)
        self._update("w_out", np.s_[:h], g["w_out"], lr)
        self._update("b_out", np.s_[:], g["b_out"], lr, decay=False)
        for l, u, grad in w1g:
            self._update("w1", np.s_[l, :h, :u], grad, lr)
        for l, u, grad in b1g:
            self._update("b1", np.s_[l, :u], grad, lr, decay=False)
        for l, u, grad in gg:
            self._update("gate", np.s_[l, :u], grad, lr, decay=False)
        for l, u, grad in w2g:
            self._update("w2", np.s_[l, :u, :h], grad, lr)
        return loss

    def slice_mask(self, base: BaseArch, s: ScalingStrategy) -> dict:
        """Boolean masks of the parameters a path may touch."""
        shape = self.path_shape(base, s)
        m, h = shape.features, shape.hidden
        masks = {k: np.zeros(v.shape, bool) for k, v in self.params.items()}
        masks["w_in"][:m, :h] = True
        masks["b_in"][:h] = True
        masks["w_out"][:h] = True
        masks["b_out"][:] = True
        for l, (u, se) in enumerate(shape.layers):
            masks["w1"][l, :h, :u] = True
            masks["b1"][l, :u] = True
            masks["w2"][l, :u, :h] = True
            if se:
                masks["gate"][l, :u] = True
        return masks

    # -- evaluation -------------------------------------------------------

    def evaluate(self, base: BaseArch, s: ScalingStrategy) -> float:
        key = (base, s)
        if key not in self._cache:
            logits, _, _ = self._forward(self.x_val, self.path_shape(base, s))
            self._cache[key] = float((logits.argmax(1) == self.y_val).mean())
        return self._cache[key]

    __call__ = evaluate

    def freeze(self) -> "ToySupernet":
        self.frozen = True
        return self

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "version": FORMAT_VERSION,
            "config": asdict(self.cfg),
            "space": self.space.source,
            "steps_trained": self.steps_trained,
            "visits": {str(k): v for k, v in self.visits.items()},
            "frozen": self.frozen,
        }
        arrays = {f"p_{k}": v for k, v in self.params.items()}
        arrays.update({f"v_{k}": v for k, v in self.velocity.items()})
        meta_arr = np.array(json.dumps(meta, sort_keys=True))
        if hasattr(path, "write"):
            np.savez(path, meta=meta_arr, **arrays)
            return
        with open(path, "wb") as fh:
            np.savez(fh, meta=meta_arr, **arrays)

    @classmethod
    def load(cls, path, space: SearchSpace | None = None) -> "ToySupernet":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != FORMAT_VERSION:
                raise ValueError(f"{path}: unsupported supernet format version {meta.get('version')!r}")
            if space is None:
                if not meta.get("space"):
                    raise ValueError(f"{path}: no search space stored; pass one explicitly")
                space = space_from_dict(meta["space"])
            net = cls(space, ToyConfig.from_dict(meta["config"]))
            for k in net.params:
                if data[f"p_{k}"].shape != net.params[k].shape:
                    raise ValueError(f"{path}: parameter {k} has shape {data[f'p_{k}'].shape}")
                net.params[k] = data[f"p_{k}"].copy()
                net.velocity[k] = data[f"v_{k}"].copy()
        net.steps_trained = meta["steps_trained"]
        net.visits = {int(k): v for k, v in meta["visits"].items()}
        net.frozen = meta["frozen"]
        return net


def _draw(sampler):
    if hasattr(sampler, "draw"):
        return sampler.draw()
    return sampler()


def train_supernet(net: ToySupernet, sampler, steps: int, lr: float | None = None, seed: int = 0) -> ToySupernet:
    """Path-sampled training: one sampled path per mini-batch, cosine-decayed momentum SGD.

    ``sampler`` is an object with ``draw() -> (stage, base, strategy)`` or an
    equivalent zero-argument callable.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if net.frozen:
        raise RuntimeError("cannot train a frozen supernet")
    lr0 = net.cfg.lr if lr is None else lr
    rng = np.random.default_rng(seed)
    n = len(net.y_train)
    B = min(net.cfg.batch_size, n)
    initial = None
    for step in range(steps):
        stage, base, s = _draw(sampler)
        key = -1 if stage is None else int(stage)
        net.visits[key] = net.visits.get(key, 0) + 1
        idx = rng.integers(n, size=B)
        lr_t = 0.5 * lr0 * (1.0 + math.cos(math.pi * step / steps))
        # overflow shows up as a non-finite loss, handled just below
        with np.errstate(over="ignore", invalid="ignore"):
            loss = net.train_step(base, s, net.x_train[idx], net.y_train[idx], lr_t)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        if initial is None:
            initial = loss
        elif loss > 10.0 * initial:
            raise TrainingDiverged(f"loss {loss:.3f} at step {step} exceeds 10x the initial {initial:.3f}")
        net.loss_history.append(loss)
        net.steps_trained += 1
    net._cache.clear()
    return net


class FixedPath:
    def __init__(self, base, s, stage=None):
        self.event = (stage, base, s)

    def draw(self):
        return self.event


def train_standalone(space: SearchSpace, config: ToyConfig, base: BaseArch, s: ScalingStrategy,
                     steps: int, seed: int = 0) -> float:
    """Validation accuracy of one path trained alone from a fresh initialisation."""
    net = ToySupernet(space, config)
    train_supernet(net, FixedPath(base, s), steps, seed=seed)
    return net.freeze().evaluate(base, s)


def supernet_eval(net: ToySupernet, base: BaseArch, s: ScalingStrategy) -> float:
    return net.evaluate(base, s)
