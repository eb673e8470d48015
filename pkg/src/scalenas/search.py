"""Markov chain-based evolution: alternate a base-model EA and per-stage grid searches.

Each iteration first evolves the base model with the strategies fixed
(fitness ``sum_j pi_j * ACC(base, S_j)``), then re-picks every stage's
strategy by grid search with the base fixed. The population is carried over
between iterations, so the per-iteration spread of evaluated accuracies is
a convergence signal.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .flops import BatchFlopsCounter, BudgetPlan, path_flops, sample_encoded, select_budgets, within_budget
from .space import IDENTITY, BaseArch, ScalingStrategy, SearchSpace, crossover, enumerate_grid, mutate

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    def __init__(self, message: str, stage: int | None = None, budget: int | None = None):
        super().__init__(message)
        self.stage = stage
        self.budget = budget


@dataclass
class MceaConfig:
    M: int = 3
    T: int = 8
    K: int = 20
    population: int = 50
    generations: int = 40
    pi: tuple[float, ...] | None = None
    mutation_rate: float = 0.1
    tolerance: float = 0.10
    seed: int = 0
    max_retries: int = 50
    max_draws: int = 10_000
    multi_objective: bool = False
    track_base: bool = True

    def __post_init__(self):
        if self.M < 1 or self.T < 0 or self.K < 1:
            raise ValueError("need M >= 1, T >= 0 and K >= 1")
        if self.population < 1 or self.generations < 0:
            raise ValueError("population must be positive and generations non-negative")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation rate must lie in [0, 1]")
        if self.pi is None:
            self.pi = tuple([1.0 / self.M] * self.M)
        self.pi = tuple(float(p) for p in self.pi)
        if len(self.pi) != self.M:
            raise ValueError(f"pi needs {self.M} entries (stages 1..M), got {len(self.pi)}")
        if any(p < 0 for p in self.pi) or abs(sum(self.pi) - 1.0) > 1e-9:
            raise ValueError("pi must be non-negative and sum to 1")

    @classmethod
    def from_dict(cls, d: dict) -> "MceaConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if known.get("pi") is not None:
            known["pi"] = tuple(known["pi"])
        return cls(**known)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pi"] = list(self.pi)
        return d


@dataclass
class SearchState:
    t: int
    base: BaseArch | None
    strategies: dict[int, ScalingStrategy]
    objective_history: list[float] = field(default_factory=list)
    stds: list[dict[int, float]] = field(default_factory=list)
    means: list[dict[int, float]] = field(default_factory=list)
    population: list[BaseArch] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    budgets: tuple[int, ...] = ()
    widened: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.t,
            "base": self.base.to_dict() if self.base else None,
            "base_hash": self.base.hash() if self.base else None,
            "strategies": {str(j): list(s.as_tuple()) for j, s in sorted(self.strategies.items())},
            "budgets": list(self.budgets),
            "objective_history": self.objective_history,
            "stds": [{str(j): v for j, v in sorted(d.items())} for d in self.stds],
            "means": [{str(j): v for j, v in sorted(d.items())} for d in self.means],
            "widened_stages": self.widened,
        }


def _strategy_key(s: ScalingStrategy):
    return s.as_tuple()


class MCEA:
    """Search driver; owns the RNG, caches and the evaluation log."""

    def __init__(self, space: SearchSpace, evaluator, config: MceaConfig, plan: BudgetPlan | None = None):
        if config.M > space.M:
            raise ValueError(f"config asks for M={config.M} but the space defines {space.M} scaling stages")
        self.space = space
        self.evaluator = evaluator
        self.cfg = config
        self.plan = plan or plan_for(space, config)
        self.rng = np.random.default_rng(config.seed)
        self.grids = {j: enumerate_grid(space.grids[j]) for j in range(config.M + 1)}
        self.counter = BatchFlopsCounter(space)
        self._flops: dict = {}
        self._acc: dict = {}
        self.state = SearchState(0, None, {0: IDENTITY}, budgets=self.plan.budgets[: config.M + 1])
        self._iteration_evals: dict[int, dict] = {}

    # -- primitives ------------------------------------------------------

    def flops(self, base: BaseArch, s: ScalingStrategy) -> int:
        key = (base, s)
        if key not in self._flops:
            self._flops[key] = path_flops(base, s, self.space)
        return self._flops[key]

    def accuracy(self, base: BaseArch, s: ScalingStrategy, stage: int, phase: str) -> float:
        key = (base, s)
        if key not in self._acc:
            acc = float(self.evaluator.evaluate(base, s))
            self._acc[key] = acc
            self.state.records.append(
                {
                    "t": self.state.t,
                    "phase": phase,
                    "stage": stage,
                    "arch": base.hash(),
                    "strategy": list(s.as_tuple()),
                    "flops": self.flops(base, s),
                    "accuracy": acc,
                }
            )
        acc = self._acc[key]
        if phase == "base":
            self._iteration_evals.setdefault(stage, {})[base] = acc
        return acc

    def in_band(self, base: BaseArch, s: ScalingStrategy, j: int, widen: float = 1.0) -> bool:
        tol = min(self.cfg.tolerance * widen, 0.999)
        return within_budget(self.flops(base, s), self.plan.budgets[j], tol)

    def active_stages(self) -> list[int]:
        return [j for j in range(1, self.cfg.M + 1) if self.cfg.pi[j - 1] > 0]

    def feasible(self, base: BaseArch, strategies=None) -> bool:
        strategies = strategies if strategies is not None else self.state.strategies
        if not self.in_band(base, IDENTITY, 0):
            return False
        return all(self.in_band(base, strategies[j], j) for j in self.active_stages() if j in strategies)

    def fitness(self, base: BaseArch, strategies=None) -> float:
        strategies = strategies if strategies is not None else self.state.strategies
        total = 0.0
        for j in range(1, self.cfg.M + 1):
            pi = self.cfg.pi[j - 1]
            if pi > 0:
                total += pi * self.accuracy(base, strategies[j], j, "base")
        if self.cfg.track_base:
            self.accuracy(base, IDENTITY, 0, "base")
        return total

    def objective(self, base: BaseArch, strategies=None) -> float:
        """Weighted accuracy without touching the per-iteration telemetry."""
        strategies = strategies if strategies is not None else self.state.strategies
        total = 0.0
        for j in range(1, self.cfg.M + 1):
            if self.cfg.pi[j - 1] > 0:
                key = (base, strategies[j])
                acc = self._acc[key] if key in self._acc else float(self.evaluator.evaluate(base, strategies[j]))
                total += self.cfg.pi[j - 1] * acc
        return total

    def random_feasible(self, n: int, strategies=None, budget_stages=None) -> list[BaseArch]:
        """Up to ``n`` distinct feasible bases by batched rejection sampling."""
        strategies = strategies if strategies is not None else self.state.strategies
        stages = self.active_stages() if budget_stages is None else budget_stages
        out, seen, drawn = [], set(), 0
        tol = self.cfg.tolerance
        while len(out) < n and drawn < self.cfg.max_draws:
            batch = min(512, self.cfg.max_draws - drawn)
            enc = sample_encoded(self.space, batch, self.rng)
            drawn += batch
            f = self.counter.flops(enc, IDENTITY)
            ok = np.abs(f - self.plan.budgets[0]) <= tol * self.plan.budgets[0]
            for j in stages:
                if j in strategies:
                    fj = self.counter.flops(enc, strategies[j])
                    ok &= np.abs(fj - self.plan.budgets[j]) <= tol * self.plan.budgets[j]
            for i in np.nonzero(ok)[0]:
                base = enc.decode(self.space, int(i))
                if base not in seen:
                    seen.add(base)
                    out.append(base)
                    if len(out) == n:
                        break
        return out

    # -- steps -----------------------------------------------------------

    def init_strategies(self) -> dict[int, ScalingStrategy]:
        """Pick S_j^(0) by mean accuracy over K random bases inside the stage-0 band."""
        bases = self.random_feasible(self.cfg.K, strategies={}, budget_stages=[])
        if not bases:
            raise InfeasibleError(
                f"no base model within {self.cfg.tolerance:.0%} of the stage-0 budget "
                f"{self.plan.budgets[0]:,} in {self.cfg.max_draws} draws",
                stage=0, budget=self.plan.budgets[0],
            )
        self.init_bases = bases
        strategies = {0: IDENTITY}
        for j in range(1, self.cfg.M + 1):
            budget = self.plan.budgets[j]
            scored = []
            for s in self.grids[j]:
                mean_flops = float(np.mean([self.flops(b, s) for b in bases]))
                if not within_budget(mean_flops, budget, self.cfg.tolerance):
                    continue
                mean_acc = float(np.mean([self.accuracy(b, s, j, "init") for b in bases]))
                scored.append((-mean_acc, _strategy_key(s), s))
            if not scored:
                raise InfeasibleError(
                    f"stage {j}: no grid strategy reaches the budget {budget:,} FLOPs "
                    f"(+/-{self.cfg.tolerance:.0%}) averaged over {len(bases)} base models",
                    stage=j, budget=budget,
                )
            strategies[j] = min(scored)[2]
        self.state.strategies = strategies
        return strategies

    def _tournament(self, pop: list[BaseArch], fit: dict, ranks: dict | None) -> BaseArch:
        i, k = self.rng.integers(len(pop), size=2)
        a, b = pop[int(i)], pop[int(k)]
        if ranks is not None:
            ka, kb = ranks[a], ranks[b]
            return a if ka <= kb else b
        return a if fit[a] >= fit[b] else b

    def _sort_key(self, base: BaseArch, fit: dict):
        return (-fit[base], self.flops(base, IDENTITY), base.canonical_json())

    def _select(self, pool: list[BaseArch], fit: dict, size: int) -> list[BaseArch]:
        unique = list(dict.fromkeys(pool))
        if self.cfg.multi_objective:
            return nsga2_select(unique, fit, {b: self.flops(b, IDENTITY) for b in unique}, size, self._sort_key)
        unique.sort(key=lambda b: self._sort_key(b, fit))
        return unique[:size]

    def base_step(self, population: list[BaseArch] | None = None) -> BaseArch:
        cfg = self.cfg
        if population is None:
            population = self._seed_population()
        if not population:
            raise InfeasibleError(
                "no feasible base model for the current strategies "
                f"after {cfg.max_draws} draws", stage=0, budget=self.plan.budgets[0],
            )
        fit = {b: self.fitness(b) for b in population}
        pop = list(population)
        for _ in range(cfg.generations):
            ranks = None
            if cfg.multi_objective:
                ranks = {b: r for r, b in enumerate(pop)}
            offspring = []
            for _ in range(cfg.population):
                p1 = self._tournament(pop, fit, ranks)
                p2 = self._tournament(pop, fit, ranks)
                child = None
                for _ in range(cfg.max_retries):
                    cand = mutate(crossover(p1, p2, self.rng), cfg.mutation_rate, self.space, self.rng)
                    if self.feasible(cand):
                        child = cand
                        break
                if child is None:
                    child = p1
                if child not in fit:
                    fit[child] = self.fitness(child)
                offspring.append(child)
            pop = self._select(pop + offspring, fit, cfg.population)
        pop.sort(key=lambda b: self._sort_key(b, fit))
        self.state.population = pop
        self.state.base = pop[0]
        return pop[0]

    def _seed_population(self) -> list[BaseArch]:
        P = self.cfg.population
        seeds = []
        if self.state.base is not None:
            seeds.append(self.state.base)
        carry = self.state.population or getattr(self, "init_bases", [])
        seeds.extend(b for b in carry if self.feasible(b))
        seeds = list(dict.fromkeys(seeds))[:P]
        if len(seeds) < P:
            fresh = self.random_feasible(P - len(seeds) + 8)
            seeds.extend(b for b in fresh if b not in set(seeds))
            seeds = list(dict.fromkeys(seeds))[:P]
        return seeds

    def strategy_step(self, j: int) -> ScalingStrategy:
        base = self.state.base
        budget = self.plan.budgets[j]
        for widen in (1.0, 2.0):
            cands = [s for s in self.grids[j] if self.in_band(base, s, j, widen)]
            if cands:
                break
        else:
            raise InfeasibleError(
                f"stage {j}: no grid strategy within {2 * self.cfg.tolerance:.0%} of the budget "
                f"{budget:,} FLOPs for base {base.hash()}",
                stage=j, budget=budget,
            )
        if widen > 1.0:
            log.warning("stage %d: budget band widened to %.0f%%", j, 100 * widen * self.cfg.tolerance)
            self.state.widened.append(j)
        scored = [(-self.accuracy(base, s, j, "strategy"), _strategy_key(s), s) for s in cands]
        best = min(scored)[2]
        self.state.strategies[j] = best
        return best

    # -- driver ----------------------------------------------------------

    def _initial_incumbent(self):
        feasible = [b for b in getattr(self, "init_bases", []) if self.feasible(b)]
        if not feasible:
            return None
        fit = {b: self.objective(b) for b in feasible}
        return sorted(feasible, key=lambda b: self._sort_key(b, fit))[0]

    def run(self) -> SearchState:
        st = self.state
        self.init_strategies()
        st.base = self._initial_incumbent()
        if st.base is not None:
            st.objective_history.append(self.objective(st.base))
        for t in range(1, self.cfg.T + 1):
            st.t = t
            self._iteration_evals = {}
            self.base_step()
            for j in range(1, self.cfg.M + 1):
                self.strategy_step(j)
            evals = self._iteration_evals
            st.stds.append({j: float(np.std(list(v.values()))) for j, v in sorted(evals.items())})
            st.means.append({j: float(np.mean(list(v.values()))) for j, v in sorted(evals.items())})
            st.objective_history.append(self.objective(st.base))
            log.info(
                "iteration %d: objective %.5f, stds %s",
                t, st.objective_history[-1],
                ", ".join(f"{j}:{v:.4f}" for j, v in st.stds[-1].items()),
            )
        return st


def plan_for(space: SearchSpace, config: MceaConfig, n_samples: int = 100_000) -> BudgetPlan:
    if all(g.flops_budget is not None for g in space.grids[: config.M + 1]):
        budgets = [g.flops_budget for g in space.grids[: config.M + 1]]
        return BudgetPlan.from_f0(budgets[0], config.M, config.tolerance)
    return select_budgets(space, n_samples, config.M, rng=config.seed, tolerance=config.tolerance)


def run_mcea(space: SearchSpace, evaluator, config: MceaConfig, plan: BudgetPlan | None = None) -> SearchState:
    return MCEA(space, evaluator, config, plan).run()


def init_strategies(space, evaluator, config: MceaConfig, plan=None) -> dict[int, ScalingStrategy]:
    return MCEA(space, evaluator, config, plan).init_strategies()


# --------------------------------------------------------------------------
# NSGA-II survivor selection (fitness up, base FLOPs down)


def _fronts(items, fit, cost):
    remaining = list(items)
    fronts = []
    while remaining:
        front = [
            a for a in remaining
            if not any(
                (fit[b] >= fit[a] and cost[b] <= cost[a]) and (fit[b] > fit[a] or cost[b] < cost[a])
                for b in remaining
            )
        ]
        fronts.append(front)
        chosen = set(front)
        remaining = [a for a in remaining if a not in chosen]
    return fronts


def _crowding(front, fit, cost):
    dist = {a: 0.0 for a in front}
    for values in (fit, cost):
        ordered = sorted(front, key=lambda a: values[a])
        lo, hi = values[ordered[0]], values[ordered[-1]]
        dist[ordered[0]] = dist[ordered[-1]] = float("inf")
        if hi == lo:
            continue
        for k in range(1, len(ordered) - 1):
            dist[ordered[k]] += (values[ordered[k + 1]] - values[ordered[k - 1]]) / (hi - lo)
    return dist


def nsga2_select(items, fit, cost, size, tie_key):
    out = []
    for front in _fronts(items, fit, cost):
        crowd = _crowding(front, fit, cost)
        front = sorted(front, key=lambda a: (-crowd[a],) + tie_key(a, fit))
        if len(out) + len(front) <= size:
            out.extend(front)
        else:
            out.extend(front[: size - len(out)])
            break
    # highest fitness first, so index order doubles as tournament rank
    best = min(out, key=lambda a: tie_key(a, fit))
    out.remove(best)
    return [best] + out


# --------------------------------------------------------------------------
# exhaustive reference


def brute_force(space: SearchSpace, evaluator, config: MceaConfig, plan: BudgetPlan, bases=None):
    """Global optimum of the weighted objective by enumeration.

    Returns ``(objective, base, strategies)``; ties resolved like the search
    (lexicographic strategy; lower base FLOPs, then canonical order).
    """
    from .space import enumerate_bases

    bases = bases if bases is not None else enumerate_bases(space)
    tol = config.tolerance
    grids = {j: enumerate_grid(space.grids[j]) for j in range(1, config.M + 1)}
    cache = {}

    def acc(b, s):
        if (b, s) not in cache:
            cache[(b, s)] = float(evaluator.evaluate(b, s))
        return cache[(b, s)]

    best = None
    for b in bases:
        f0 = path_flops(b, IDENTITY, space)
        if not within_budget(f0, plan.budgets[0], tol):
            continue
        total, chosen, ok = 0.0, {0: IDENTITY}, True
        for j in range(1, config.M + 1):
            cands = []
            for s in grids[j]:
                fj = path_flops(b, s, space)
                if within_budget(fj, plan.budgets[j], tol):
                    cands.append((-acc(b, s), s.as_tuple(), s))
            if not cands:
                ok = False
                break
            pick = min(cands)
            chosen[j] = pick[2]
            total += config.pi[j - 1] * -pick[0]
        if not ok:
            continue
        key = (-total, f0, b.canonical_json())
        if best is None or key < best[0]:
            best = (key, total, b, chosen)
    if best is None:
        raise InfeasibleError("no jointly feasible base model exists")
    return best[1], best[2], best[3]
