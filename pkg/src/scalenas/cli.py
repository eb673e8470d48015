"""scalenas command line: simulate-space, train-evaluator, search, fit, rank, report.

Exit codes: 0 success, 1 usage or malformed input, 2 infeasible search space,
3 I/O error, 4 completed with a warning (e.g. zero draws requested).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from io import BytesIO
from pathlib import Path

import numpy as np
import yaml

from . import io as sio
from .density import kde_modes
from .flops import BatchFlopsCounter, BudgetPlan, path_flops, select_budgets
from .rank import ConstantSeriesError, all_coefficients
from .sampling import HSSSampler, MixtureWeights, UniformSampler, simulate_hss, simulate_uniform
from .scaling_law import DIMENSIONS, FAMILIES, compare_families, fit_scaling_law
from .search import InfeasibleError, MCEA, MceaConfig
from .space import CONFIG_DIR, ConfigError, SearchSpace, builtin_space, load_space, space_from_dict

log = logging.getLogger("scalenas")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_WARNING = 0, 1, 2, 3, 4

DEFAULTS = {
    "space": "imagenet",
    "seed": 0,
    "out": "runs/default",
    "budgets": {"samples": 100_000, "f0": None, "tolerance": 0.10},
    "hss": {"weights": "equal"},
    "simulate": {"samples": 750_000, "baseline": "per_axis"},
    "evaluator": {
        "kind": "surrogate",
        "seed": 0,
        "sigma": 0.0,
        "path": None,
        "steps": 3000,
        "sampler": "hss",
        "toy": {},
    },
    "search": {
        "M": 3, "T": 8, "K": 20, "population": 50, "generations": 40, "pi": None,
        "mutation_rate": 0.1, "multi_objective": False,
    },
}


class UsageError(Exception):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_run_config(path=None) -> dict:
    """Defaults, then the file's ``defaults`` section, then its other top-level keys."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg["_dir"] = str(Path.cwd())
    if path is None:
        return cfg
    path = Path(path)
    with path.open() as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: run config must be a mapping")
    cfg = _merge(cfg, raw.get("defaults", {}))
    cfg = _merge(cfg, {k: v for k, v in raw.items() if k != "defaults"})
    cfg["_dir"] = str(path.parent.resolve())
    return cfg


def resolve_space(cfg: dict) -> SearchSpace:
    ref = cfg["space"]
    if isinstance(ref, dict):
        return space_from_dict(ref)
    ref = str(ref)
    if (CONFIG_DIR / f"{ref}.yaml").exists() and not ref.endswith((".yaml", ".yml")):
        return builtin_space(ref)
    p = Path(ref)
    if not p.is_absolute():
        p = Path(cfg.get("_dir", ".")) / p
    if not p.exists():
        raise FileNotFoundError(f"search-space file not found: {p}")
    return load_space(p)


def budget_plan(space: SearchSpace, cfg: dict, M: int) -> BudgetPlan:
    b = cfg["budgets"]
    return select_budgets(space, int(b["samples"]), M, rng=cfg["seed"], tolerance=float(b["tolerance"]), f0=b.get("f0"))


def mixture(space: SearchSpace, cfg: dict) -> MixtureWeights:
    mode = cfg["hss"]["weights"]
    if isinstance(mode, (list, tuple)):
        return MixtureWeights(tuple(float(x) for x in mode))
    return MixtureWeights.from_mode(mode, space)


def env_threads():
    raw = os.environ.get("SCALENAS_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SCALENAS_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"SCALENAS_THREADS must be a positive integer, got {raw!r}")
    return n


# --------------------------------------------------------------------------
# commands


def cmd_simulate_space(cfg: dict) -> int:
    space = resolve_space(cfg)
    n = int(cfg["simulate"]["samples"])
    if n < 0:
        raise UsageError("--samples must be non-negative")
    out = Path(cfg["out"])
    plan = budget_plan(space, cfg, space.M)
    counter = BatchFlopsCounter(space)
    rs = np.random.SeedSequence(cfg["seed"]).spawn(2)
    baseline = cfg["simulate"]["baseline"]
    hss = simulate_hss(space, mixture(space, cfg), n, np.random.default_rng(rs[0]), counter)
    uni = simulate_uniform(space, n, np.random.default_rng(rs[1]), baseline, counter)
    header = ["flops", "scaling_stage"]
    files = {
        "hss_flops.csv": zip(hss.flops.tolist(), hss.stages.tolist()),
        "uniform_flops.csv": zip(uni.flops.tolist(), uni.stages.tolist()),
    }
    summary = {"samples": n, "baseline": baseline, "budgets": list(plan.budgets), "f0": plan.f0}
    if n >= 2:
        modes = {"hss": kde_modes(hss.flops), "uniform": kde_modes(uni.flops)}
        summary["modes"] = {k: [float(x) for x in v.modes] for k, v in modes.items()}
        summary["mode_count"] = {k: v.count for k, v in modes.items()}
        summary["stage_frequency"] = {
            "hss": [float(np.mean(hss.stages == j)) for j in range(space.M + 1)],
            "uniform": [float(np.mean(uni.stages == j)) for j in range(-1, space.M + 1)],
        }
    for name, rows in files.items():
        sio.write_csv(out / name, header, rows)
    sio.write_json(out / "simulate.json", summary)
    if n < 2:
        log.warning("only %d draws requested: CSVs written, no histogram or mode count", n)
        return EXIT_WARNING
    from .plots import flops_histograms

    flops_histograms(out / "flops_hist.svg", {"HSS": hss.flops, f"uniform ({baseline})": uni.flops}, plan.budgets)
    for k, c in summary["mode_count"].items():
        print(f"{k}: {c} mode(s) at " + ", ".join(f"{m / 1e6:.0f}M" for m in summary["modes"][k]))
    return EXIT_OK


def _make_sampler(space, cfg, kind: str, seed: int):
    if kind == "hss":
        return HSSSampler(space, mixture(space, cfg), seed)
    if kind in ("uniform", "per_axis"):
        return UniformSampler(space, seed, mode="per_axis")
    if kind == "pooled":
        return UniformSampler(space, seed, mode="pooled")
    raise UsageError(f"unknown sampler {kind!r}")


def train_toy(space, cfg: dict):
    from .supernet import ToyConfig, ToySupernet, train_supernet

    ev = cfg["evaluator"]
    toy = ToyConfig.from_dict({**ev.get("toy", {}), "init_seed": int(ev["seed"])})
    net = ToySupernet(space, toy)
    sampler = _make_sampler(space, cfg, ev.get("sampler", "hss"), int(ev["seed"]))
    train_supernet(net, sampler, int(ev["steps"]), seed=int(ev["seed"]))
    return net.freeze()


def build_evaluator(space, cfg: dict):
    ev = cfg["evaluator"]
    kind = ev["kind"]
    if kind == "surrogate":
        from .surrogate import SurrogateModel

        return SurrogateModel.from_config(space, ev)
    if kind in ("toy", "toy-supernet", "supernet"):
        from .supernet import ToySupernet

        if ev.get("path"):
            p = Path(ev["path"])
            if not p.is_absolute():
                p = Path(cfg.get("_dir", ".")) / p
            return ToySupernet.load(p, space).freeze()
        return train_toy(space, cfg)
    raise UsageError(f"unknown evaluator kind {kind!r}")


def cmd_train_evaluator(cfg: dict) -> int:
    space = resolve_space(cfg)
    net = train_toy(space, cfg)
    out = Path(cfg["out"])
    buf = BytesIO()
    net.save(buf)
    sio.atomic_write_bytes(out / "supernet.npz", buf.getvalue())
    summary = {
        "steps": net.steps_trained,
        "visits": {str(k): v for k, v in sorted(net.visits.items())},
        "loss_first": float(net.loss_history[0]) if net.loss_history else None,
        "loss_last": float(np.mean(net.loss_history[-100:])) if net.loss_history else None,
        "sampler": cfg["evaluator"].get("sampler", "hss"),
    }
    sio.write_json(out / "train.json", summary)
    print(f"trained {net.steps_trained} steps; visits {summary['visits']}")
    return EXIT_OK


def search_result(space, cfg, mcfg: MceaConfig, plan: BudgetPlan, evaluator):
    driver = MCEA(space, evaluator, mcfg, plan)
    state = driver.run()
    result = state.to_dict()
    result["flops"] = {str(j): path_flops(state.base, s, space) for j, s in sorted(state.strategies.items())}
    result["accuracy"] = {
        str(j): float(evaluator.evaluate(state.base, s)) for j, s in sorted(state.strategies.items())
    }
    result["config"] = mcfg.to_dict()
    result["evaluator"] = {k: v for k, v in cfg["evaluator"].items() if k != "path"}
    result["space"] = space.name
    return result, state


def cmd_search(cfg: dict) -> int:
    space = resolve_space(cfg)
    s = cfg["search"]
    mcfg = MceaConfig.from_dict({**s, "seed": cfg["seed"], "tolerance": cfg["budgets"]["tolerance"]})
    plan = budget_plan(space, cfg, mcfg.M)
    evaluator = build_evaluator(space, cfg)
    result, state = search_result(space, cfg, mcfg, plan, evaluator)
    out = Path(cfg["out"])
    stages = sorted({j for row in state.stds for j in row})
    rows = [[t + 1] + [row.get(j, "") for j in stages] for t, row in enumerate(state.stds)]
    sio.write_jsonl(out / "search_log.jsonl", state.records)
    sio.write_csv(out / "telemetry.csv", ["iteration"] + [f"std_stage{j}" for j in stages], rows)
    sio.write_json(out / "result.json", result)
    if state.stds:
        from .plots import convergence

        convergence(out / "convergence.svg", state.stds)
    print(f"base {result['base_hash']}; objective {result['objective_history'][-1]:.5f}")
    for j, st in result["strategies"].items():
        print(f"  stage {j}: (d, w, r) = {tuple(st)}  {result['flops'][j] / 1e6:.0f}M FLOPs")
    return EXIT_OK


def _strategy_points(data: dict) -> dict:
    strategies = data.get("strategies", data)
    if not isinstance(strategies, dict) or not strategies:
        raise ValueError("strategies JSON must map stage index -> [d, w, r]")
    points = {dim: [] for dim in DIMENSIONS}
    for j, vals in strategies.items():
        vals = list(vals.values()) if isinstance(vals, dict) else list(vals)
        if len(vals) != 3:
            raise ValueError(f"stage {j}: expected [d, w, r], got {vals}")
        for dim, v in zip(DIMENSIONS, vals):
            points[dim].append((int(j), float(v)))
    if 0 not in {j for j, _ in points["d"]}:
        raise ValueError("strategies JSON must contain stage 0")
    return points


def cmd_fit(cfg: dict, strategies_path, family: str, stages) -> int:
    data = sio.read_json(strategies_path)
    points = _strategy_points(data)
    families = FAMILIES if family == "all" else (family,)
    for f in families:
        if f not in FAMILIES:
            raise UsageError(f"unknown family {f!r}; choose from {', '.join(FAMILIES)} or all")
    reports = compare_families(points, stages, families) if family == "all" else [
        fit_scaling_law(points, family, stages)
    ]
    out = Path(cfg["out"])
    doc = {"families": [r.to_dict() for r in reports], "best": reports[0].family, "stages": list(stages)}
    sio.write_json(out / "fit.json", doc)
    comp = []
    for r in reports:
        row = [r.family] + [r.rss[d] for d in DIMENSIONS] + [r.total_rss]
        comp.append(row)
    sio.write_csv(out / "fit_comparison.csv", ["family", "rss_d", "rss_w", "rss_r", "rss_total"], comp)
    observed = {dim: dict(points[dim]) for dim in DIMENSIONS}
    js = sorted(set(observed["d"]) | set(stages))
    curve_rows = []
    for r in reports:
        for j in js:
            vals = r.params(j)
            curve_rows.append(
                [r.family, j] + sum(([float(vals[d]), observed[d].get(j, "")] for d in DIMENSIONS), [])
            )
    sio.write_csv(
        out / "fit_curves.csv",
        ["family", "j", "d_fitted", "d_observed", "w_fitted", "w_observed", "r_fitted", "r_observed"],
        curve_rows,
    )
    from .plots import scaling_fits

    scaling_fits(out / "fit.svg", points, reports, stages)
    for r in reports:
        ext = ", ".join(f"s{j}=({s.d:.3f}, {s.w:.3f}, {s.r:.3f})" for j, s in sorted(r.extrapolated.items()))
        print(f"{r.family:12s} rss={r.total_rss:.3e}  {ext}")
    return EXIT_OK


def cmd_rank(cfg: dict, csv_path, json_out=None) -> int:
    acc, flops = sio.read_evaluation_csv(csv_path)
    if len(acc) < 2:
        raise ValueError(f"{csv_path}: need at least two rows, got {len(acc)}")
    try:
        coeffs = all_coefficients(acc, flops)
    except ConstantSeriesError as exc:
        raise ValueError(f"{csv_path}: {exc}") from exc
    print(
        f"Pearson {100 * coeffs['pearson']:.1f}  Spearman {100 * coeffs['spearman']:.1f}  "
        f"Kendall {100 * coeffs['kendall']:.1f}" + ("  (Kendall degenerate: constant column)" if coeffs["kendall_degenerate"] else "")
    )
    if json_out:
        sio.write_json(json_out, coeffs)
    return EXIT_OK


def cmd_report(cfg: dict, run_dir) -> int:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    report = {}
    for name in ("simulate", "train", "result", "fit"):
        p = run_dir / f"{name}.json"
        if p.exists():
            report[name] = sio.read_json(p)
    if not report:
        raise FileNotFoundError(f"{run_dir}: no simulate/train/result/fit JSON found")
    lines = [f"# run report: {run_dir.name}", ""]
    if "simulate" in report:
        s = report["simulate"]
        lines.append(f"simulate-space: {s['samples']} draws, budgets {[b // 10**6 for b in s['budgets']]}M")
        for k, c in s.get("mode_count", {}).items():
            lines.append(f"  {k}: {c} mode(s)")
    if "train" in report:
        t = report["train"]
        lines.append(f"train-evaluator: {t['steps']} steps, visits {t['visits']}")
    if "result" in report:
        r = report["result"]
        lines.append(f"search: base {r['base_hash']}, objective {r['objective_history'][-1]:.5f}")
        for j, st in r["strategies"].items():
            lines.append(f"  S{j} = {tuple(st)}  FLOPs {r['flops'][j]}  acc {r['accuracy'][j]:.4f}")
    if "fit" in report:
        f = report["fit"]
        lines.append(f"fit: best family {f['best']}")
        for fam in f["families"]:
            lines.append(f"  {fam['family']}: " + ", ".join(f"s{j}={tuple(v)}" for j, v in fam["extrapolated"].items()))
    text = "\n".join(lines) + "\n"
    target = Path(cfg["out"]) if cfg.get("_out_set") else run_dir
    sio.atomic_write_text(target / "report.md", text)
    print(text, end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _stages(text: str):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--stages expects comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scalenas", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, samples=False):
        sp.add_argument("--config", help="run config (YAML)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--space", help="search-space YAML or builtin name (imagenet, imagenet100, reduced)")
        if samples:
            sp.add_argument("--samples", type=int)
        return sp

    common(sub.add_parser("simulate-space", help="FLOPs histograms of HSS vs uniform sampling"), samples=True)
    tr = common(sub.add_parser("train-evaluator", help="train the toy super-supernet"))
    tr.add_argument("--steps", type=int)
    tr.add_argument("--sampler", choices=("hss", "uniform", "pooled"))
    se = common(sub.add_parser("search", help="run the alternating base/strategy search"), samples=True)
    se.add_argument("--evaluator", choices=("surrogate", "toy"))
    se.add_argument("--evaluator-path", help="trained supernet file (.npz)")
    fi = common(sub.add_parser("fit", help="fit scaling laws to searched strategies"))
    fi.add_argument("strategies", help="strategies JSON (e.g. result.json from search)")
    fi.add_argument("--family", default="exponential", help="exponential, linear, squared or all")
    fi.add_argument("--stages", type=_stages, default=(4, 5), help="stages to extrapolate, e.g. 4,5")
    ra = common(sub.add_parser("rank", help="Pearson/Spearman/Kendall of accuracy vs FLOPs"))
    ra.add_argument("csv", help="CSV with accuracy and flops columns")
    ra.add_argument("--json", dest="json_out", help="also write the coefficients as JSON")
    rp = common(sub.add_parser("report", help="summarise a run directory"))
    rp.add_argument("run_dir")
    return p


def _apply_flags(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
        cfg["_out_set"] = True
    if getattr(args, "space", None):
        cfg["space"] = args.space
        cfg["_dir"] = str(Path.cwd())
    if getattr(args, "samples", None) is not None:
        if args.command == "simulate-space":
            cfg["simulate"]["samples"] = args.samples
        else:
            cfg["budgets"]["samples"] = args.samples
    if getattr(args, "steps", None) is not None:
        cfg["evaluator"]["steps"] = args.steps
    if getattr(args, "sampler", None):
        cfg["evaluator"]["sampler"] = args.sampler
    if getattr(args, "evaluator", None):
        cfg["evaluator"]["kind"] = args.evaluator
    if getattr(args, "evaluator_path", None):
        cfg["evaluator"]["kind"] = "toy"
        cfg["evaluator"]["path"] = str(Path(args.evaluator_path).resolve())
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        env_threads()
        cfg = _apply_flags(load_run_config(args.config), args)
        if args.command == "simulate-space":
            return cmd_simulate_space(cfg)
        if args.command == "train-evaluator":
            return cmd_train_evaluator(cfg)
        if args.command == "search":
            return cmd_search(cfg)
        if args.command == "fit":
            return cmd_fit(cfg, args.strategies, args.family, args.stages)
        if args.command == "rank":
            return cmd_rank(cfg, args.csv, args.json_out)
        if args.command == "report":
            return cmd_report(cfg, args.run_dir)
    except InfeasibleError as exc:
        where = f" (stage {exc.stage}, budget {exc.budget:,} FLOPs)" if exc.stage is not None and exc.budget else ""
        print(f"error: infeasible search space{where}: {exc}", file=sys.stderr)
        print("hint: widen the budget tolerance or adjust the strategy grids", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ConfigError, ValueError, KeyError, json.JSONDecodeError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
