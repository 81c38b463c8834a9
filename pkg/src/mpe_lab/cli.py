"""mpe-lab command line: simulate | estimate | oracle | bench | validate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import DESK_TRAIN, BenchConfig, emit_report, run_benchmark
from .data import Dataset, read_jsonl, write_jsonl, write_long_csv
from .environments import TinyEnv, make_env
from .estimators import ESTIMATORS
from .nuisance import NuisanceConfig, UnsupportedDirectionError, fit_nuisances, make_folds
from .paths import direction_from_name
from .truth import TruthSpec, crn_truth, exact_theta_tiny

CONFIG_KEYS = {"env", "env_params", "direction", "q_net", "h_net", "nuisance", "truth", "bench", "seed"}


class CliError(Exception):
    pass


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def env_from_config(cfg: dict):
    env = make_env(cfg.get("env", "benchmark"), cfg.get("env_params"))
    if "direction" in cfg:
        want = direction_from_name(cfg["direction"])
        if type(want) is not type(env.direction):
            raise CliError(f"environment {env.name} perturbs along {type(env.direction).__name__}, "
                           f"not {cfg['direction']!r}")
    return env


def nuisance_config(cfg: dict) -> NuisanceConfig:
    return NuisanceConfig(q_net=replace(DESK_TRAIN, **cfg.get("q_net", {})),
                          h_net=replace(DESK_TRAIN, **cfg.get("h_net", {})),
                          **cfg.get("nuisance", {}))


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=1)
    sys.stdout.write("\n")


# ---------------------------------------------------------------- subcommands

def cmd_simulate(args, cfg) -> int:
    env = env_from_config(cfg)
    n = args.n if args.n is not None else getattr(env.cfg, "n", 5000)
    ds = env.simulate(n, args.shift, seed=args.seed if args.seed is not None else cfg.get("seed", 0))
    if args.format == "csv":
        write_long_csv(ds, args.out)
    else:
        write_jsonl(ds, args.out)
    _dump({"path": str(args.out), "n": ds.n, "T": ds.T, "p": ds.p, "gamma": ds.gamma})
    return 0


def cmd_estimate(args, cfg) -> int:
    env = env_from_config(cfg)
    ds = read_jsonl(args.data, gamma=args.gamma if args.gamma is not None else env.gamma)
    if args.gamma is not None and args.gamma != ds.gamma:
        ds = Dataset(ds.X, ds.A, ds.R, args.gamma, ds.unit_ids)
    if ds.T != env.T or ds.p != env.p:
        raise CliError(f"dataset has T={ds.T}, p={ds.p}; environment expects T={env.T}, p={env.p}")
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    folds = make_folds(ds.n, args.folds, seed)
    need_h = args.method in ("srw", "asrw")
    scores = (args.score,) if need_h else ()
    if need_h and args.score == "learned" and isinstance(env, TinyEnv):
        raise UnsupportedDirectionError("learned scores are not available for the odds-tilt direction; "
                                        "use --score oracle")
    sets = fit_nuisances(ds, env, folds, nuisance_config(cfg), scores=scores,
                         fit_q=args.method != "srw", seed=seed)
    nuis = next(iter(sets.values()))
    report = ESTIMATORS[args.method](ds, nuis)
    out = report.to_json()
    out["score"] = args.score if need_h else None
    _dump(out)
    return 0


def cmd_oracle(args, cfg) -> int:
    env = env_from_config(cfg)
    if isinstance(env, TinyEnv):
        _dump({"theta_true": exact_theta_tiny(env.cfg), "mc_se": 0.0, "epsilon": 0.0, "M": 0})
        return 0
    spec = TruthSpec(**cfg.get("truth", {}))
    if args.M is not None:
        spec = replace(spec, M=args.M)
    if args.epsilon is not None:
        spec = replace(spec, epsilon=args.epsilon)
    _dump(crn_truth(env, spec).to_json())
    return 0


def bench_config(cfg: dict, outdir=None) -> BenchConfig:
    b = dict(cfg.get("bench", {}))
    b.setdefault("env", cfg.get("env", "benchmark"))
    b.setdefault("env_params", cfg.get("env_params", {}))
    for key in ("q_net", "h_net", "truth", "nuisance", "seed"):
        if key in cfg:
            b.setdefault(key, cfg[key])
    if outdir is not None:
        b["outdir"] = str(outdir)
    return BenchConfig.from_dict(b)


def cmd_bench(args, cfg) -> int:
    bc = bench_config(cfg, args.outdir)
    if bc.outdir is None:
        raise CliError("no output directory: pass --outdir or set bench.outdir")
    summaries = run_benchmark(bc)
    files = emit_report(summaries, bc.outdir)
    _dump({"summary_csv": str(files["csv"]), "rmse_scatter_svg": str(files["svg"]),
           "rows": len(summaries), "failed_replications": sum({(s.env, s.n, s.p, s.T): s.failed
                                                                for s in summaries}.values())})
    return 0


def cmd_validate(args, cfg) -> int:
    from .validate import run_checks

    results = run_checks(seed=args.seed if args.seed is not None else 0)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpe-lab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int)
        return p

    p = add("simulate", "simulate a dataset from an environment")
    p.add_argument("--n", type=int)
    p.add_argument("--shift", type=float, default=0.0, help="policy-path parameter epsilon")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--out", type=Path, required=True)

    p = add("estimate", "estimate the marginal policy effect from a dataset")
    p.add_argument("data", type=Path, help="JSON Lines trajectory file")
    p.add_argument("--method", choices=sorted(ESTIMATORS), default="asrw")
    p.add_argument("--score", choices=("learned", "oracle"), default="learned")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--gamma", type=float)

    p = add("oracle", "ground-truth effect (CRN Monte Carlo, exact for the tiny MDP)")
    p.add_argument("--M", type=int)
    p.add_argument("--epsilon", type=float)

    p = add("bench", "Monte Carlo benchmark; writes summary.csv and rmse_scatter.svg")
    p.add_argument("--outdir", type=Path)

    add("validate", "exact identities and estimator invariants; nonzero exit on failure")
    return ap


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "oracle": cmd_oracle,
            "bench": cmd_bench, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (CliError, ValueError, TypeError, KeyError, OSError, FloatingPointError) as exc:
        print(f"mpe-lab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
