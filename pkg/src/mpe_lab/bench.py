"""Monte Carlo harness: replicate simulate -> cross-fit -> estimate, aggregate, report."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .environments import Environment, TinyEnv, make_env
from .estimators import estimate_all
from .nn import TrainConfig
from .nuisance import NuisanceConfig, NuisanceSet, fit_nuisances, make_folds, tiny_exact_evaluators
from .rng import derive_seed
from .truth import TruthResult, TruthSpec, crn_truth, exact_theta_tiny

log = logging.getLogger(__name__)

ESTIMATOR_NAMES = ("direct", "srw", "asrw", "srw_oracle", "asrw_oracle")
CSV_COLUMNS = ("env", "n", "p", "T", "estimator", "bias", "rmse", "coverage", "theta_true", "R")

# Short-run training profile used for desk-scale tables (see README).
DESK_TRAIN = TrainConfig(epochs=100, batch_size=128, lr=2e-3)


@dataclass(frozen=True)
class BenchConfig:
    """One Monte Carlo experiment.

    ``grid`` is a sequence of per-cell overrides of ``env_params``; the key
    ``n`` sets the sample size of each replication.
    """

    env: str = "benchmark"
    env_params: dict = field(default_factory=dict)
    grid: tuple = ({},)
    R: int = 20
    estimators: tuple = ("direct", "srw", "asrw", "asrw_oracle")
    K: int = 5
    seed: int = 0
    truth: TruthSpec = TruthSpec()
    nuisance: NuisanceConfig = NuisanceConfig(q_net=DESK_TRAIN, h_net=DESK_TRAIN)
    workers: int = 1
    outdir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(dict(g) for g in self.grid))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.R < 1:
            raise ValueError("R must be at least 1")
        if not self.estimators:
            raise ValueError("estimator list is empty")
        bad = [e for e in self.estimators if e not in ESTIMATOR_NAMES]
        if bad:
            raise ValueError(f"unknown estimators {bad}; choose from {ESTIMATOR_NAMES}")
        if not self.grid:
            raise ValueError("grid is empty")
        if self.K < 2:
            raise ValueError("K must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        d = dict(d)
        kw = {}
        for key in ("env", "env_params", "R", "estimators", "K", "seed", "workers", "outdir"):
            if key in d:
                kw[key] = d.pop(key)
        if "grid" in d:
            kw["grid"] = tuple(d.pop("grid"))
        if "truth" in d:
            kw["truth"] = TruthSpec(**d.pop("truth"))
        nuis = dict(d.pop("nuisance", {}))
        q = d.pop("q_net", None)
        h = d.pop("h_net", None)
        kw["nuisance"] = NuisanceConfig(
            q_net=replace(DESK_TRAIN, **(q or {})),
            h_net=replace(DESK_TRAIN, **(h or {})),
            **nuis,
        )
        if d:
            raise ValueError(f"unknown bench config keys: {sorted(d)}")
        return cls(**kw)


@dataclass(frozen=True)
class MCSummary:
    env: str
    n: int
    p: int
    T: int
    estimator: str
    bias: float
    rmse: float
    coverage: float
    mean_se: float
    theta_true: float
    R: int
    failed: int = 0

    @property
    def incomplete(self) -> bool:
        return self.failed > 0

    def csv_row(self) -> list[str]:
        return [self.env, str(self.n), str(self.p), str(self.T), self.estimator,
                repr(self.bias), repr(self.rmse), repr(self.coverage), repr(self.theta_true), str(self.R)]


def summarize(estimates, ses, theta_true: float) -> dict:
    """Bias, RMSE, Wald coverage and mean se of replicated estimates."""
    est = np.asarray(estimates, dtype=np.float64)
    se = np.asarray(ses, dtype=np.float64)
    if est.shape != se.shape:
        raise ValueError("estimates and standard errors differ in length")
    if est.ndim != 1 or est.shape[0] < 1:
        raise ValueError("need at least one replication")
    err = est - theta_true
    half = 1.96 * se
    covered = (est - half <= theta_true) & (theta_true <= est + half)
    return {
        "bias": float(err.mean()),
        "rmse": float(np.sqrt(np.mean(err ** 2))),
        "coverage": float(covered.mean()),
        "mean_se": float(se.mean()),
    }


# ---------------------------------------------------------------- replications

def _split(name: str) -> tuple[str, str]:
    base, _, mode = name.partition("_")
    return base, (mode or "learned")


def _cell_env(cfg: BenchConfig, cell: dict) -> tuple[Environment, int]:
    params = {**cfg.env_params, **cell}
    if cfg.env == "tiny":
        # the tiny MDP spec carries no sample size
        n = params.pop("n", 5000)
        return make_env(cfg.env, params), int(n)
    env = make_env(cfg.env, params)
    return env, int(env.cfg.n)


def _tiny_nuisances(env: TinyEnv, folds) -> NuisanceSet:
    q, h = tiny_exact_evaluators(env.cfg)
    return NuisanceSet.from_stage_functions(folds, env.schema, env.direction, q=q, h=h,
                                            policies=[env.policy(t) for t in (1, 2)], oracle_score=True)


def run_replication(cfg: BenchConfig, cell_index: int, r: int) -> dict[str, tuple[float, float]]:
    """One replication of one grid cell: {estimator: (theta_hat, se)}."""
    env, n = _cell_env(cfg, cfg.grid[cell_index])
    seed_r = derive_seed(cfg.seed, cell_index, r)
    ds = env.simulate(n, 0.0, seed=seed_r)
    folds = make_folds(n, cfg.K, derive_seed(seed_r, 1))
    wanted = [_split(e) for e in cfg.estimators]
    if isinstance(env, TinyEnv):
        nuis = _tiny_nuisances(env, folds)
        sets = {"learned": nuis, "oracle": nuis}
    else:
        modes = tuple(sorted({m for _, m in wanted}))
        sets = fit_nuisances(ds, env, folds, cfg.nuisance, scores=modes, seed=derive_seed(seed_r, 2))
    out = {}
    for mode in sorted({m for _, m in wanted}):
        methods = tuple(b for b, m in wanted if m == mode)
        for base, rep in estimate_all(ds, sets[mode], methods).items():
            name = base if mode == "learned" else f"{base}_{mode}"
            out[name] = (rep.theta_hat, rep.se)
    return out


def _safe_replication(args):
    cfg, cell_index, r = args
    try:
        return cell_index, r, run_replication(cfg, cell_index, r), None
    except Exception as exc:  # recorded, excluded, counted
        return cell_index, r, None, f"{type(exc).__name__}: {exc}"


def _limit_blas_threads():
    from threadpoolctl import threadpool_limits
    threadpool_limits(1)


def _workers(cfg: BenchConfig) -> int:
    env = os.environ.get("MPE_LAB_WORKERS")
    return max(1, int(env)) if env else max(1, cfg.workers)


def cell_truth(cfg: BenchConfig, cell_index: int) -> TruthResult:
    env, _ = _cell_env(cfg, cfg.grid[cell_index])
    if isinstance(env, TinyEnv):
        return TruthResult(exact_theta_tiny(env.cfg), 0.0, 0.0, 0)
    return crn_truth(env, replace(cfg.truth, seed=derive_seed(cfg.truth.seed, 7, cell_index)))


def run_benchmark(cfg: BenchConfig, *, order=None) -> list[MCSummary]:
    """All grid cells x replications, aggregated per (cell, estimator).

    ``order`` optionally permutes the execution order of the (cell, r) jobs;
    aggregation is keyed by replication index so results do not depend on it.
    """
    jobs = [(cfg, c, r) for c in range(len(cfg.grid)) for r in range(cfg.R)]
    if order is not None:
        jobs = [jobs[i] for i in order]
    workers = _workers(cfg)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_limit_blas_threads) as pool:
            results = list(pool.map(_safe_replication, jobs))
    else:
        results = []
        for i, job in enumerate(jobs, 1):
            log.info("replication %d/%d (cell %d, r %d)", i, len(jobs), job[1], job[2])
            results.append(_safe_replication(job))

    by_cell: dict[int, dict[int, dict]] = {c: {} for c in range(len(cfg.grid))}
    failures = {c: 0 for c in range(len(cfg.grid))}
    for c, r, res, err in results:
        if err is not None:
            failures[c] += 1
            log.warning("cell %d replication %d failed: %s", c, r, err)
        else:
            by_cell[c][r] = res

    out = []
    for c in range(len(cfg.grid)):
        if failures[c]:
            log.warning("cell %d: %d of %d replications failed and were excluded", c, failures[c], cfg.R)
        env, n = _cell_env(cfg, cfg.grid[c])
        truth = cell_truth(cfg, c)
        log.info("cell %d: theta_true %.6g (mc se %.2g), %d replications", c, truth.theta, truth.se, len(by_cell[c]))
        reps = [by_cell[c][r] for r in sorted(by_cell[c])]
        for name in cfg.estimators:
            if not reps:
                s = {"bias": math.nan, "rmse": math.nan, "coverage": math.nan, "mean_se": math.nan}
            else:
                s = summarize([x[name][0] for x in reps], [x[name][1] for x in reps], truth.theta)
            out.append(MCSummary(env.name, n, env.p, env.T, name, theta_true=truth.theta,
                                 R=len(reps), failed=failures[c], **s))
    return out


# ---------------------------------------------------------------- reports

def write_summary_csv(summaries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in summaries:
            w.writerow(s.csv_row())


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ints = {"n", "p", "T", "R"}
    floats = {"bias", "rmse", "coverage", "theta_true"}
    return [{k: int(v) if k in ints else float(v) if k in floats else v for k, v in row.items()} for row in rows]


def scatter_points(summaries) -> list[tuple[str, float, float]]:
    """(estimator, its RMSE, ASRW RMSE in the same cell) for every row whose cell has an ASRW row."""
    asrw = {(s.env, s.n, s.p, s.T): s.rmse for s in summaries if s.estimator == "asrw"}
    return [(s.estimator, s.rmse, asrw[(s.env, s.n, s.p, s.T)]) for s in summaries
            if (s.env, s.n, s.p, s.T) in asrw]


def write_scatter_svg(summaries, path) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    points = scatter_points(summaries)
    with matplotlib.rc_context({"svg.hashsalt": "mpe-lab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        finite = [v for _, x, y in points for v in (x, y) if math.isfinite(v)]
        top = 1.05 * max(finite) if finite else 1.0
        ax.plot([0, top], [0, top], color="0.6", lw=1, ls="--")
        for name in sorted({p[0] for p in points}):
            xs = [x for e, x, _ in points if e == name]
            ys = [y for e, _, y in points if e == name]
            ax.scatter(xs, ys, s=22, label=name)
        ax.set_xlim(0, top)
        ax.set_ylim(0, top)
        ax.set_xlabel("comparator RMSE")
        ax.set_ylabel("ASRW RMSE")
        if points:
            ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return len(points)


def emit_report(summaries, outdir) -> dict:
    """summary.csv, summary.json (adds mean se and failure counts) and rmse_scatter.svg."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = list(summaries)
    write_summary_csv(summaries, out / "summary.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump([asdict(s) for s in summaries], fh, indent=1)
        fh.write("\n")
    npts = write_scatter_svg(summaries, out / "rmse_scatter.svg")
    return {"csv": out / "summary.csv", "json": out / "summary.json", "svg": out / "rmse_scatter.svg",
            "points": npts}
