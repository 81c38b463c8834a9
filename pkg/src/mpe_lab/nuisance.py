"""Cross-fitting folds and per-stage nuisance fits (q-regressions and direction scores)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .data import Dataset, dataset_features, discounted_returns
from .environments import Environment, TinyMDPSpec
from .nn import Mlp, TrainConfig, init_mlp, train_regression, train_riesz
from .paths import LocationShift, direction_score
from .rng import derive_seed

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class UnsupportedDirectionError(ValueError):
    pass


# ---------------------------------------------------------------- folds

@dataclass(frozen=True, eq=False)
class FoldAssignment:
    K: int
    fold: np.ndarray

    def test_idx(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold == k)

    def train_idx(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.fold != k)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.K)


def make_folds(n: int, K: int, seed: int = 0) -> FoldAssignment:
    """Uniformly random balanced partition of range(n) into K folds."""
    if K < 2:
        raise ValueError("need at least two folds")
    if n < K:
        raise ValueError(f"cannot split {n} units into {K} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % K
    fold.flags.writeable = False
    return FoldAssignment(K, fold)


# ---------------------------------------------------------------- evaluators

@dataclass(frozen=True)
class QModel:
    """q_t(s, a) from a net on [features, action], clipped to +-bound."""

    net: Mlp
    bound: float

    def __call__(self, feats, actions):
        z = np.column_stack([feats, actions])
        return np.clip(self.net(z), -self.bound, self.bound)


@dataclass(frozen=True)
class ConstantQ:
    value: float

    def __call__(self, feats, actions):
        return np.full(np.shape(actions), self.value)


@dataclass(frozen=True)
class RieszModel:
    """Learned direction score, clipped to +-cap (cap=None disables)."""

    net: Mlp
    cap: float | None = None

    def __call__(self, feats, actions):
        h = self.net(np.column_stack([feats, actions]))
        if self.cap is None:
            return h
        clipped = np.abs(h) > self.cap
        if clipped.any():
            log.debug("score cap %.3g active on %d of %d rows", self.cap, int(clipped.sum()), h.shape[0])
        return np.clip(h, -self.cap, self.cap)


@dataclass(frozen=True)
class OracleScore:
    direction: object
    policy: object

    def __call__(self, feats, actions):
        return direction_score(self.direction, self.policy, feats, actions)


def zero_evaluator(feats, actions):
    return np.zeros(np.shape(actions))


# ---------------------------------------------------------------- nuisance set

@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """Out-of-fold evaluators: q[k][t-1] and h[k][t-1] were fit without fold k.

    ``policies`` holds the baseline policy per stage (needed by the odds-tilt
    plug-in term); ``fd_step`` and ``bounds`` drive the action derivative of q.
    """

    folds: FoldAssignment
    schema: str
    direction: object
    q: tuple | None = None
    h: tuple | None = None
    policies: tuple = ()
    fd_step: float = 1e-3
    bounds: tuple | None = None
    oracle_score: bool = False

    @property
    def T(self) -> int:
        table = self.q if self.q is not None else self.h
        return len(table[0])

    def with_scores(self, h: tuple, oracle_score: bool) -> "NuisanceSet":
        return replace(self, h=h, oracle_score=oracle_score)

    def with_q(self, q: tuple) -> "NuisanceSet":
        return replace(self, q=q)

    @classmethod
    def from_stage_functions(cls, folds, schema, direction, q=None, h=None, policies=(), **kw):
        """Same evaluator for every fold (known or exact nuisances)."""
        qt = tuple(tuple(q) for _ in range(folds.K)) if q is not None else None
        ht = tuple(tuple(h) for _ in range(folds.K)) if h is not None else None
        return cls(folds, schema, direction, qt, ht, tuple(policies), **kw)


# ---------------------------------------------------------------- stage fits

def fit_q_stage(feats, actions, returns, cfg: TrainConfig, bound: float) -> Evaluator:
    """Regress Gamma_t on (features, action)."""
    z = np.column_stack([feats, actions])
    if z.shape[0] == 0:
        raise ValueError("empty training set")
    if np.all(z == z[0]):
        log.warning("degenerate q training set (identical inputs); using a constant fit")
        return ConstantQ(float(np.clip(np.mean(returns), -bound, bound)))
    net = init_mlp(z.shape[1], cfg.hidden, cfg.seed)
    return QModel(train_regression(net, z, returns, cfg), float(bound))


def fit_h_stage(feats, actions, direction, cfg: TrainConfig | None = None, *, oracle: bool = False,
                policy=None, cap: float | None = None) -> Evaluator:
    """Learned Riesz score (location shift only) or the closed-form oracle score."""
    if oracle:
        if policy is None:
            raise ValueError("oracle score needs the baseline policy")
        return OracleScore(direction, policy)
    if not isinstance(direction, LocationShift):
        raise UnsupportedDirectionError(
            f"learned scores need the integration-by-parts form; {type(direction).__name__} has none")
    z = np.column_stack([feats, actions])
    net = init_mlp(z.shape[1], cfg.hidden, cfg.seed)
    return RieszModel(train_riesz(net, z, z.shape[1] - 1, cfg), cap)


@dataclass(frozen=True)
class NuisanceConfig:
    q_net: TrainConfig = TrainConfig()
    h_net: TrainConfig = TrainConfig()
    h_cap_factor: float = 10.0        # learned scores clipped to +-factor/sigma_A
    fd_factor: float = 1e-3           # step for d q / d a, in units of the action scale
    riesz_factor: float = 0.05        # Riesz finite-difference step, in units of the action scale


def fit_nuisances(ds: Dataset, env: Environment, folds: FoldAssignment, cfg: NuisanceConfig = NuisanceConfig(),
                  *, scores=("learned",), fit_q: bool = True, seed: int = 0) -> dict[str, NuisanceSet]:
    """Cross-fit q_t and H_t for every fold and stage.

    Returns one NuisanceSet per requested score mode ('learned', 'oracle'), all
    sharing the same fitted q.
    """
    T = ds.T
    scale = env.action_scale
    gamma_ret = discounted_returns(ds.R, ds.gamma)
    bound = env.return_bound()
    h_cfg = replace(cfg.h_net, delta_riesz=cfg.riesz_factor * scale)
    direction = env.direction
    policies = tuple(env.policy(t) for t in range(1, T + 1))

    q_tab, h_tab = [], []
    for k in range(folds.K):
        tr = folds.train_idx(k)
        train = ds.subset(tr)
        q_row, h_row = [], []
        for t in range(1, T + 1):
            feats = dataset_features(train, t, env.schema)
            a = ds.A[tr, t - 1]
            if fit_q:
                qc = replace(cfg.q_net, seed=derive_seed(seed, k, t, 0))
                q_row.append(fit_q_stage(feats, a, gamma_ret[tr, t - 1], qc, bound))
            if "learned" in scores:
                hc = replace(h_cfg, seed=derive_seed(seed, k, t, 1))
                h_row.append(fit_h_stage(feats, a, direction, hc, cap=cfg.h_cap_factor / scale))
        q_tab.append(tuple(q_row))
        h_tab.append(tuple(h_row))

    base = NuisanceSet(folds, env.schema, direction, tuple(q_tab) if fit_q else None, None, policies,
                       fd_step=cfg.fd_factor * scale, bounds=env.bounds)
    out = {}
    for mode in scores:
        if mode == "learned":
            out[mode] = base.with_scores(tuple(h_tab), False)
        elif mode == "oracle":
            oracle = tuple(OracleScore(direction, pol) for pol in policies)
            out[mode] = base.with_scores(tuple(oracle for _ in range(folds.K)), True)
        else:
            raise ValueError(f"unknown score mode {mode!r}")
    if not scores:
        out["none"] = base
    return out


# ---------------------------------------------------------------- exact nuisances (tiny MDP)

def tiny_q_tables(spec: TinyMDPSpec) -> tuple[np.ndarray, np.ndarray]:
    """Exact q_1[x, a] and q_2[x, a] by backward induction."""
    pi2 = spec.propensity[1]
    q2 = np.array(spec.rewards[1])
    v2 = pi2 * q2[:, 1] + (1 - pi2) * q2[:, 0]
    q1 = np.array(spec.rewards[0]) + spec.gamma * (spec.transition * v2[1] + (1 - spec.transition) * v2[0])
    return q1, q2


def tiny_exact_evaluators(spec: TinyMDPSpec):
    """(q*_t, H*_t) evaluators on 'tiny' features, t = 1, 2."""
    q_tabs = tiny_q_tables(spec)

    def make_q(tab):
        return lambda f, a: tab[np.asarray(f[:, 0], dtype=np.int64), np.asarray(a, dtype=np.int64)]

    def make_h(row):
        return lambda f, a: np.asarray(a, dtype=np.float64) - row[np.asarray(f[:, 0], dtype=np.int64)]

    return [make_q(t) for t in q_tabs], [make_h(spec.propensity[t]) for t in range(2)]
