"""Direct, SRW and ASRW estimators with per-trajectory scores and Wald intervals."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, dataset_features, discounted_returns
from .nn import fd_partial_action
from .nuisance import NuisanceSet
from .paths import GenericScore, LocationShift, OddsTilt

METHODS = ("direct", "srw", "asrw")
Z95 = 1.96


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EstimateReport:
    method: str
    theta_hat: float
    psi: np.ndarray
    se: float
    ci_low: float
    ci_high: float
    n: int
    T: int
    gamma: float
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "theta_hat": self.theta_hat,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "n": self.n,
            "T": self.T,
            **self.meta,
        }

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def wald_ci(psi) -> tuple[float, float, float]:
    """(se, low, high) with se = sd(psi, ddof=1) / sqrt(n) and a 1.96 multiplier."""
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape[0] < 2:
        raise ValueError("need at least two scores for a standard error")
    m = float(psi.mean())
    se = float(psi.std(ddof=1) / np.sqrt(psi.shape[0]))
    return se, m - Z95 * se, m + Z95 * se


def plug_in_term(nuis: NuisanceSet, q, t: int, feats: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """One-sample estimate of int q(s, a) pi'_t(a | s) da at each (s, a)."""
    d = nuis.direction
    if isinstance(d, LocationShift):
        z = np.column_stack([feats, actions])
        g = fd_partial_action(lambda x: q(x[:, :-1], x[:, -1]), z, z.shape[1] - 1, nuis.fd_step, nuis.bounds)
        if nuis.bounds is not None:
            # a clipped action sitting on a bound does not move with the shift
            lo, hi = nuis.bounds
            g = np.where((actions > lo) & (actions < hi), g, 0.0)
        return g
    if isinstance(d, OddsTilt):
        pi1 = nuis.policies[t - 1].propensity(feats)
        ones = np.ones(actions.shape[0])
        return pi1 * (1.0 - pi1) * (q(feats, ones) - q(feats, 0.0 * ones))
    if isinstance(d, GenericScore):
        return q(feats, actions) * d.score(feats, actions)
    raise ConfigurationError(f"no plug-in term for direction {d!r}")


def stage_components(ds: Dataset, nuis: NuisanceSet, *, need_q: bool, need_h: bool):
    """Per (unit, stage) arrays of the plug-in term, q(S, A), H(S, A) and Gamma_t.

    Each unit is scored with the evaluators fit without its own fold.
    """
    if need_q and nuis.q is None:
        raise ConfigurationError("q-function nuisance missing")
    if need_h and nuis.h is None:
        raise ConfigurationError("score nuisance missing")
    if nuis.folds.fold.shape[0] != ds.n:
        raise ConfigurationError("fold assignment does not match the dataset")
    if nuis.T != ds.T:
        raise ConfigurationError(f"nuisances cover {nuis.T} stages, data has {ds.T}")
    n, T = ds.n, ds.T
    plug = np.zeros((n, T))
    qa = np.zeros((n, T))
    hv = np.zeros((n, T))
    for k in range(nuis.folds.K):
        idx = nuis.folds.test_idx(k)
        if idx.size == 0:
            continue
        sub = ds.subset(idx)
        for t in range(1, T + 1):
            f = dataset_features(sub, t, nuis.schema)
            a = sub.A[:, t - 1]
            if need_q:
                q = nuis.q[k][t - 1]
                plug[idx, t - 1] = plug_in_term(nuis, q, t, f, a)
                qa[idx, t - 1] = q(f, a)
            if need_h:
                hv[idx, t - 1] = nuis.h[k][t - 1](f, a)
    return plug, qa, hv, discounted_returns(ds.R, ds.gamma)


def _report(method, psi, ds, nuis, **meta) -> EstimateReport:
    se, lo, hi = wald_ci(psi)
    meta = {"score": "oracle" if nuis.oracle_score else "learned", "K": nuis.folds.K, **meta}
    return EstimateReport(method, float(psi.mean()), psi, se, lo, hi, ds.n, ds.T, ds.gamma, meta)


def _disc(ds):
    return ds.gamma ** np.arange(ds.T)


def estimate_direct(ds: Dataset, nuis: NuisanceSet) -> EstimateReport:
    plug, _, _, _ = stage_components(ds, nuis, need_q=True, need_h=False)
    return _report("direct", plug @ _disc(ds), ds, nuis)


def estimate_srw(ds: Dataset, nuis: NuisanceSet) -> EstimateReport:
    _, _, h, G = stage_components(ds, nuis, need_q=False, need_h=True)
    return _report("srw", (h * G) @ _disc(ds), ds, nuis)


def estimate_asrw(ds: Dataset, nuis: NuisanceSet) -> EstimateReport:
    plug, qa, h, G = stage_components(ds, nuis, need_q=True, need_h=True)
    return _report("asrw", (plug + h * (G - qa)) @ _disc(ds), ds, nuis)


def estimate_all(ds: Dataset, nuis: NuisanceSet, methods=METHODS) -> dict[str, EstimateReport]:
    """Several estimators from one pass over the nuisance evaluations."""
    need_q = any(m in ("direct", "asrw") for m in methods)
    need_h = any(m in ("srw", "asrw") for m in methods)
    plug, qa, h, G = stage_components(ds, nuis, need_q=need_q, need_h=need_h)
    disc = _disc(ds)
    psi = {
        "direct": lambda: plug @ disc,
        "srw": lambda: (h * G) @ disc,
        "asrw": lambda: (plug + h * (G - qa)) @ disc,
    }
    out = {}
    for m in methods:
        if m not in psi:
            raise ValueError(f"unknown method {m!r}")
        out[m] = _report(m, psi[m](), ds, nuis)
    return out


ESTIMATORS = {"direct": estimate_direct, "srw": estimate_srw, "asrw": estimate_asrw}
