"""Data-generating processes: latent-regime benchmark, dynamic pricing, tiny tabular MDP.

All simulators draw noise from :class:`~mpe_lab.rng.Streams`, keyed by
(unit, stage, purpose).  ``shift`` moves the policy mean (continuous
environments) or the policy logit (tiny MDP); the noise consumed is the same
for every value of ``shift``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import expit, logit

from .data import Dataset
from .paths import BinaryPolicySpec, GaussianPolicySpec, LocationShift, OddsTilt
from .rng import Streams


def _units(n: int, unit_offset: int) -> np.ndarray:
    return np.arange(unit_offset, unit_offset + n, dtype=np.int64)


# ====================================================================== benchmark

@dataclass(frozen=True)
class BenchmarkConfig:
    n: int = 5000
    p: int = 5
    T: int = 2
    gamma: float = 0.99
    sigma_a: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.n, self.p, self.T) < 1:
            raise ValueError("n, p and T must be >= 1")
        if not self.sigma_a > 0:
            raise ValueError("sigma_a must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


def loading_vector(p: int) -> np.ndarray:
    j = np.arange(1, p + 1, dtype=np.float64)
    return j ** -0.5 / np.sqrt(np.sum(1.0 / j))


def benchmark_policy_mean(xbar, a_prev):
    return 0.10 + 0.35 * xbar + 0.15 * a_prev


def simulate_benchmark(cfg: BenchmarkConfig, shift: float = 0.0, *, n: int | None = None,
                       seed: int | None = None, unit_offset: int = 0,
                       latent_salt: int = 0, return_latent: bool = False):
    """Simulate the partially observed latent-regime benchmark.

    ``latent_salt`` re-keys only the regime stream (debugging / unconfoundedness
    checks).  With ``return_latent`` the regime path U (n, T) comes back as a
    side channel; it is never part of the Dataset.
    """
    n = cfg.n if n is None else n
    st = Streams(cfg.seed if seed is None else seed, {"regime": latent_salt})
    units = _units(n, unit_offset)
    p, T = cfg.p, cfg.T
    ell = loading_vector(p)

    X = np.empty((n, T + 1, p))
    A = np.empty((n, T))
    R = np.empty((n, T))
    U = np.empty((n, T))

    u = np.where(st.uniform("regime", units, 1) < 0.5, 1.0, -1.0)
    X[:, 0] = 0.75 * u[:, None] * ell + 0.60 * st.normal_matrix("state", units, 1, p)
    a_prev = np.zeros(n)
    for t in range(1, T + 1):
        U[:, t - 1] = u
        xbar = X[:, t - 1].mean(axis=1)
        m = benchmark_policy_mean(xbar, a_prev)
        a = m + shift + cfg.sigma_a * st.normal("policy", units, t)
        r = 1.0 + xbar + 1.25 * a + 0.75 * u + 0.50 * a * u + st.normal("reward", units, t)
        A[:, t - 1] = a
        R[:, t - 1] = np.clip(r, -10.0, 10.0)
        X[:, t] = 0.65 * X[:, t - 1] + 0.20 * a[:, None] + 0.85 * u[:, None] * ell \
            + st.normal_matrix("state", units, t + 1, p)
        if t < T:
            u = np.where(st.uniform("regime", units, t + 1) < expit(u + 0.80 * xbar), 1.0, -1.0)
        a_prev = a
    ds = Dataset(X, A, R, cfg.gamma, units)
    return (ds, U) if return_latent else ds


# ====================================================================== pricing

@dataclass(frozen=True)
class PricingConfig:
    T: int = 8
    n: int = 5000
    gamma: float = 0.99
    p_min: float = 1.0
    p_max: float = 10.0
    sigma_price: float = 0.70
    sigma_w: float = 1.00
    alpha_min: float = 0.72
    alpha_max: float = 0.97
    c_alpha: float = 1.10
    r0: float = 5.20
    sigma_r0: float = 0.85
    rho_w: float = 0.60
    sigma_init: float = 0.35
    sigma_r: float = 0.12
    c: tuple = (2.90, 0.25, 0.18, 0.28, 0.18, 0.15, 0.18, -0.10)
    mu_r: float = 2.70
    s_r: float = 2.20
    margin: float = 0.55
    beta0: float = 2.00
    beta_p: float = -0.72
    beta_r: float = 0.78
    beta_gap2: float = 0.18
    beta_season: float = 0.20
    beta_nl: float = 0.14
    rho_u: float = 0.88
    sigma_u: float = 0.22
    lambda_u: float = 0.40
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))
        if len(self.c) != 8:
            raise ValueError("policy mean needs 8 coefficients c_0..c_7")
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be below p_max")
        if not self.alpha_min < self.alpha_max:
            raise ValueError("alpha_min must be below alpha_max")
        if not self.sigma_price > 0:
            raise ValueError("sigma_price must be positive")
        if not self.margin < (self.p_max - self.p_min) / 2:
            raise ValueError("margin must be below half the price range")
        if self.T < 1 or self.n < 1:
            raise ValueError("n and T must be >= 1")

    @property
    def p(self) -> int:
        return 6


def season(t, T):
    return np.sin(2 * np.pi * t / T), np.cos(2 * np.pi * t / T)


def pricing_policy_mean(X: np.ndarray, cfg: PricingConfig) -> np.ndarray:
    """Clipped pricing rule mu_t from the observed summary X_t (..., 6)."""
    X = np.asarray(X, dtype=np.float64)
    p_last, p_bar, r_last, r_bar, s, c_ = (X[..., k] for k in range(6))
    c = cfg.c
    f_price = c[0] + c[1] * p_last + c[2] * p_bar
    f_rev = c[3] * np.tanh((r_last - cfg.mu_r) / cfg.s_r) + c[4] * np.tanh((r_bar - cfg.mu_r) / cfg.s_r)
    f_gap = c[5] * np.tanh((p_last - p_bar) / 2.0)
    f_season = c[6] * s + c[7] * c_
    return np.clip(f_price + f_rev + f_gap + f_season, cfg.p_min + cfg.margin, cfg.p_max - cfg.margin)


def price_sensitivity(W, cfg: PricingConfig):
    return cfg.beta_p * np.exp(-0.22 * np.asarray(W, dtype=np.float64))


def reference_sensitivity(alpha, cfg: PricingConfig):
    abar = 0.5 * (cfg.alpha_min + cfg.alpha_max)
    return cfg.beta_r * (1.0 + 1.6 * (np.asarray(alpha, dtype=np.float64) - abar) / (cfg.alpha_max - cfg.alpha_min))


def demand_index(A, t, W, alpha, r_star, u, cfg: PricingConfig):
    """Taste + seasonal + direct price + reference components, in that order."""
    s, c_ = season(t, cfg.T)
    gap = r_star - A
    idx = cfg.beta0 + W + u
    idx = idx + cfg.beta_season * (0.9 * s - 0.5 * c_)
    idx = idx + price_sensitivity(W, cfg) * A
    idx = idx + reference_sensitivity(alpha, cfg) * gap - cfg.beta_gap2 * gap ** 2 + cfg.beta_nl * np.sin(-gap)
    return idx


def simulate_pricing(cfg: PricingConfig, shift: float = 0.0, *, n: int | None = None,
                     seed: int | None = None, unit_offset: int = 0, return_latent: bool = False):
    n = cfg.n if n is None else n
    st = Streams(cfg.seed if seed is None else seed)
    units = _units(n, unit_offset)
    T, lo, hi = cfg.T, cfg.p_min, cfg.p_max

    W = cfg.sigma_w * st.normal("willingness", units, 0)
    alpha = cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * expit(cfg.c_alpha * st.normal("alpha", units, 0))
    r_star = np.clip(cfg.r0 + cfg.sigma_r0 * st.normal("ref_init", units, 0) + cfg.rho_w * W
                     + cfg.sigma_init * st.normal("ref_init", units, 0, 1), lo, hi)
    u = 0.35 * W + 0.25 * st.normal("taste", units, 0)

    X = np.empty((n, T + 1, 6))
    A = np.empty((n, T))
    R = np.empty((n, T))
    RS = np.empty((n, T))
    p_last = np.full(n, cfg.r0)
    p_bar = np.full(n, cfg.r0)
    r_last = np.zeros(n)
    r_bar = np.zeros(n)
    for t in range(1, T + 2):
        s, c_ = season(t, T)
        X[:, t - 1] = np.column_stack([p_last, p_bar, r_last, r_bar, np.full(n, s), np.full(n, c_)])
        if t > T:
            break
        mu = pricing_policy_mean(X[:, t - 1], cfg)
        a = np.clip(mu + shift + cfg.sigma_price * st.normal("policy", units, t), lo, hi)
        b = (st.uniform("purchase", units, t) < expit(demand_index(a, t, W, alpha, r_star, u, cfg))).astype(np.float64)
        rev = a * b
        A[:, t - 1] = a
        R[:, t - 1] = rev
        RS[:, t - 1] = r_star
        r_star = np.clip(alpha * r_star + (1.0 - alpha) * a + cfg.sigma_r * st.normal("ref", units, t), lo, hi)
        u = cfg.rho_u * u + cfg.lambda_u * b + cfg.sigma_u * st.normal("taste", units, t)
        p_bar = (t * p_bar + a) / (t + 1)
        r_bar = (t * r_bar + rev) / (t + 1)
        p_last = a
        r_last = rev
    ds = Dataset(X, A, R, cfg.gamma, units)
    if return_latent:
        return ds, {"W": W, "alpha": alpha, "r_star": RS}
    return ds


# ====================================================================== tiny MDP

@dataclass(frozen=True, eq=False)
class TinyMDPSpec:
    """Two-stage binary MDP.

    propensity[t, x] = P(A_t = 1 | X_t = x); rewards[t, x, a];
    transition[x, a] = P(X_{t+1} = 1 | X_t = x, A_t = a).
    """

    p_x1: float = 0.5
    propensity: np.ndarray = field(default_factory=lambda: np.array([[0.3, 0.7], [0.3, 0.7]]))
    rewards: np.ndarray = field(default_factory=lambda: np.array(
        [[[0.0, 1.0], [1.0, 2.0]],       # r(1, x, a) = x + a
         [[0.0, 2.0], [-1.0, 1.0]]]))    # r(2, x, a) = 2a - x
    transition: np.ndarray = field(default_factory=lambda: np.array([[0.2, 0.7], [0.4, 0.9]]))
    gamma: float = 0.9

    T = 2

    def __post_init__(self):
        for name in ("propensity", "rewards", "transition"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.propensity.shape != (2, 2) or self.rewards.shape != (2, 2, 2) or self.transition.shape != (2, 2):
            raise ValueError("tiny MDP tables have the wrong shape")
        probs = np.concatenate([[self.p_x1], self.propensity.ravel(), self.transition.ravel()])
        if np.any(probs <= 0) or np.any(probs >= 1):
            raise ValueError("all probabilities must lie strictly inside (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "TinyMDPSpec":
        return cls(
            p_x1=rng.uniform(0.1, 0.9),
            propensity=rng.uniform(0.05, 0.95, size=(2, 2)),
            rewards=rng.normal(0.0, 1.0, size=(2, 2, 2)),
            transition=rng.uniform(0.05, 0.95, size=(2, 2)),
            gamma=rng.uniform(0.5, 1.0),
        )

    @classmethod
    def symmetric(cls) -> "TinyMDPSpec":
        """Propensities 1/2 and tables invariant under a <-> 1-a."""
        r = np.array([[[1.0, 1.0], [2.0, 2.0]], [[0.5, 0.5], [-1.0, -1.0]]])
        return cls(p_x1=0.4, propensity=np.full((2, 2), 0.5), rewards=r,
                   transition=np.array([[0.3, 0.3], [0.8, 0.8]]), gamma=0.9)

    def tilted_propensity(self, eps: float) -> np.ndarray:
        return expit(logit(self.propensity) + eps)


def simulate_tiny(spec: TinyMDPSpec, n: int, shift: float = 0.0, seed: int = 0, *,
                  unit_offset: int = 0) -> Dataset:
    st = Streams(seed)
    units = _units(n, unit_offset)
    pi = spec.tilted_propensity(shift)
    X = np.empty((n, 3, 1))
    A = np.empty((n, 2))
    R = np.empty((n, 2))
    x = (st.uniform("state", units, 1) < spec.p_x1).astype(np.int64)
    for t in range(2):
        X[:, t, 0] = x
        a = (st.uniform("policy", units, t + 1) < pi[t, x]).astype(np.int64)
        A[:, t] = a
        R[:, t] = spec.rewards[t, x, a]
        x = (st.uniform("state", units, t + 2) < spec.transition[x, a]).astype(np.int64)
    X[:, 2, 0] = x
    return Dataset(X, A, R, spec.gamma, units)


def enumerate_tiny_value(spec: TinyMDPSpec, eps: float = 0.0) -> float:
    """Exact J(eps) by summing over all 16 (x1, a1, x2, a2) paths."""
    pi = spec.tilted_propensity(eps)
    total = 0.0
    for x1, a1, x2, a2 in itertools.product((0, 1), repeat=4):
        pr = (spec.p_x1 if x1 else 1 - spec.p_x1)
        pr *= pi[0, x1] if a1 else 1 - pi[0, x1]
        pr *= spec.transition[x1, a1] if x2 else 1 - spec.transition[x1, a1]
        pr *= pi[1, x2] if a2 else 1 - pi[1, x2]
        total += pr * (spec.rewards[0, x1, a1] + spec.gamma * spec.rewards[1, x2, a2])
    return float(total)


# ====================================================================== environment adapters

class Environment:
    """What the nuisance, estimator and truth layers need to know about a DGP."""

    name: str
    schema: str
    direction = LocationShift()
    bounds: tuple[float, float] | None = None

    def simulate(self, n: int, shift: float = 0.0, seed: int = 0, unit_offset: int = 0) -> Dataset:
        raise NotImplementedError

    def policy(self, t: int):
        """Baseline policy at stage t as a function of stage features."""
        raise NotImplementedError

    @property
    def reward_bound(self) -> float:
        raise NotImplementedError

    @property
    def action_scale(self) -> float:
        raise NotImplementedError

    @property
    def T(self) -> int:
        return self.cfg.T

    @property
    def gamma(self) -> float:
        return self.cfg.gamma

    @property
    def p(self) -> int:
        return self.cfg.p

    def return_bound(self) -> float:
        return self.reward_bound * float(np.sum(self.gamma ** np.arange(self.T)))


class BenchmarkEnv(Environment):
    name = "benchmark"
    schema = "benchmark"

    def __init__(self, cfg: BenchmarkConfig):
        self.cfg = cfg

    def simulate(self, n, shift=0.0, seed=0, unit_offset=0):
        return simulate_benchmark(self.cfg, shift, n=n, seed=seed, unit_offset=unit_offset)

    def policy(self, t):
        p = self.cfg.p
        return GaussianPolicySpec(
            mean=lambda f: benchmark_policy_mean(f[:, :p].mean(axis=1), f[:, p]),
            variance=self.cfg.sigma_a ** 2,
        )

    @property
    def reward_bound(self):
        return 10.0

    @property
    def action_scale(self):
        return self.cfg.sigma_a


class PricingEnv(Environment):
    name = "pricing"
    schema = "pricing"

    def __init__(self, cfg: PricingConfig):
        self.cfg = cfg
        self.bounds = (cfg.p_min, cfg.p_max)

    def simulate(self, n, shift=0.0, seed=0, unit_offset=0):
        return simulate_pricing(self.cfg, shift, n=n, seed=seed, unit_offset=unit_offset)

    def policy(self, t):
        return GaussianPolicySpec(
            mean=lambda f: pricing_policy_mean(f, self.cfg),
            variance=self.cfg.sigma_price ** 2,
            bounds=self.bounds,
        )

    @property
    def reward_bound(self):
        return self.cfg.p_max

    @property
    def action_scale(self):
        return self.cfg.sigma_price


class TinyEnv(Environment):
    name = "tiny"
    schema = "tiny"
    direction = OddsTilt()

    def __init__(self, spec: TinyMDPSpec | None = None):
        self.cfg = spec if spec is not None else TinyMDPSpec()

    def simulate(self, n, shift=0.0, seed=0, unit_offset=0):
        return simulate_tiny(self.cfg, n, shift, seed, unit_offset=unit_offset)

    def policy(self, t):
        row = self.cfg.propensity[t - 1]
        return BinaryPolicySpec(propensity=lambda f: row[np.asarray(f[:, 0], dtype=np.int64)])

    @property
    def T(self):
        return 2

    @property
    def p(self):
        return 1

    @property
    def reward_bound(self):
        return float(np.abs(self.cfg.rewards).max())

    @property
    def action_scale(self):
        return 1.0


def config_from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def make_env(name: str, params: dict | None = None) -> Environment:
    params = dict(params or {})
    if name == "benchmark":
        return BenchmarkEnv(config_from_dict(BenchmarkConfig, params))
    if name == "pricing":
        return PricingEnv(config_from_dict(PricingConfig, params))
    if name == "tiny":
        return TinyEnv(config_from_dict(TinyMDPSpec, params))
    raise ValueError(f"unknown environment {name!r}")
