"""Ground-truth marginal policy effects.

Continuous environments: symmetric finite differences of J(eps) by Monte
Carlo under common random numbers.  Tiny MDP: three exact computations that
share nothing but the tables (path-sum derivative, q-contrast form, and the
score form E[H q]).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import welfare
from .environments import Environment, TinyMDPSpec
from .nuisance import tiny_q_tables
from .rng import derive_seed


@dataclass(frozen=True)
class TruthSpec:
    epsilon: float = 0.05
    M: int = 200_000
    seed: int = 0
    chunk: int = 50_000

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.M < 10_000:
            raise ValueError("M must be at least 10^4")
        if self.chunk < 1:
            raise ValueError("chunk must be positive")


class TruthResult(NamedTuple):
    theta: float
    se: float
    epsilon: float
    M: int

    def to_json(self) -> dict:
        return {"theta_true": self.theta, "mc_se": self.se, "epsilon": self.epsilon, "M": self.M}


def crn_differences(env: Environment, spec: TruthSpec, *, paired: bool = True) -> np.ndarray:
    """Per-unit (W(+eps) - W(-eps)) / (2 eps).

    With ``paired=False`` the -eps run uses an independent seed (for comparing
    variances only; the result is then not a per-unit quantity).
    """
    eps = spec.epsilon
    minus_seed = spec.seed if paired else derive_seed(spec.seed, 1)
    out = np.empty(spec.M)
    for start in range(0, spec.M, spec.chunk):
        m = min(spec.chunk, spec.M - start)
        w_plus = welfare(env.simulate(m, +eps, spec.seed, unit_offset=start))
        w_minus = welfare(env.simulate(m, -eps, minus_seed, unit_offset=start))
        out[start:start + m] = (w_plus - w_minus) / (2.0 * eps)
    return out


def crn_truth(env: Environment, spec: TruthSpec = TruthSpec()) -> TruthResult:
    d = crn_differences(env, spec)
    return TruthResult(float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.shape[0])), spec.epsilon, spec.M)


# ---------------------------------------------------------------- tiny MDP

def _paths(spec: TinyMDPSpec):
    """Yield (prob, x1, a1, x2, a2) for all 16 paths under the baseline."""
    pi = spec.propensity
    for x1, a1, x2, a2 in itertools.product((0, 1), repeat=4):
        pr = spec.p_x1 if x1 else 1 - spec.p_x1
        pr *= pi[0, x1] if a1 else 1 - pi[0, x1]
        pr *= spec.transition[x1, a1] if x2 else 1 - spec.transition[x1, a1]
        pr *= pi[1, x2] if a2 else 1 - pi[1, x2]
        yield pr, x1, a1, x2, a2


def exact_theta_tiny(spec: TinyMDPSpec) -> float:
    """dJ/deps at 0 by differentiating each path probability.

    Under the odds tilt d/deps log pi_eps(a | x) = a - pi(1 | x), so the
    derivative of a path probability is prob * sum_t (a_t - pi_t(x_t)).
    """
    pi = spec.propensity
    total = 0.0
    for pr, x1, a1, x2, a2 in _paths(spec):
        dlog = (a1 - pi[0, x1]) + (a2 - pi[1, x2])
        ret = spec.rewards[0, x1, a1] + spec.gamma * spec.rewards[1, x2, a2]
        total += pr * dlog * ret
    return float(total)


def tiny_state_marginals(spec: TinyMDPSpec) -> tuple[np.ndarray, np.ndarray]:
    """P(X_1 = x) and P(X_2 = x) under the baseline."""
    m1 = np.array([1 - spec.p_x1, spec.p_x1])
    pi1 = spec.propensity[0]
    p_x2 = np.sum(m1 * (pi1 * spec.transition[:, 1] + (1 - pi1) * spec.transition[:, 0]))
    return m1, np.array([1 - p_x2, p_x2])


def gpgt_theta_tiny(spec: TinyMDPSpec) -> float:
    """sum_t gamma^(t-1) E[pi_t (1 - pi_t) (q_t(S_t, 1) - q_t(S_t, 0))] with exact q and marginals."""
    q = tiny_q_tables(spec)
    marg = tiny_state_marginals(spec)
    total = 0.0
    for t in range(2):
        pi = spec.propensity[t]
        total += spec.gamma ** t * np.sum(marg[t] * pi * (1 - pi) * (q[t][:, 1] - q[t][:, 0]))
    return float(total)


def score_form_theta_tiny(spec: TinyMDPSpec) -> float:
    """sum_t gamma^(t-1) E[H_t(S_t, A_t) q_t(S_t, A_t)], summed over (x_t, a_t) exactly."""
    q = tiny_q_tables(spec)
    marg = tiny_state_marginals(spec)
    total = 0.0
    for t in range(2):
        pi = spec.propensity[t]
        for x in (0, 1):
            for a in (0, 1):
                pa = pi[x] if a else 1 - pi[x]
                total += spec.gamma ** t * marg[t][x] * pa * (a - pi[x]) * q[t][x, a]
    return float(total)
