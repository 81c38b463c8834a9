"""Perturbation directions and closed-form direction scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import log_ndtr, ndtr

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def norm_pdf(z):
    return np.exp(-0.5 * np.square(z) - _LOG_SQRT_2PI)


def norm_cdf(z):
    return ndtr(z)


@dataclass(frozen=True)
class GaussianPolicySpec:
    """A ~ N(mean(s), variance), optionally clipped to ``bounds``."""

    mean: Callable[[np.ndarray], np.ndarray]
    variance: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must be ordered")

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True)
class BinaryPolicySpec:
    """P(A=1 | s) = propensity(s)."""

    propensity: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LocationShift:
    name = "location_shift"


@dataclass(frozen=True)
class OddsTilt:
    name = "odds_tilt"


@dataclass(frozen=True)
class GenericScore:
    """User-supplied H(s, a) = pi'(a|s) / pi(a|s); must be finite on the support."""

    score: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name = "generic"


DirectionKind = Union[LocationShift, OddsTilt, GenericScore]


def direction_from_name(name: str) -> DirectionKind:
    if name == "location_shift":
        return LocationShift()
    if name == "odds_tilt":
        return OddsTilt()
    raise ValueError(f"unknown direction {name!r} (expected 'location_shift' or 'odds_tilt')")


def gaussian_score(mean, variance, a):
    """(a - m) / v, the location-shift score of an unclipped Gaussian policy."""
    return (np.asarray(a, dtype=np.float64) - mean) / variance


def clipped_gaussian_score(mean, sd, lo, hi, a):
    """Location-shift score of clip(N(mean, sd^2), [lo, hi]).

    Atoms are detected by exact equality with the bounds: clipping writes the
    bound value bit-exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), a.shape)
    if np.any(a < lo) or np.any(a > hi):
        raise ValueError(f"action outside [{lo}, {hi}]")
    zl = (lo - mean) / sd
    zu = (hi - mean) / sd
    out = (a - mean) / (sd * sd)
    at_lo = a == lo
    at_hi = a == hi
    # phi/Phi and phi/(1-Phi) via log_ndtr stay finite far into the tails
    out = np.where(at_lo, -np.exp(-0.5 * zl * zl - _LOG_SQRT_2PI - log_ndtr(zl)) / sd, out)
    out = np.where(at_hi, np.exp(-0.5 * zu * zu - _LOG_SQRT_2PI - log_ndtr(-zu)) / sd, out)
    return out if out.ndim else float(out)


def odds_tilt_direction(pi1):
    """(pi'(1), pi'(0)) for logit pi_eps(1) = logit pi(1) + eps."""
    pi1 = np.asarray(pi1, dtype=np.float64)
    if np.any(pi1 <= 0.0) or np.any(pi1 >= 1.0):
        raise ValueError("propensity must lie strictly inside (0, 1)")
    d = pi1 * (1.0 - pi1)
    if d.ndim == 0:
        return float(d), float(-d)
    return d, -d


def odds_tilt_score(pi1, a):
    """H(s, 1) = 1 - pi1, H(s, 0) = -pi1, i.e. a - pi1."""
    pi1 = np.asarray(pi1, dtype=np.float64)
    if np.any(pi1 <= 0.0) or np.any(pi1 >= 1.0):
        raise ValueError("propensity must lie strictly inside (0, 1)")
    return np.asarray(a, dtype=np.float64) - pi1


def direction_score(kind: DirectionKind, policy, s, a):
    """Evaluate H_t(s, a) for the given direction and baseline policy."""
    s = np.asarray(s, dtype=np.float64)
    if isinstance(kind, GenericScore):
        return np.asarray(kind.score(s, a), dtype=np.float64)
    if isinstance(kind, LocationShift) and isinstance(policy, GaussianPolicySpec):
        m = policy.mean(s)
        if policy.bounds is None:
            return gaussian_score(m, policy.variance, a)
        return clipped_gaussian_score(m, policy.sd, policy.bounds[0], policy.bounds[1], a)
    if isinstance(kind, OddsTilt) and isinstance(policy, BinaryPolicySpec):
        a = np.asarray(a, dtype=np.float64)
        if np.any((a != 0.0) & (a != 1.0)):
            raise ValueError("odds-tilt direction needs binary actions")
        return odds_tilt_score(policy.propensity(s), a)
    raise TypeError(f"unsupported combination {type(kind).__name__} / {type(policy).__name__}")
