from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import _kernels_py as _ref
from . import get_kernels

log = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings.

    ``delta_riesz`` is the finite-difference step in action units.
    ``val_frac`` holds out that share of the rows and keeps the epoch with the
    lowest held-out loss (0 disables early stopping).
    """

    hidden: tuple = (64, 64)
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    delta_riesz: float = 0.05
    backend: str | None = None
    val_frac: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ValueError("epochs must be >= 0, batch_size >= 1 and lr > 0")
        if not self.delta_riesz > 0:
            raise ValueError("delta_riesz must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 <= self.val_frac < 1:
            raise ValueError("val_frac must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class Mlp:
    """tanh network with input standardization and an affine output map.

    predict(x) = out_shift + out_scale * g((x - in_shift) / in_scale)
    """

    sizes: tuple
    params: np.ndarray
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: float = 0.0
    out_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.sizes[-1] != 1:
            raise ValueError("output dimension must be 1")
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (_ref.param_count(self.sizes),):
            raise ValueError("parameter vector does not match layer sizes")
        if not np.isfinite(params).all():
            raise ValueError("non-finite parameters")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)
        for name in ("in_shift", "in_scale"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    def layers(self):
        return _ref.unpack(self.params, self.sizes)

    def raw(self, z: np.ndarray) -> np.ndarray:
        return _ref.forward(self.params, self.sizes, z)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        if x2.shape[1] != self.input_dim:
            raise ValueError(f"expected input dimension {self.input_dim}, got {x2.shape[1]}")
        out = self.out_shift + self.out_scale * self.raw((x2 - self.in_shift) / self.in_scale)
        return float(out[0]) if single else out

    __call__ = predict

    def folded(self) -> "Mlp":
        """Equivalent net with standardization absorbed into the first and last layers."""
        p = np.array(self.params)
        layers = _ref.unpack(p, self.sizes)
        W0, b0 = layers[0]
        b0 -= (self.in_shift / self.in_scale) @ W0
        W0 /= self.in_scale[:, None]
        WL, bL = layers[-1]
        WL *= self.out_scale
        bL *= self.out_scale
        bL += self.out_shift
        d = self.input_dim
        return Mlp(self.sizes, p, np.zeros(d), np.ones(d))

    def to_json(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "params": self.params.tolist(),
            "in_shift": self.in_shift.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_shift": self.out_shift,
            "out_scale": self.out_scale,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Mlp":
        return cls(tuple(d["sizes"]), np.asarray(d["params"]), np.asarray(d["in_shift"]),
                   np.asarray(d["in_scale"]), float(d["out_shift"]), float(d["out_scale"]))


def init_mlp(input_dim: int, hidden=(64, 64), seed: int = 0) -> Mlp:
    """Hidden weights uniform on +-1/sqrt(fan_in); zero biases and output layer.

    A zero output layer makes the untrained net the constant out_shift (the
    target mean after standardization), so fits start from the best constant.
    """
    sizes = (int(input_dim), *[int(h) for h in hidden], 1)
    rng = np.random.default_rng(seed)
    chunks = []
    for i in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[i])
        w = rng.uniform(-bound, bound, size=sizes[i] * sizes[i + 1])
        chunks.append(w if i < len(sizes) - 2 else np.zeros_like(w))
        chunks.append(np.zeros(sizes[i + 1]))
    return Mlp(sizes, np.concatenate(chunks), np.zeros(input_dim), np.ones(input_dim))


def forward(net: Mlp, x) -> np.ndarray | float:
    return net.predict(x)


def _standardizer(x: np.ndarray):
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    return shift, scale


def _run_sgd(net: Mlp, z: np.ndarray, y, cfg: TrainConfig, mode: int, action_index: int = 0,
             delta: float = 0.0) -> np.ndarray:
    """Momentum SGD; with ``cfg.val_frac > 0`` returns the parameters of the best held-out epoch."""
    kern = get_kernels(cfg.backend)
    params = np.array(net.params)
    velocity = np.zeros_like(params)
    rng = np.random.default_rng(cfg.seed)
    z = np.ascontiguousarray(z, dtype=np.float64)
    sizes = np.asarray(net.sizes, dtype=np.int64)
    n_val = int(round(cfg.val_frac * z.shape[0]))
    if n_val > 0 and z.shape[0] - n_val >= 1:
        split = rng.permutation(z.shape[0])
        val, fit = split[:n_val], split[n_val:]
        z_val = np.ascontiguousarray(z[val])
        y_val = None if y is None else np.ascontiguousarray(y[val])
        z = np.ascontiguousarray(z[fit])
        y = None if y is None else np.ascontiguousarray(y[fit])
    else:
        z_val = None
    best, best_loss = params.copy(), np.inf
    for epoch in range(cfg.epochs):
        order = rng.permutation(z.shape[0])
        # divergence is detected below; silence the overflow chatter that precedes it
        with np.errstate(over="ignore", invalid="ignore"):
            loss = kern.sgd_epoch(params, velocity, sizes, z, y, order, cfg.batch_size, cfg.lr,
                                  cfg.momentum, mode, action_index, delta)
        if not np.isfinite(loss) or not np.isfinite(params).all():
            raise TrainingError(f"non-finite loss {loss} at epoch {epoch + 1} (lr={cfg.lr})")
        if z_val is not None:
            v = _ref.loss_grad(params, sizes, z_val, y_val, mode, action_index, delta)[0]
            if v < best_loss:
                best, best_loss = params.copy(), v
    return best if z_val is not None else params


def train_regression(net: Mlp, inputs, targets, cfg: TrainConfig) -> Mlp:
    """Fit by mean squared error; the returned net never has higher training MSE than ``net``."""
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("inputs and targets differ in length")
    if x.shape[0] < 1:
        raise ValueError("empty training set")
    in_shift, in_scale = _standardizer(x)
    y_shift = float(y.mean())
    y_scale = float(y.std()) if y.std() > 1e-12 else 1.0
    start = replace(net, in_shift=in_shift, in_scale=in_scale, out_shift=y_shift, out_scale=y_scale)
    if cfg.epochs == 0:
        return start
    z = (x - in_shift) / in_scale
    params = _run_sgd(start, z, (y - y_shift) / y_scale, cfg, _ref.MSE)
    trained = replace(start, params=params)
    before = np.mean((start.predict(x) - y) ** 2)
    after = np.mean((trained.predict(x) - y) ** 2)
    if after > before:
        log.warning("training raised the MSE (%.4g -> %.4g); keeping the initial fit", before, after)
        return start
    return trained


def riesz_objective(h: Callable, inputs, action_index: int, delta: float) -> float:
    """mean(h^2) - 2 mean(central-difference d h / d a) on ``inputs``."""
    x = np.asarray(inputs, dtype=np.float64)
    hv = h(x)
    return float(np.mean(hv ** 2) - 2.0 * np.mean(fd_partial_action(h, x, action_index, delta)))


def train_riesz(net: Mlp, inputs, action_index: int, cfg: TrainConfig) -> Mlp:
    """Minimize mean(h^2) - 2 mean(d h / d a) with the derivative by central differences.

    Internally the net sees standardized inputs and is scaled by 1/sd(action),
    which leaves the objective unchanged up to a positive factor.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if not 0 <= action_index < x.shape[1]:
        raise IndexError(f"action index {action_index} outside 0..{x.shape[1] - 1}")
    in_shift, in_scale = _standardizer(x)
    sd_a = in_scale[action_index]
    start = replace(net, in_shift=in_shift, in_scale=in_scale, out_shift=0.0, out_scale=1.0 / sd_a)
    if cfg.epochs == 0:
        return start
    z = (x - in_shift) / in_scale
    params = _run_sgd(start, z, None, cfg, _ref.RIESZ, action_index, cfg.delta_riesz / sd_a)
    return replace(start, params=params)


def fd_partial_action(f: Callable, x, action_index: int, delta: float, bounds=None):
    """Central difference of ``f`` in one input coordinate.

    Where a central step would leave ``bounds`` (lo, hi) the one-sided
    difference with the same step, pointing inward, is used instead.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    a = x2[:, action_index]
    up = a + delta
    dn = a - delta
    if bounds is not None:
        lo, hi = bounds
        at_lo = dn < lo
        at_hi = up > hi
        dn = np.where(at_lo, a, dn)
        up = np.where(at_hi, a, up)
    xu = x2.copy()
    xd = x2.copy()
    xu[:, action_index] = up
    xd[:, action_index] = dn
    out = (np.asarray(f(xu)) - np.asarray(f(xd))) / (up - dn)
    return float(out[0]) if single else out
