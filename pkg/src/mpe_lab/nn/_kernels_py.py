"""Pure-numpy training kernels (fallback for the compiled ``_kernels`` module).

Parameters live in one flat float64 vector, layer by layer: W_l of shape
(s_{l-1}, s_l) in row-major order, then b_l.  Hidden layers use tanh, the
output layer is linear with width 1.

Losses, on a batch of B rows:
  MSE   mean((g(x) - y)^2)
  RIESZ mean(g(x)^2) - 2 mean((g(x + d e_a) - g(x - d e_a)) / (2 d))
"""
from __future__ import annotations

import numpy as np

MSE = 0
RIESZ = 1


def param_count(sizes) -> int:
    return int(sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1)))


def unpack(params: np.ndarray, sizes):
    out, off = [], 0
    for i in range(len(sizes) - 1):
        m, k = sizes[i], sizes[i + 1]
        W = params[off:off + m * k].reshape(m, k)
        off += m * k
        b = params[off:off + k]
        off += k
        out.append((W, b))
    return out


def forward(params: np.ndarray, sizes, X: np.ndarray) -> np.ndarray:
    a = X
    layers = unpack(params, sizes)
    for i, (W, b) in enumerate(layers):
        a = a @ W + b
        if i < len(layers) - 1:
            a = np.tanh(a)
    return a[:, 0]


def _stack(X, mode, action_index, delta):
    if mode == MSE:
        return X
    up = X.copy()
    dn = X.copy()
    up[:, action_index] += delta
    dn[:, action_index] -= delta
    return np.concatenate([X, up, dn])


def loss_grad(params, sizes, X, y, mode, action_index=0, delta=0.0, grad=None):
    """Loss on (X, y) and its gradient w.r.t. ``params`` (written into ``grad``)."""
    B = X.shape[0]
    layers = unpack(params, sizes)
    acts = [_stack(X, mode, action_index, delta)]
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W + b
        acts.append(np.tanh(z) if i < len(layers) - 1 else z)
    out = acts[-1][:, 0]
    if mode == MSE:
        r = out - y
        loss = float(np.dot(r, r) / B)
        dout = 2.0 * r / B
    else:
        g0, gp, gm = out[:B], out[B:2 * B], out[2 * B:]
        loss = float(np.dot(g0, g0) / B - np.sum(gp - gm) / (delta * B))
        dout = np.concatenate([2.0 * g0 / B, np.full(B, -1.0 / (delta * B)), np.full(B, 1.0 / (delta * B))])

    if grad is None:
        grad = np.empty_like(params)
    gl = unpack(grad, sizes)
    d = dout[:, None]
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        gW, gb = gl[i]
        gW[...] = acts[i].T @ d
        gb[...] = d.sum(axis=0)
        if i > 0:
            d = (d @ W.T) * (1.0 - acts[i] ** 2)
    return loss, grad


def sgd_epoch(params, velocity, sizes, X, y, order, batch, lr, momentum,
              mode=MSE, action_index=0, delta=0.0):
    """One pass over ``order`` in mini-batches with heavy-ball momentum; returns mean loss."""
    n = order.shape[0]
    grad = np.empty_like(params)
    total = 0.0
    for start in range(0, n, batch):
        idx = order[start:start + batch]
        loss, _ = loss_grad(params, sizes, X[idx], y[idx] if y is not None else None,
                            mode, action_index, delta, grad)
        velocity *= momentum
        velocity -= lr * grad
        params += velocity
        total += loss * idx.shape[0]
    return total / n
