# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels; same contract as ``_kernels_py``.

Row-major matrices are handed to column-major dgemm as their transposes.
The hidden-layer tanh goes through numpy's SIMD ufunc (libm tanh per element
is several times slower); everything else stays in C.
"""
import numpy as np

from scipy.linalg.cython_blas cimport dgemm

_tanh = np.tanh

cdef enum:
    MAXL = 16

cdef int MSE = 0
cdef int RIESZ = 1


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                       double* A, int lda, double* B, int ldb, double beta,
                       double* C, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, A, &lda, B, &ldb, &beta, C, &ldc)


cdef struct Net:
    int L
    int sz[MAXL + 1]
    Py_ssize_t offW[MAXL]
    Py_ssize_t offB[MAXL]
    Py_ssize_t offA[MAXL + 1]


cdef Net _make_net(sizes, int max_rows) except *:
    cdef Net net
    cdef Py_ssize_t off = 0, aoff = 0
    cdef int l
    net.L = len(sizes) - 1
    if net.L > MAXL or net.L < 1:
        raise ValueError("unsupported number of layers")
    for l in range(net.L + 1):
        net.sz[l] = int(sizes[l])
    if net.sz[net.L] != 1:
        raise ValueError("output width must be 1")
    for l in range(net.L):
        net.offW[l] = off
        off += net.sz[l] * net.sz[l + 1]
        net.offB[l] = off
        off += net.sz[l + 1]
    for l in range(net.L + 1):
        net.offA[l] = aoff
        aoff += max_rows * net.sz[l]
    return net


cdef Py_ssize_t _act_size(Net* net, int max_rows) noexcept nogil:
    return net.offA[net.L] + max_rows * net.sz[net.L]


cdef int _max_width(Net* net) noexcept nogil:
    cdef int l, w = 1
    for l in range(net.L + 1):
        if net.sz[l] > w:
            w = net.sz[l]
    return w


cdef double _loss_grad(Net* net, double* P, double* acts, object acts_arr, int rows, int B,
                       const double* y, int mode, double delta,
                       double* G, double* d1, double* d2):
    """acts block 0 must already hold the (stacked) input rows."""
    cdef int l, i, j, k, nn, L = net.L
    cdef double* Z
    cdef double* Ain
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    cdef double loss = 0.0, r, s, inv
    cdef object view
    for l in range(L):
        k = net.sz[l]
        nn = net.sz[l + 1]
        Ain = acts + net.offA[l]
        Z = acts + net.offA[l + 1]
        for i in range(rows):
            for j in range(nn):
                Z[i * nn + j] = P[net.offB[l] + j]
        _gemm(b'N', b'N', nn, rows, k, 1.0, P + net.offW[l], nn, Ain, k, 1.0, Z, nn)
        if l < L - 1:
            view = acts_arr[net.offA[l + 1]:net.offA[l + 1] + rows * nn]
            _tanh(view, out=view)

    Z = acts + net.offA[L]
    if mode == MSE:
        for i in range(B):
            r = Z[i] - y[i]
            loss += r * r
            d1[i] = 2.0 * r / B
        loss /= B
    else:
        s = 0.0
        for i in range(B):
            loss += Z[i] * Z[i]
            s += Z[B + i] - Z[2 * B + i]
            d1[i] = 2.0 * Z[i] / B
        inv = 1.0 / (delta * B)
        for i in range(B):
            d1[B + i] = -inv
            d1[2 * B + i] = inv
        loss = loss / B - s * inv

    cur = d1
    nxt = d2
    for l in range(L - 1, -1, -1):
        k = net.sz[l]
        nn = net.sz[l + 1]
        Ain = acts + net.offA[l]
        _gemm(b'N', b'T', nn, k, rows, 1.0, cur, nn, Ain, k, 0.0, G + net.offW[l], nn)
        for j in range(nn):
            G[net.offB[l] + j] = 0.0
        for i in range(rows):
            for j in range(nn):
                G[net.offB[l] + j] += cur[i * nn + j]
        if l > 0:
            _gemm(b'T', b'N', k, rows, nn, 1.0, P + net.offW[l], nn, cur, nn, 0.0, nxt, k)
            for i in range(rows * k):
                nxt[i] *= 1.0 - Ain[i] * Ain[i]
            tmp = cur
            cur = nxt
            nxt = tmp
    return loss


cdef void _gather(const double[:, ::1] X, const Py_ssize_t* idx, int B, int mode,
                  int action_index, double delta, double* dst) noexcept nogil:
    cdef int i, j, d = X.shape[1]
    for i in range(B):
        for j in range(d):
            dst[i * d + j] = X[idx[i], j]
    if mode == RIESZ:
        for i in range(B):
            for j in range(d):
                dst[(B + i) * d + j] = X[idx[i], j]
                dst[(2 * B + i) * d + j] = X[idx[i], j]
            dst[(B + i) * d + action_index] += delta
            dst[(2 * B + i) * d + action_index] -= delta


def loss_grad(double[::1] params, sizes, const double[:, ::1] X, y, int mode,
              int action_index=0, double delta=0.0, grad=None):
    cdef int B = X.shape[0]
    cdef int rows = 3 * B if mode == RIESZ else B
    cdef Net net = _make_net(sizes, rows)
    cdef int w = _max_width(&net)
    acts_arr = np.empty(_act_size(&net, rows))
    d1_arr = np.empty(rows * w)
    d2_arr = np.empty(rows * w)
    if grad is None:
        grad = np.empty(params.shape[0])
    cdef double[::1] G = grad
    cdef double[::1] acts = acts_arr
    cdef double[::1] d1 = d1_arr
    cdef double[::1] d2 = d2_arr
    cdef const double[::1] yv = np.ascontiguousarray(y if y is not None else np.zeros(B), dtype=np.float64)
    idx_arr = np.arange(B, dtype=np.intp)
    cdef const Py_ssize_t[::1] idx = idx_arr
    cdef double loss
    _gather(X, &idx[0], B, mode, action_index, delta, &acts[0])
    loss = _loss_grad(&net, &params[0], &acts[0], acts_arr, rows, B, &yv[0], mode, delta, &G[0], &d1[0], &d2[0])
    return loss, grad


def sgd_epoch(double[::1] params, double[::1] velocity, sizes, const double[:, ::1] X, y,
              order, int batch, double lr, double momentum,
              int mode=0, int action_index=0, double delta=0.0):
    cdef Py_ssize_t n = len(order)
    cdef int mult = 3 if mode == RIESZ else 1
    cdef Net net = _make_net(sizes, mult * batch)
    cdef int w = _max_width(&net)
    cdef Py_ssize_t P = params.shape[0]
    acts_arr = np.empty(_act_size(&net, mult * batch))
    d1_arr = np.empty(mult * batch * w)
    d2_arr = np.empty(mult * batch * w)
    grad_arr = np.empty(P)
    ybuf_arr = np.empty(batch)
    cdef double[::1] acts = acts_arr
    cdef double[::1] d1 = d1_arr
    cdef double[::1] d2 = d2_arr
    cdef double[::1] G = grad_arr
    cdef double[::1] ybuf = ybuf_arr
    cdef const double[::1] yv = np.ascontiguousarray(y if y is not None else np.zeros(X.shape[0]), dtype=np.float64)
    cdef const Py_ssize_t[::1] idx = np.ascontiguousarray(order, dtype=np.intp)
    cdef Py_ssize_t start, q
    cdef int B, i
    cdef double total = 0.0, loss
    start = 0
    while start < n:
        B = batch if start + batch <= n else <int>(n - start)
        _gather(X, &idx[start], B, mode, action_index, delta, &acts[0])
        for i in range(B):
            ybuf[i] = yv[idx[start + i]]
        loss = _loss_grad(&net, &params[0], &acts[0], acts_arr, mult * B, B, &ybuf[0], mode, delta,
                          &G[0], &d1[0], &d2[0])
        for q in range(P):
            velocity[q] = momentum * velocity[q] - lr * G[q]
            params[q] += velocity[q]
        total += loss * B
        start += B
    return total / n
