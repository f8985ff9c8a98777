"""Compiled inner loops for SGD training (checked against ``training.bptt_grads``)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sig(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def sgd_epoch(W, b, w, c, z0, H, lr, flat, offsets, labels, order, batch, clip):
    """One epoch of mini-batch SGD on the mean end-of-string cross-entropy.

    Strings are stored concatenated in ``flat`` with ``offsets`` of length
    ``N + 1``.  Parameters are updated in place except the scalar readout
    bias, which is returned with the summed loss.  With ``clip > 0`` each
    mini-batch gradient is rescaled to a global L2 norm of at most ``clip``.
    """
    n = W.shape[0]
    m = W.shape[2]
    N = order.shape[0]
    maxT = 0
    for i in range(N):
        L = offsets[i + 1] - offsets[i]
        if L > maxT:
            maxT = L
    Z = np.empty((maxT + 1, n))
    gW = np.zeros_like(W)
    gb = np.zeros(n)
    gw = np.zeros(n)
    gz0 = np.zeros(n)
    dz = np.empty(n)
    dpre = np.empty(n)
    total = 0.0
    start = 0
    while start < N:
        stop = min(start + batch, N)
        B = stop - start
        gW[:] = 0.0
        gb[:] = 0.0
        gw[:] = 0.0
        gz0[:] = 0.0
        gc = 0.0
        for idx in range(start, stop):
            s = order[idx]
            o = offsets[s]
            T = offsets[s + 1] - o
            for i in range(n):
                Z[0, i] = z0[i]
            for t in range(T):
                k = flat[o + t]
                for i in range(n):
                    acc = b[i]
                    for j in range(n):
                        acc += W[i, j, k] * Z[t, j]
                    Z[t + 1, i] = _sig(H * acc)
            logit = c
            for i in range(n):
                logit += w[i] * Z[T, i]
            p = _sig(logit)
            y = labels[s]
            if y > 0.5:
                total += -math.log(max(p, 1e-12))
            else:
                total += -math.log(max(1.0 - p, 1e-12))
            dl = (p - y) / B
            gc += dl
            for i in range(n):
                gw[i] += dl * Z[T, i]
                dz[i] = dl * w[i]
            for t in range(T - 1, -1, -1):
                k = flat[o + t]
                for i in range(n):
                    a = Z[t + 1, i]
                    dpre[i] = dz[i] * H * a * (1.0 - a)
                    gb[i] += dpre[i]
                for j in range(n):
                    acc = 0.0
                    zj = Z[t, j]
                    for i in range(n):
                        gW[i, j, k] += dpre[i] * zj
                        acc += W[i, j, k] * dpre[i]
                    dz[j] = acc
            for i in range(n):
                gz0[i] += dz[i]
        step = lr
        if clip > 0.0:
            sq = gc * gc
            for i in range(n):
                sq += gb[i] * gb[i] + gw[i] * gw[i] + gz0[i] * gz0[i]
                for j in range(n):
                    for k in range(m):
                        sq += gW[i, j, k] * gW[i, j, k]
            norm = math.sqrt(sq)
            if norm > clip:
                step = lr * clip / norm
        for i in range(n):
            for j in range(n):
                for k in range(m):
                    W[i, j, k] -= step * gW[i, j, k]
            b[i] -= step * gb[i]
            w[i] -= step * gw[i]
            z0[i] -= step * gz0[i]
        c -= step * gc
        start = stop
    return c, total
