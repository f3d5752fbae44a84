"""Numba-jitted kernel implementations (default hot path).

Same contracts as ``_numpy``: float32 C-contiguous inputs, float32 outputs.
Matrix products go through np.dot (BLAS); softmax, layer norm, and GELU are
fused loops that avoid the temporaries the vectorized path allocates.
Reductions accumulate in float64 so row sums stay within tolerance.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    return np.dot(a, b)


@njit(cache=True)
def softmax_rows(m):
    n, c = m.shape
    out = np.empty((n, c), dtype=np.float32)
    for i in range(n):
        mx = m[i, 0]
        for j in range(1, c):
            if m[i, j] > mx:
                mx = m[i, j]
        total = 0.0
        for j in range(c):
            e = np.exp(m[i, j] - mx)
            out[i, j] = e
            total += e
        for j in range(c):
            out[i, j] = out[i, j] / total
    return out


@njit(cache=True)
def gelu(m):
    n, c = m.shape
    out = np.empty((n, c), dtype=np.float32)
    for i in range(n):
        for j in range(c):
            x = m[i, j]
            inner = 0.7978845608028654 * (x + 0.044715 * x * x * x)
            out[i, j] = 0.5 * x * (1.0 + np.tanh(inner))
    return out


@njit(cache=True)
def layer_norm(m, gamma, beta, eps):
    n, c = m.shape
    out = np.empty((n, c), dtype=np.float32)
    for i in range(n):
        mean = 0.0
        for j in range(c):
            mean += m[i, j]
        mean /= c
        var = 0.0
        for j in range(c):
            d = m[i, j] - mean
            var += d * d
        var /= c
        inv = 1.0 / np.sqrt(var + eps)
        for j in range(c):
            out[i, j] = (m[i, j] - mean) * inv * gamma[j] + beta[j]
    return out


@njit(cache=True)
def attention(q, k, v, scale):
    kt = np.ascontiguousarray(k.T)
    scores = np.dot(q, kt)
    n, m = scores.shape
    for i in range(n):
        mx = scores[i, 0] * scale
        for j in range(1, m):
            s = scores[i, j] * scale
            if s > mx:
                mx = s
        total = 0.0
        for j in range(m):
            e = np.exp(scores[i, j] * scale - mx)
            scores[i, j] = e
            total += e
        for j in range(m):
            scores[i, j] = scores[i, j] / total
    return scores, np.dot(scores, v)
