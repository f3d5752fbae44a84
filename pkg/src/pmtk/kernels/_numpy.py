"""Pure-numpy kernel implementations.

Fallback path used when the jitted backend is unavailable or disabled via
PMTK_BACKEND=numpy. Inputs are pre-validated float32 C-contiguous arrays;
validation lives in the dispatching wrappers.
"""

import numpy as np

# sqrt(2/pi), for the tanh-form GELU
_GELU_C = np.float32(0.7978845608028654)
_GELU_A = np.float32(0.044715)


def matmul(a, b):
    return a @ b


def softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    # float64 row sums keep |row sum - 1| well under the 1e-5 contract
    return (e / e.sum(axis=1, dtype=np.float64, keepdims=True)).astype(np.float32)


def gelu(m):
    inner = _GELU_C * (m + _GELU_A * m * m * m)
    return np.float32(0.5) * m * (np.float32(1.0) + np.tanh(inner))


def layer_norm(m, gamma, beta, eps):
    mu = m.mean(axis=1, keepdims=True, dtype=np.float64)
    var = m.var(axis=1, keepdims=True, dtype=np.float64)
    normed = (m - mu) / np.sqrt(var + eps)
    return (normed * gamma + beta).astype(np.float32)


def attention(q, k, v, scale):
    scores = (q @ k.T) * scale
    a = softmax_rows(scores)
    return a, a @ v
