"""Dense transformer primitives: matmul, row softmax, attention, layer norm, FFN.

Two interchangeable backends compute the same contracts:

* ``numba`` (default) - jitted loops in :mod:`pmtk.kernels._numba`
* ``numpy`` - vectorized fallback in :mod:`pmtk.kernels._numpy`

Selection order: the ``PMTK_BACKEND`` environment variable (``numba`` or
``numpy``), else numba when importable, else numpy. :func:`use_backend`
switches at runtime (used by tests and the benchmark). All operations are
pure functions over immutable inputs and safe to call concurrently.

Everything is float32, row-major. Matrices carry tokens as rows.
"""

import logging
import math
import os

import numpy as np

from ..errors import ConfigError
from . import _numpy

logger = logging.getLogger("pmtk.kernels")

try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is an install-time dependency
    _numba = None

_IMPLS = {"numpy": _numpy}
if _numba is not None:
    _IMPLS["numba"] = _numba

_active = None


def _select_initial():
    env = os.environ.get("PMTK_BACKEND")
    if env is not None:
        if env not in ("numba", "numpy"):
            raise ConfigError(
                f"PMTK_BACKEND must be 'numba' or 'numpy', got {env!r}"
            )
        if env == "numba" and _numba is None:
            raise ConfigError("PMTK_BACKEND=numba but numba is not importable")
        return env
    if _numba is None:
        logger.warning("numba unavailable, falling back to numpy kernels")
        return "numpy"
    return "numba"


def active_backend():
    """Name of the kernel backend currently in use."""
    global _active
    if _active is None:
        _active = _select_initial()
    return _active


def available_backends():
    """Names of the kernel backends importable in this environment."""
    return sorted(_IMPLS)


def use_backend(name):
    """Switch kernel backend at runtime; returns the previous backend name."""
    global _active
    if name not in _IMPLS:
        raise ConfigError(
            f"unknown backend {name!r}; available: {sorted(_IMPLS)}"
        )
    prev = active_backend()
    _active = name
    return prev


def _impl():
    return _IMPLS[active_backend()]


def as_matrix(x, name="matrix"):
    """Coerce to a nonempty 2-D float32 C-contiguous array, validating finiteness."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got {arr.ndim}-D")
    if arr.size == 0:
        raise ValueError(f"{name} must be nonempty, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _as_vector(x, length, name):
    arr = np.ascontiguousarray(np.asarray(x), dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise ValueError(
            f"{name} must be a vector of length {length}, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_attention(a, name="attention", atol=1e-5):
    """Validate attention-matrix invariants: square, entries in [0, 1], rows sum to 1."""
    a = as_matrix(a, name)
    n, m = a.shape
    if n != m:
        raise ValueError(f"{name} must be square, got {n}x{m}")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError(f"{name} has entries outside [0, 1]")
    sums = a.sum(axis=1, dtype=np.float64)
    worst = np.abs(sums - 1.0).max()
    if worst > atol:
        raise ValueError(
            f"{name} rows must sum to 1 within {atol:g}, worst deviation {worst:g}"
        )
    return a


def matmul(a, b):
    """Dense product a @ b."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: a is {a.shape[0]}x{a.shape[1]}, "
            f"b is {b.shape[0]}x{b.shape[1]}"
        )
    out = _impl().matmul(a, b)
    if not np.all(np.isfinite(out)):
        raise ValueError("matmul overflowed float32: non-finite values in product")
    return out


def softmax_rows(m):
    """Row-wise softmax with per-row max subtraction (stable up to |x| ~ 1e4)."""
    m = as_matrix(m, "softmax input")
    return _impl().softmax_rows(m)


def gelu(m):
    """Elementwise GELU, tanh approximation."""
    m = as_matrix(m, "gelu input")
    return _impl().gelu(m)


def layer_norm(m, gamma, beta, eps=1e-5):
    """Per-row normalization to zero mean, unit variance, then affine scale/shift."""
    m = as_matrix(m, "layer_norm input")
    gamma = _as_vector(gamma, m.shape[1], "gamma")
    beta = _as_vector(beta, m.shape[1], "beta")
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    return _impl().layer_norm(m, gamma, beta, np.float64(eps))


def attention(q, k, v, d_k):
    """Scaled dot-product attention.

    Returns ``(A, Y)`` where ``A = softmax(q k^T / sqrt(d_k))`` is the
    row-stochastic attention matrix (q.rows x k.rows) and ``Y = A v``.
    """
    q = as_matrix(q, "q")
    k = as_matrix(k, "k")
    v = as_matrix(v, "v")
    if d_k == 0:
        raise ValueError("d_k must be positive, got 0")
    if q.shape[1] != d_k or k.shape[1] != d_k:
        raise ValueError(
            f"q and k must have d_k={d_k} columns, got {q.shape[1]} and {k.shape[1]}"
        )
    if k.shape[0] != v.shape[0]:
        raise ValueError(
            f"k and v row counts differ: {k.shape[0]} vs {v.shape[0]}"
        )
    scale = np.float32(1.0 / math.sqrt(d_k))
    return _impl().attention(q, k, v, scale)


def ffn(x, w1, w2):
    """Two-layer feed-forward block: gelu(x @ w1) @ w2. No bias terms."""
    x = as_matrix(x, "x")
    w1 = as_matrix(w1, "w1")
    w2 = as_matrix(w2, "w2")
    if x.shape[1] != w1.shape[0]:
        raise ValueError(
            f"ffn shape mismatch: x has {x.shape[1]} columns, w1 expects {w1.shape[0]}"
        )
    if w1.shape[1] != w2.shape[0]:
        raise ValueError(
            f"ffn shape mismatch: w1 outputs {w1.shape[1]}, w2 expects {w2.shape[0]}"
        )
    hidden = gelu(matmul(x, w1))
    return matmul(hidden, w2)
