"""Small shared generators for randomized tests."""

import numpy as np


def random_attention(rng, n, sharp=1.0):
    """A random row-stochastic float32 matrix (softmax of scaled logits)."""
    logits = rng.standard_normal((n, n)) * sharp
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    a = shifted / shifted.sum(axis=1, keepdims=True)
    return a.astype(np.float32)


def random_stack(rng, n, layers, sharp=1.0):
    return [random_attention(rng, n, sharp) for _ in range(layers)]


def uniform_attention(n):
    return np.full((n, n), 1.0 / n, dtype=np.float32)


def permute_stack(stack, perm):
    """Relabel tokens: permute rows and columns of every layer."""
    return [a[np.ix_(perm, perm)].copy() for a in stack]
