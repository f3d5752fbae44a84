"""Two-stage token selection over per-layer attention maps.

Stage one scores every token in each scanned layer by its contribution
degree (total attention the other tokens pay to it, r_i = column sum minus
the diagonal) and keeps the top k per layer; the union over scanned layers
forms the pivotal set. Stage two looks at each pivotal token's attention row
in the penultimate layer and flags the columns it attends to unusually
strongly, using the Tukey fence Q3 + lambda*IQR with strict inequality;
those columns, minus the pivotal set, are complementary.

Selection is pure: the output is a sorted index set plus per-token
provenance, and ``gather`` copies embedding rows without changing a bit.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels

log = logging.getLogger("pmtk")

DEFAULT_IQR_LAMBDA = 1.5
# Default per-layer quota, calibrated so the default 12-layer, 64-token
# encoder keeps roughly half the tokens on the bundled test patterns.
DEFAULT_K = 5


@dataclass(frozen=True)
class SelectionConfig:
    k: int = DEFAULT_K
    start_layer: int = None
    end_layer: int = None
    iqr_lambda: float = DEFAULT_IQR_LAMBDA
    m_max: int = None

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if not self.iqr_lambda > 0:
            raise ValueError(f"iqr_lambda must be > 0, got {self.iqr_lambda}")
        if self.m_max is not None and (not isinstance(self.m_max, int) or self.m_max < 1):
            raise ValueError(f"m_max must be a positive integer, got {self.m_max!r}")
        for name in ("start_layer", "end_layer"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or v < 0):
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")


@dataclass(frozen=True)
class ContributionProfile:
    """One layer's contribution degrees with summary statistics."""

    layer: int
    r: np.ndarray
    mean: float
    max: float
    gini: float

    @property
    def n(self):
        return self.r.shape[0]


@dataclass(frozen=True)
class TokenRecord:
    """Why one token was kept (or dropped).

    ``score`` is the summed contribution over scanned layers for pivotal
    tokens, and the support (max attention received from a flagging pivotal
    row) for complementary ones. ``flagged_by`` lists the scanned layers
    that voted for a pivotal token, or the pivotal rows that flagged a
    complementary one.
    """

    index: int
    kind: str
    score: float
    flagged_by: tuple


@dataclass(frozen=True)
class SelectionResult:
    selected: np.ndarray
    pivotal: np.ndarray
    complementary: np.ndarray
    provenance: tuple
    dropped: tuple
    n: int
    scan: tuple

    @property
    def m(self):
        return int(self.selected.size)

    @property
    def kept_fraction(self):
        return self.m / self.n


def top_k_indices(scores, k):
    """Indices of the k largest scores, returned in ascending index order.

    Ties at the cut are broken toward the lower token index. k larger than
    the score count selects everything, with a warning.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"scores must be 1-D, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if k > s.size:
        log.warning("top-k with k=%d exceeds %d scores; selecting all", k, s.size)
        k = s.size
    # stable sort of the negated scores: descending value, lower index first
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:k])


def contribution_degree(attention, layer=0):
    """Attention received from other tokens: column sums minus the diagonal.

    Accumulated in float64, so 0 <= r_i <= n-1 holds exactly for any
    attention map with entries in [0, 1].
    """
    r = _contribution_r(attention)
    return ContributionProfile(
        layer=layer,
        r=r,
        mean=float(r.mean()),
        max=float(r.max()),
        gini=gini(r),
    )


def gini(values):
    """Gini coefficient of a non-negative 1-D array (0 when all mass is 0)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"gini needs a non-empty 1-D array, got shape {v.shape}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("gini needs finite non-negative values")
    total = v.sum()
    if total == 0.0:
        return 0.0
    s = np.sort(v)
    n = v.size
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(2.0 * np.dot(ranks, s) / (n * total) - (n + 1.0) / n)


def profile_layers(source):
    """One ContributionProfile per layer of an attention stack or trace."""
    stack = _attention_stack(source)
    return [contribution_degree(a, layer=l) for l, a in enumerate(stack)]


def token_trajectories(profiles, indices=None):
    """Contribution of chosen tokens across layers, one row per token."""
    r = np.stack([p.r for p in profiles])
    if indices is None:
        return r.T.copy()
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"indices must be 1-D, got shape {idx.shape}")
    n = r.shape[1]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(f"token index out of range for n={n}")
    return r[:, idx].T.copy()


def default_start_layer(layers):
    """First scanned layer when none is configured: ceil(L/4), clamped."""
    return min(math.ceil(layers / 4), layers - 2)


def resolve_scan(config, layers):
    """Concrete inclusive (start, end) pivotal scan range for an L-layer stack."""
    if layers < 2:
        raise ValueError(f"need at least 2 layers, got {layers}")
    start = config.start_layer
    end = config.end_layer
    if start is None:
        start = default_start_layer(layers)
    if end is None:
        end = layers - 2
    if not 0 <= start <= end <= layers - 2:
        raise ValueError(
            f"scan range [{start}, {end}] invalid for {layers} layers; "
            f"need 0 <= start <= end <= {layers - 2}"
        )
    return start, end


def select_pivotal(source, config):
    """Union of per-layer top-k tokens by contribution degree.

    Returns (sorted union, {layer: that layer's top-k indices}).
    """
    stack = _attention_stack(source)
    start, end = resolve_scan(config, len(stack))
    per_layer = {}
    union = set()
    for layer in range(start, end + 1):
        picks = top_k_indices(_contribution_r(stack[layer]), config.k)
        per_layer[layer] = picks
        union.update(int(i) for i in picks)
    return np.array(sorted(union), dtype=np.int64), per_layer


def select_complementary(a_penult, pivotal, config=None):
    """Tokens some pivotal row attends to beyond the Tukey fence.

    For each pivotal row the fence is Q3 + lambda*IQR over that row's n
    attention weights (linear-interpolation quartiles); columns strictly
    above it are candidates. Returns the sorted candidate union minus the
    pivotal set; empty pivotal set means no candidates.
    """
    if config is None:
        config = SelectionConfig()
    flagged, _ = _complementary_votes(a_penult, pivotal, config.iqr_lambda)
    return np.array(sorted(flagged), dtype=np.int64)


def select_tokens(source, config=None):
    """Full two-stage selection over per-layer attention maps.

    The pivotal scan covers the configured layer range (defaults: from
    ceil(L/4) through the penultimate layer); complementary tokens always
    come from the penultimate layer. If m_max caps the budget, complementary
    tokens are dropped first (lowest support, then highest index), then
    pivotal tokens (lowest summed contribution, then highest index).
    """
    if config is None:
        config = SelectionConfig()
    stack = _attention_stack(source)
    layers = len(stack)
    n = stack[0].shape[0]
    start, end = resolve_scan(config, layers)

    pivotal, per_layer = select_pivotal(stack, config)
    votes = {}
    for layer, picks in per_layer.items():
        for i in picks:
            votes.setdefault(int(i), []).append(layer)
    agg = np.zeros(n, dtype=np.float64)
    for layer in range(start, end + 1):
        agg += _contribution_r(stack[layer])
    flagged, support = _complementary_votes(
        stack[layers - 2], pivotal, config.iqr_lambda
    )

    def record(i):
        if i in votes:
            return TokenRecord(index=i, kind="pivotal", score=float(agg[i]),
                               flagged_by=tuple(votes[i]))
        return TokenRecord(index=i, kind="complementary", score=support[i],
                           flagged_by=tuple(flagged[i]))

    kept = set(votes) | set(flagged)
    dropped = []
    if config.m_max is not None and len(kept) > config.m_max:
        overflow = len(kept) - config.m_max
        # weakest support goes first; ties evict the higher index
        comp_order = sorted(flagged, key=lambda j: (support[j], -j))
        piv_order = sorted(votes, key=lambda j: (agg[j], -j))
        for j in (comp_order + piv_order)[:overflow]:
            dropped.append(record(j))
            kept.discard(j)

    piv_kept = np.array(sorted(i for i in votes if i in kept), dtype=np.int64)
    comp_kept = np.array(sorted(j for j in flagged if j in kept), dtype=np.int64)
    selected = np.array(sorted(kept), dtype=np.int64)
    return SelectionResult(
        selected=selected,
        pivotal=piv_kept,
        complementary=comp_kept,
        provenance=tuple(record(int(i)) for i in selected),
        dropped=tuple(dropped),
        n=n,
        scan=(start, end),
    )


def gather(embeddings, indices):
    """Copy the selected embedding rows, bit for bit, in index order."""
    emb = np.asarray(embeddings)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be 2-D, got shape {emb.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"indices must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= emb.shape[0]):
        raise ValueError(f"token index out of range for {emb.shape[0]} rows")
    return emb[idx].copy()


def _contribution_r(attention):
    a = kernels.check_attention(attention)
    col = a.sum(axis=0, dtype=np.float64)
    return col - np.diagonal(a).astype(np.float64)


def _complementary_votes(a_penult, pivotal, iqr_lambda):
    a = kernels.check_attention(a_penult)
    n = a.shape[0]
    pivotal_set = set(int(i) for i in pivotal)
    if pivotal_set and (min(pivotal_set) < 0 or max(pivotal_set) >= n):
        raise ValueError(f"pivotal index out of range for n={n}")
    flagged = {}
    support = {}
    for pi in sorted(pivotal_set):
        row = a[pi].astype(np.float64)
        q1, q3 = np.quantile(row, [0.25, 0.75])
        fence = q3 + iqr_lambda * (q3 - q1)
        for j in np.nonzero(row > fence)[0]:
            j = int(j)
            if j in pivotal_set:
                continue
            flagged.setdefault(j, []).append(pi)
            w = float(a[pi, j])
            if j not in support or w > support[j]:
                support[j] = w
    return flagged, support


def _attention_stack(source):
    """Normalize a trace object or a plain sequence of square matrices."""
    attention = getattr(source, "attention", source)
    stack = [np.asarray(a) for a in attention]
    if len(stack) < 2:
        raise ValueError(f"attention stack needs at least 2 layers, got {len(stack)}")
    n = stack[0].shape[0] if stack[0].ndim == 2 else -1
    for l, a in enumerate(stack):
        if a.ndim != 2 or a.shape != (n, n):
            raise ValueError(
                f"layer {l} attention has shape {a.shape}, expected ({n}, {n})"
            )
    return stack
