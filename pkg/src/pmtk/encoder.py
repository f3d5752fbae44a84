"""A small deterministic ViT-style encoder that records per-layer attention.

The encoder patchifies an image, runs L pre-norm transformer blocks
(x += MHSA(LN(x)); x += FFN(LN(x))), and keeps the head-averaged attention
matrix of every layer alongside the final token embeddings. There is no
class token: token index i is patch i, row-major over the patch grid, so
selection indices map straight back to image locations.

Everything is driven by a single integer seed; identical (image, seed,
config) produce a bit-identical trace.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels

LN_EPS = 1e-5
INIT_STD = 0.02
SYNTHETIC_PATTERNS = ("noise", "checkerboard", "gradient")

# substream tag so synthetic noise images never reuse the weight stream
_NOISE_STREAM = 0x494D47  # "IMG"


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    dim: int = 128
    heads: int = 4
    layers: int = 12
    ffn_dim: int = 256
    seed: int = 0
    use_pos_embed: bool = True

    def __post_init__(self):
        for name in ("image_size", "patch_size", "channels", "dim", "heads",
                     "layers", "ffn_dim"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"encoder {name} must be a positive integer, got {v!r}")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.layers < 2:
            raise ValueError(f"need at least 2 layers for a penultimate layer, got {self.layers}")

    @property
    def grid(self):
        return self.image_size // self.patch_size

    @property
    def tokens(self):
        return self.grid * self.grid

    @property
    def head_dim(self):
        return self.dim // self.heads

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels


@dataclass(frozen=True)
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln1_gamma: np.ndarray
    ln1_beta: np.ndarray
    ln2_gamma: np.ndarray
    ln2_beta: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class EncoderWeights:
    patch_proj: np.ndarray
    pos_embed: np.ndarray
    blocks: tuple


@dataclass(frozen=True)
class EncoderTrace:
    """Per-layer head-averaged attention plus final visual-token embeddings."""

    attention: tuple
    embeddings: np.ndarray
    n: int = field(default=0)

    def __post_init__(self):
        if self.n == 0:
            object.__setattr__(self, "n", int(self.embeddings.shape[0]))

    @property
    def layers(self):
        return len(self.attention)


def init_weights(config):
    """Draw all encoder parameters from a PRNG seeded with config.seed.

    Projections are normal(0, 0.02) float32; norm scales start at gamma=1,
    beta=0. Draw order is fixed (patch projection, positional table, then per
    block: wq, wk, wv, wo, w1, w2), so a given seed yields bit-identical bytes.
    """
    rng = np.random.default_rng(config.seed)
    std = np.float32(INIT_STD)

    def draw(*shape):
        return rng.standard_normal(shape, dtype=np.float32) * std

    d = config.dim
    patch_proj = draw(config.patch_dim, d)
    pos_embed = draw(config.tokens, d)
    blocks = []
    for _ in range(config.layers):
        blocks.append(BlockWeights(
            wq=draw(d, d),
            wk=draw(d, d),
            wv=draw(d, d),
            wo=draw(d, d),
            ln1_gamma=np.ones(d, dtype=np.float32),
            ln1_beta=np.zeros(d, dtype=np.float32),
            ln2_gamma=np.ones(d, dtype=np.float32),
            ln2_beta=np.zeros(d, dtype=np.float32),
            w1=draw(d, config.ffn_dim),
            w2=draw(config.ffn_dim, d),
        ))
    return EncoderWeights(patch_proj=patch_proj, pos_embed=pos_embed,
                          blocks=tuple(blocks))


def patchify(image, config):
    """Cut an H x W x C image into flat per-patch rows.

    Token i covers grid cell (i // grid, i % grid); within a patch, features
    are ordered row-major over (patch_row, patch_col, channel).
    """
    image = np.asarray(image, dtype=np.float32)
    expected = (config.image_size, config.image_size, config.channels)
    if image.shape != expected:
        raise ValueError(f"image shape {image.shape} does not match config {expected}")
    g, p, c = config.grid, config.patch_size, config.channels
    patches = image.reshape(g, p, g, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(patches.reshape(config.tokens, config.patch_dim))


def forward(image, weights, config):
    """Run the encoder, recording each layer's head-averaged attention."""
    x = kernels.matmul(patchify(image, config), weights.patch_proj)
    if config.use_pos_embed:
        x = x + weights.pos_embed
    n, hd = config.tokens, config.head_dim

    attn_maps = []
    for blk in weights.blocks:
        h = kernels.layer_norm(x, blk.ln1_gamma, blk.ln1_beta, LN_EPS)
        q_full = kernels.matmul(h, blk.wq)
        k_full = kernels.matmul(h, blk.wk)
        v_full = kernels.matmul(h, blk.wv)

        avg = np.zeros((n, n), dtype=np.float64)
        heads_out = np.empty((n, config.dim), dtype=np.float32)
        for hi in range(config.heads):
            lo = hi * hd
            sl = slice(lo, lo + hd)
            a, y = kernels.attention(
                np.ascontiguousarray(q_full[:, sl]),
                np.ascontiguousarray(k_full[:, sl]),
                np.ascontiguousarray(v_full[:, sl]),
                hd,
            )
            avg += a
            heads_out[:, sl] = y
        attn_maps.append((avg / config.heads).astype(np.float32))

        x = x + kernels.matmul(heads_out, blk.wo)
        h2 = kernels.layer_norm(x, blk.ln2_gamma, blk.ln2_beta, LN_EPS)
        x = x + kernels.ffn(h2, blk.w1, blk.w2)

    return EncoderTrace(attention=tuple(attn_maps), embeddings=x, n=n)


def validate_trace(trace, expected_n=None):
    """Check trace invariants; raises ValueError on violation.

    Used both on freshly computed traces (tests) and on attention stacks
    loaded from files dumped by external encoders.
    """
    if trace.layers < 2:
        raise ValueError(f"trace needs at least 2 layers, got {trace.layers}")
    n = trace.n
    if expected_n is not None and n != expected_n:
        raise ValueError(f"trace has {n} tokens, expected {expected_n}")
    if trace.embeddings.ndim != 2 or trace.embeddings.shape[0] != n:
        raise ValueError(
            f"embeddings shape {trace.embeddings.shape} inconsistent with n={n}"
        )
    for l, a in enumerate(trace.attention):
        if a.shape != (n, n):
            raise ValueError(f"layer {l} attention shape {a.shape}, expected ({n}, {n})")
        kernels.check_attention(a, name=f"layer {l} attention")
    return trace


def synthetic_image(name, config):
    """Generate a named test pattern sized for the given config.

    ``noise`` is seeded from config.seed through a dedicated substream, so
    it is deterministic but distinct from the weight stream.
    """
    hw, c = config.image_size, config.channels
    if name == "noise":
        rng = np.random.default_rng([config.seed, _NOISE_STREAM])
        return rng.standard_normal((hw, hw, c), dtype=np.float32)
    if name == "checkerboard":
        g = config.grid
        cell = (np.indices((g, g)).sum(axis=0) % 2).astype(np.float32)
        board = np.kron(cell, np.ones((config.patch_size, config.patch_size), dtype=np.float32))
        return np.repeat(board[:, :, None], c, axis=2)
    if name == "gradient":
        ramp = np.linspace(0.0, 1.0, hw, dtype=np.float32)
        img = (ramp[:, None] + ramp[None, :]) / 2.0
        return np.repeat(img[:, :, None], c, axis=2).astype(np.float32)
    raise ValueError(
        f"unknown synthetic pattern {name!r}; expected one of {SYNTHETIC_PATTERNS}"
    )
