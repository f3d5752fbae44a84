"""Training-free visual-token reduction over transformer attention maps.

The package bundles four pieces that chain into one pipeline:

- ``kernels``: dense transformer primitives (matmul, row softmax, scaled
  dot-product attention, layer norm, GELU FFN) with interchangeable
  numpy and numba backends.
- ``encoder``: a small deterministic ViT-style encoder that records the
  head-averaged attention matrix of every layer.
- ``selector``: two-stage token selection; per-layer top-k by contribution
  degree plus quartile-fence outliers from pivotal attention rows.
- ``costmodel``: roofline prefill estimates quantifying what the kept
  token count costs on real hardware.

``tensorio`` moves matrices in and out as a minimal binary format, and
``cli`` wires everything into config-driven subcommands.
"""

from .costmodel import (
    CostReport,
    HardwareSpec,
    ModelSpec,
    SpeedupReport,
    activation_bytes,
    compare,
    estimate,
    prefill_ops,
    prefill_time,
    quantize,
)
from .encoder import (
    EncoderConfig,
    EncoderTrace,
    EncoderWeights,
    forward,
    init_weights,
    patchify,
    synthetic_image,
)
from .errors import ConfigError, DataError, PmtkError, TensorFormatError
from .selector import (
    ContributionProfile,
    SelectionConfig,
    SelectionResult,
    TokenRecord,
    contribution_degree,
    gather,
    gini,
    profile_layers,
    select_complementary,
    select_pivotal,
    select_tokens,
    token_trajectories,
    top_k_indices,
)
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContributionProfile",
    "CostReport",
    "DataError",
    "EncoderConfig",
    "EncoderTrace",
    "EncoderWeights",
    "HardwareSpec",
    "ModelSpec",
    "PmtkError",
    "SelectionConfig",
    "SelectionResult",
    "SpeedupReport",
    "TensorFormatError",
    "TokenRecord",
    "activation_bytes",
    "compare",
    "contribution_degree",
    "estimate",
    "forward",
    "gather",
    "gini",
    "init_weights",
    "patchify",
    "prefill_ops",
    "prefill_time",
    "profile_layers",
    "quantize",
    "read_tensor",
    "select_complementary",
    "select_pivotal",
    "select_tokens",
    "synthetic_image",
    "token_trajectories",
    "top_k_indices",
    "write_tensor",
]
