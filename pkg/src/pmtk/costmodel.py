"""Roofline prefill-cost model for decoder-only language models.

Counts multiply-accumulate work (1 MAC = 2 ops) and bytes moved for the
prefill pass over n tokens, then takes the roofline maximum of compute time
and memory time on a given accelerator. Per transformer layer:

    ops = 8*n*d^2            (q, k, v and output projections)
        + 4*n^2*d            (attention scores and weighted values)
        + 2*n*d*f*f_mats     (feed-forward; f_mats=3 for gated FFNs)

plus one 2*n*d*vocab term for the output head. Activation traffic per layer
is 6*n*d + f_mats*n*f + 2*h*n^2 elements; memory access is the weight bytes
plus activations counted twice (written once, read back once). Quantizing
weights and activations shrinks every byte count but never the op count.

Reported units follow the usual accelerator conventions: tera-ops,
milliseconds, and decimal gigabytes.
"""

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources

TERA = 1.0e12
GIGA = 1.0e9

FORMULAS = {
    "ops": "layers*(8*n*d^2 + 4*n^2*d + 2*n*d*f*f_mats) + 2*n*d*vocab",
    "activation_bytes": "layers*(6*n*d + f_mats*n*f + 2*h*n^2)*bytes_per_param",
    "mem_access_bytes": "param_count*bytes_per_param + 2*activation_bytes",
    "prefill_time": "max(ops/peak_flops, mem_access_bytes/mem_bandwidth)",
}


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: int
    hidden_dim: int
    heads: int
    ffn_dim: int
    ffn_matrices: int
    vocab_size: int
    param_count: int
    bytes_per_param: float

    def __post_init__(self):
        for attr in ("layers", "hidden_dim", "heads", "ffn_dim",
                     "ffn_matrices", "vocab_size", "param_count"):
            v = getattr(self, attr)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"model {attr} must be a positive integer, got {v!r}")
        if self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if self.ffn_matrices not in (2, 3):
            raise ValueError(
                f"ffn_matrices must be 2 (plain MLP) or 3 (gated), got {self.ffn_matrices}"
            )
        if not self.bytes_per_param > 0:
            raise ValueError(f"bytes_per_param must be positive, got {self.bytes_per_param}")


@dataclass(frozen=True)
class HardwareSpec:
    name: str
    peak_flops: float
    mem_bandwidth: float

    def __post_init__(self):
        if not self.peak_flops > 0:
            raise ValueError(f"peak_flops must be positive, got {self.peak_flops}")
        if not self.mem_bandwidth > 0:
            raise ValueError(f"mem_bandwidth must be positive, got {self.mem_bandwidth}")


@dataclass(frozen=True)
class CostReport:
    model: str
    hardware: str
    tokens: int
    ops_total: float
    prefill_ms: float
    mem_access_gb: float
    activation_gb: float
    bound: str


@dataclass(frozen=True)
class SpeedupReport:
    full: CostReport
    reduced: CostReport

    @property
    def ops_ratio(self):
        return self.full.ops_total / self.reduced.ops_total

    @property
    def speedup(self):
        return self.full.prefill_ms / self.reduced.prefill_ms

    @property
    def mem_access_ratio(self):
        return self.full.mem_access_gb / self.reduced.mem_access_gb

    @property
    def activation_ratio(self):
        return self.full.activation_gb / self.reduced.activation_gb


def quantize(model, bytes_per_param, name=None):
    """The same architecture at a different storage width; ops are unchanged."""
    if name is None:
        name = f"{model.name}@{bytes_per_param:g}B"
    return dataclasses.replace(model, name=name, bytes_per_param=float(bytes_per_param))


def prefill_ops(model, n_tokens):
    """Total prefill tera-operations for n tokens; independent of byte width."""
    n = _check_tokens(n_tokens)
    d, f = model.hidden_dim, model.ffn_dim
    per_layer = 8 * n * d * d + 4 * n * n * d + 2 * n * d * f * model.ffn_matrices
    return float(model.layers * per_layer + 2 * n * d * model.vocab_size) / TERA


def activation_bytes(model, n_tokens):
    """Gigabytes of intermediate activations materialized during prefill."""
    n = _check_tokens(n_tokens)
    d, f, h = model.hidden_dim, model.ffn_dim, model.heads
    per_layer = 6 * n * d + model.ffn_matrices * n * f + 2 * h * n * n
    return float(model.layers * per_layer) * model.bytes_per_param / GIGA


def param_gb(model):
    return float(model.param_count) * model.bytes_per_param / GIGA


def mem_access_gb(model, n_tokens):
    """Weight bytes read once plus activations written and read back, in GB."""
    return param_gb(model) + 2.0 * activation_bytes(model, n_tokens)


def prefill_time(model, hardware, n_tokens):
    """Roofline prefill estimate: (milliseconds, binding side).

    The compute bound wins ties, so a perfectly balanced point reports
    "compute".
    """
    compute_ms = prefill_ops(model, n_tokens) * TERA / hardware.peak_flops * 1.0e3
    memory_ms = mem_access_gb(model, n_tokens) * GIGA / hardware.mem_bandwidth * 1.0e3
    if compute_ms >= memory_ms:
        return compute_ms, "compute"
    return memory_ms, "memory"


def estimate(model, hardware, n_tokens):
    ms, bound = prefill_time(model, hardware, n_tokens)
    return CostReport(
        model=model.name,
        hardware=hardware.name,
        tokens=n_tokens,
        ops_total=prefill_ops(model, n_tokens),
        prefill_ms=ms,
        mem_access_gb=mem_access_gb(model, n_tokens),
        activation_gb=activation_bytes(model, n_tokens),
        bound=bound,
    )


def compare(model, hardware, n_full, n_reduced):
    """Cost of a full context versus a token-reduced one."""
    if n_reduced > n_full:
        raise ValueError(f"n_reduced {n_reduced} exceeds n_full {n_full}")
    return SpeedupReport(
        full=estimate(model, hardware, n_full),
        reduced=estimate(model, hardware, n_reduced),
    )


def builtin_models():
    return dict(_BUILTIN_MODELS)


def builtin_hardware():
    return dict(_BUILTIN_HARDWARE)


def load_model(spec):
    """Resolve a bundled model name or an inline spec dict to a ModelSpec."""
    if isinstance(spec, str):
        if spec not in _BUILTIN_MODELS:
            raise ValueError(
                f"unknown model {spec!r}; bundled: {sorted(_BUILTIN_MODELS)}"
            )
        return _BUILTIN_MODELS[spec]
    if isinstance(spec, dict):
        try:
            return ModelSpec(**spec)
        except TypeError as exc:
            raise ValueError(f"bad model spec: {exc}") from None
    raise ValueError(f"model spec must be a name or a dict, got {type(spec).__name__}")


def load_hardware(spec):
    """Resolve a bundled hardware name or an inline spec dict."""
    if isinstance(spec, str):
        if spec not in _BUILTIN_HARDWARE:
            raise ValueError(
                f"unknown hardware {spec!r}; bundled: {sorted(_BUILTIN_HARDWARE)}"
            )
        return _BUILTIN_HARDWARE[spec]
    if isinstance(spec, dict):
        try:
            return HardwareSpec(**spec)
        except TypeError as exc:
            raise ValueError(f"bad hardware spec: {exc}") from None
    raise ValueError(f"hardware spec must be a name or a dict, got {type(spec).__name__}")


def _check_tokens(n_tokens):
    if not isinstance(n_tokens, int) or n_tokens < 0:
        raise ValueError(f"token count must be a non-negative integer, got {n_tokens!r}")
    return n_tokens


def _load_data(filename):
    with resources.files(__package__).joinpath("data").joinpath(filename).open("r") as fh:
        return json.load(fh)


_BUILTIN_MODELS = {
    name: ModelSpec(name=name, **fields)
    for name, fields in _load_data("models.json").items()
}
_BUILTIN_HARDWARE = {
    name: HardwareSpec(name=name, **fields)
    for name, fields in _load_data("hardware.json").items()
}
