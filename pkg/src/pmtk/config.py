"""Run configuration: a small versioned JSON schema, strictly validated.

Unknown keys anywhere are errors, so typos fail loudly instead of being
silently ignored. Every section is optional except ``version``; defaults
reproduce the bundled demo setup. ``input`` is either a synthetic pattern
name or a path to a rank-3 image tensor file, resolved relative to the
config file and required to exist at load time. All randomness in a run
flows from the single encoder seed.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

from . import costmodel
from .encoder import SYNTHETIC_PATTERNS, EncoderConfig
from .errors import ConfigError
from .selector import SelectionConfig

CONFIG_VERSION = 1
DEFAULT_TEXT_TOKENS = 35

_TOP_KEYS = ("version", "input", "outputs", "encoder", "selection", "model",
             "hardware", "cost")
_COST_KEYS = ("text_tokens", "visual_tokens", "reduced_visual_tokens")


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderConfig
    selection: SelectionConfig
    input: str
    outputs: str
    model: object = None
    hardware: object = None
    text_tokens: int = DEFAULT_TEXT_TOKENS
    visual_tokens: int = None
    reduced_visual_tokens: int = None

    @property
    def input_is_pattern(self):
        return self.input in SYNTHETIC_PATTERNS


def load_config(path):
    """Read and validate a config file; all failures become ConfigError."""
    try:
        with open(path, "r") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return parse_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config(doc, base_dir="."):
    """Validate a parsed config document against schema version 1."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be an object, got {type(doc).__name__}")
    _reject_unknown(doc, _TOP_KEYS, "config")
    if "version" not in doc:
        raise ConfigError("config is missing required key 'version'")
    if doc["version"] != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported config version {doc['version']!r}; expected {CONFIG_VERSION}"
        )

    encoder = _build(EncoderConfig, _section(doc, "encoder"), "encoder")
    selection = _build(SelectionConfig, _section(doc, "selection"), "selection")

    input_spec = doc.get("input", "noise")
    if not isinstance(input_spec, str) or not input_spec:
        raise ConfigError(f"input must be a pattern name or a path, got {input_spec!r}")
    if input_spec not in SYNTHETIC_PATTERNS:
        resolved = os.path.join(base_dir, input_spec)
        if not os.path.isfile(resolved):
            raise ConfigError(
                f"input {input_spec!r} is neither a synthetic pattern "
                f"{SYNTHETIC_PATTERNS} nor an existing file at {resolved}"
            )
        input_spec = resolved

    outputs = doc.get("outputs", "out")
    if not isinstance(outputs, str) or not outputs:
        raise ConfigError(f"outputs must be a non-empty directory path, got {outputs!r}")

    model = hardware = None
    if "model" in doc:
        try:
            model = costmodel.load_model(doc["model"])
        except ValueError as exc:
            raise ConfigError(f"bad model section: {exc}") from None
    if "hardware" in doc:
        try:
            hardware = costmodel.load_hardware(doc["hardware"])
        except ValueError as exc:
            raise ConfigError(f"bad hardware section: {exc}") from None

    cost = _section(doc, "cost", allowed=_COST_KEYS)
    text_tokens = cost.get("text_tokens", DEFAULT_TEXT_TOKENS)
    if not isinstance(text_tokens, int) or text_tokens < 0:
        raise ConfigError(f"cost.text_tokens must be a non-negative integer, got {text_tokens!r}")
    visual = cost.get("visual_tokens")
    reduced = cost.get("reduced_visual_tokens")
    for name, value in (("visual_tokens", visual), ("reduced_visual_tokens", reduced)):
        if value is not None and (not isinstance(value, int) or value < 1):
            raise ConfigError(f"cost.{name} must be a positive integer, got {value!r}")
    if visual is not None and reduced is not None and reduced > visual:
        raise ConfigError(
            f"cost.reduced_visual_tokens {reduced} exceeds cost.visual_tokens {visual}"
        )

    return RunConfig(
        encoder=encoder,
        selection=selection,
        input=input_spec,
        outputs=outputs,
        model=model,
        hardware=hardware,
        text_tokens=text_tokens,
        visual_tokens=visual,
        reduced_visual_tokens=reduced,
    )


def with_seed(config, seed):
    """The same run configuration with the encoder seed replaced."""
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    return dataclasses.replace(
        config, encoder=dataclasses.replace(config.encoder, seed=seed)
    )


def with_outputs(config, outputs):
    return dataclasses.replace(config, outputs=outputs)


def _section(doc, key, allowed=None):
    raw = doc.get(key, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {key!r} must be an object, got {type(raw).__name__}")
    if allowed is not None:
        _reject_unknown(raw, allowed, f"config section {key!r}")
    return raw


def _build(cls, raw, where):
    allowed = tuple(f.name for f in dataclasses.fields(cls))
    _reject_unknown(raw, allowed, f"config section {where!r}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} section: {exc}") from None


def _reject_unknown(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(
            f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}"
        )
