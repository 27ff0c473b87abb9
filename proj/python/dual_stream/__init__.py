"""Dual-Stream Transformer: a C++ engine with Python bindings.

Token ids are int32 arrays of shape [B, T]; model configs are dicts with the
keys of ``Model(...).config``.
"""

from ._core import (
    ComputationError,
    ConfigError,
    DataError,
    DimensionError,
    Model,
    Tokenizer,
    UsageError,
    ablate,
    attention_entropy,
    channel_layer_norm,
    evaluate,
    hss,
    mix,
    param_count,
    parse_signature,
    softmax,
    specialize,
    sweep,
    train,
    trapezoid_auc,
)

__all__ = [
    "ComputationError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "Model",
    "Tokenizer",
    "UsageError",
    "ablate",
    "attention_entropy",
    "channel_layer_norm",
    "evaluate",
    "hss",
    "mix",
    "param_count",
    "parse_signature",
    "softmax",
    "specialize",
    "sweep",
    "train",
    "trapezoid_auc",
]
