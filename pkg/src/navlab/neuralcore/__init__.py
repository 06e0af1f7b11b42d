"""Minimal differentiable stack: layer math, AdamW, gradient audit, checkpoints."""
from .checkpoint import CheckpointError, load_checkpoint, load_into_module, read_manifest, save_checkpoint, save_module
from .functional import (
    ConfigurationError,
    DimensionError,
    conv2d_forward,
    group_norm_forward,
    layer_norm,
    linear,
    lstm_recurrent_step,
    lstm_step,
    multi_head_attention,
)
from .gradcheck import grad_check
from .layers import Attention, Conv2d, Embedding, GroupNorm, LayerNorm, Linear, LSTMCell, Mlp, TransformerBlock
from .optim import AdamW, AdamWConfig, ParamStore, adamw_step, clip_grad_norm

__all__ = [
    "AdamW", "AdamWConfig", "Attention", "CheckpointError", "ConfigurationError", "Conv2d",
    "DimensionError", "Embedding", "GroupNorm", "LSTMCell", "LayerNorm", "Linear", "Mlp", "ParamStore",
    "TransformerBlock", "adamw_step", "clip_grad_norm", "conv2d_forward", "grad_check",
    "group_norm_forward", "layer_norm", "linear", "load_checkpoint", "load_into_module",
    "lstm_recurrent_step", "lstm_step", "multi_head_attention", "read_manifest", "save_checkpoint", "save_module",
]
