"""Layer math written against plain torch tensor ops.

Gradients come from torch's reverse-mode tape; every function here is checked
against central finite differences in the test suite.
"""
from __future__ import annotations

import math

import torch


class DimensionError(ValueError):
    """Raised when tensor shapes do not line up."""


class ConfigurationError(ValueError):
    """Raised for invalid layer hyperparameters."""


def _check_finite(x: torch.Tensor, where: str) -> None:
    if not torch.isfinite(x).all():
        raise FloatingPointError(f"non-finite values produced by {where}")


def linear(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    out = x @ weight.t()
    if bias is not None:
        out = out + bias
    return out


def conv2d_forward(
    input: torch.Tensor,
    kernel: torch.Tensor,
    padding: int = 0,
    bias: torch.Tensor | None = None,
) -> torch.Tensor:
    """Stride-1 2-D cross-correlation with zero padding.

    Computed as a sum over kernel offsets of channel-mixing einsums, which keeps
    the op differentiable without a dedicated backward.
    """
    if input.dim() != 4 or kernel.dim() != 4:
        raise DimensionError("conv2d expects input [N,C,H,W] and kernel [O,C,k,k]")
    n, c_in, h, w = input.shape
    c_out, k_c, kh, kw = kernel.shape
    if k_c != c_in:
        raise DimensionError(f"conv2d: kernel expects {k_c} input channels, got {c_in}")
    if kh != kw or kh % 2 == 0:
        raise DimensionError("conv2d: kernel must be square with odd size")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError("conv2d: bias must have shape [C_out]")
    x = torch.nn.functional.pad(input, (padding, padding, padding, padding)) if padding else input
    out_h = h + 2 * padding - kh + 1
    out_w = w + 2 * padding - kw + 1
    if out_h <= 0 or out_w <= 0:
        raise DimensionError("conv2d: kernel larger than padded input")
    out = input.new_zeros((n, c_out, out_h, out_w))
    for i in range(kh):
        for j in range(kw):
            window = x[:, :, i : i + out_h, j : j + out_w]
            out = out + torch.einsum("nchw,oc->nohw", window, kernel[:, :, i, j])
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


def group_norm_forward(
    input: torch.Tensor,
    num_groups: int,
    epsilon: float = 1e-5,
    weight: torch.Tensor | None = None,
    bias: torch.Tensor | None = None,
) -> torch.Tensor:
    if input.dim() < 2:
        raise DimensionError("group_norm expects [N, C, ...]")
    n, c = input.shape[:2]
    if num_groups <= 0 or c % num_groups != 0:
        raise ConfigurationError(f"{c} channels not divisible into {num_groups} groups")
    grouped = input.reshape(n, num_groups, -1)
    mean = grouped.mean(dim=-1, keepdim=True)
    var = ((grouped - mean) ** 2).mean(dim=-1, keepdim=True)
    out = ((grouped - mean) / torch.sqrt(var + epsilon)).reshape(input.shape)
    if weight is not None or bias is not None:
        shape = (1, c) + (1,) * (input.dim() - 2)
        if weight is not None:
            out = out * weight.view(shape)
        if bias is not None:
            out = out + bias.view(shape)
    return out


def layer_norm(
    x: torch.Tensor,
    weight: torch.Tensor | None = None,
    bias: torch.Tensor | None = None,
    epsilon: float = 1e-6,
) -> torch.Tensor:
    mean = x.mean(dim=-1, keepdim=True)
    var = ((x - mean) ** 2).mean(dim=-1, keepdim=True)
    out = (x - mean) / torch.sqrt(var + epsilon)
    if weight is not None:
        out = out * weight
    if bias is not None:
        out = out + bias
    return out


def gelu(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = x - x.max(dim=dim, keepdim=True).values.detach()
    e = torch.exp(shifted)
    return e / e.sum(dim=dim, keepdim=True)


def log_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    shifted = x - x.max(dim=dim, keepdim=True).values.detach()
    return shifted - torch.log(torch.exp(shifted).sum(dim=dim, keepdim=True))


def multi_head_attention(
    x: torch.Tensor,
    qkv_weight: torch.Tensor,
    qkv_bias: torch.Tensor | None,
    proj_weight: torch.Tensor,
    proj_bias: torch.Tensor | None,
    num_heads: int,
) -> torch.Tensor:
    """Self-attention over tokens x: [N, L, D]."""
    n, length, dim = x.shape
    if dim % num_heads:
        raise ConfigurationError(f"embed dim {dim} not divisible by {num_heads} heads")
    head_dim = dim // num_heads
    qkv = linear(x, qkv_weight, qkv_bias).reshape(n, length, 3, num_heads, head_dim)
    q, k, v = qkv.permute(2, 0, 3, 1, 4)  # each [N, heads, L, head_dim]
    scores = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
    attn = softmax(scores, dim=-1)
    out = (attn @ v).transpose(1, 2).reshape(n, length, dim)
    return linear(out, proj_weight, proj_bias)


def lstm_step(
    x: torch.Tensor,
    state: tuple[torch.Tensor, torch.Tensor],
    weight_ih: torch.Tensor,
    weight_hh: torch.Tensor,
    bias: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """One LSTM cell update. Gate order in the stacked weights: input, forget, candidate, output."""
    h, c = state
    hidden = h.shape[-1]
    if weight_ih.shape != (4 * hidden, x.shape[-1]) or weight_hh.shape != (4 * hidden, hidden):
        raise DimensionError(
            f"lstm_step: weights {tuple(weight_ih.shape)}/{tuple(weight_hh.shape)} "
            f"do not match input {x.shape[-1]} and hidden {hidden}"
        )
    if c.shape != h.shape:
        raise DimensionError("lstm_step: h and c shapes differ")
    return lstm_recurrent_step(x @ weight_ih.t(), state, weight_hh, bias)


def lstm_recurrent_step(
    input_gates: torch.Tensor,
    state: tuple[torch.Tensor, torch.Tensor],
    weight_hh: torch.Tensor,
    bias: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """LSTM update from a precomputed input projection ``x @ weight_ih.T``.

    Lets sequence code project every timestep's input in one matrix product.
    """
    h, c = state
    gates = input_gates + h @ weight_hh.t() + bias
    i, f, g, o = gates.chunk(4, dim=-1)
    i = torch.sigmoid(i)
    f = torch.sigmoid(f)
    g = torch.tanh(g)
    o = torch.sigmoid(o)
    c_next = f * c + i * g
    h_next = o * torch.tanh(c_next)
    return h_next, c_next
