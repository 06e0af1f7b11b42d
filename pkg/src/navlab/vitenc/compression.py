"""Compression of a ViT patch grid into a flat, spatially ordered feature."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from ..neuralcore import ConfigurationError, Conv2d, DimensionError, GroupNorm, conv2d_forward, group_norm_forward


@dataclass(frozen=True)
class CompressionSpec:
    patch_dim: int
    num_patches: int
    approx_output_size: int
    num_channels: int
    output_size: int

    @property
    def grid_side(self) -> int:
        return math.isqrt(self.num_patches)


def grid_side(num_patches: int) -> int:
    side = math.isqrt(num_patches)
    if side * side != num_patches:
        raise ConfigurationError(f"{num_patches} patches do not form a square grid")
    return side


def create_compression_layer(patch_dim: int, num_patches: int, approx_output_size: int = 2048) -> CompressionSpec:
    if min(patch_dim, num_patches, approx_output_size) <= 0:
        raise ConfigurationError("compression sizes must be positive")
    grid_side(num_patches)
    # Python's round() is banker's rounding, matching the reference pseudocode.
    num_channels = int(round(approx_output_size / num_patches))
    if num_channels == 0:
        raise ConfigurationError(
            f"approx_output_size {approx_output_size} too small for {num_patches} patches"
        )
    return CompressionSpec(patch_dim, num_patches, approx_output_size, num_channels, num_channels * num_patches)


def patch_reshape(tokens: torch.Tensor) -> torch.Tensor:
    """[N, L, D] row-major patch tokens -> [N, D, side, side]."""
    if tokens.dim() != 3:
        raise DimensionError("patch_reshape expects [N, L, D]")
    n, length, dim = tokens.shape
    side = grid_side(length)
    return tokens.reshape(n, side, side, dim).permute(0, 3, 1, 2)


def patch_unreshape(grid: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`patch_reshape`."""
    n, dim, h, w = grid.shape
    return grid.permute(0, 2, 3, 1).reshape(n, h * w, dim)


class CompressionLayer(nn.Module):
    """3x3 bias-free conv -> single-group GroupNorm -> ReLU -> flatten."""

    def __init__(self, spec: CompressionSpec):
        super().__init__()
        self.spec = spec
        self.conv = Conv2d(spec.patch_dim, spec.num_channels, kernel_size=3, padding=1, bias=False)
        self.norm = GroupNorm(1, spec.num_channels)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        if tokens.shape[1:] != (self.spec.num_patches, self.spec.patch_dim):
            raise DimensionError(
                f"expected tokens [N, {self.spec.num_patches}, {self.spec.patch_dim}], got {tuple(tokens.shape)}"
            )
        x = self.conv(patch_reshape(tokens))
        x = torch.relu(self.norm(x))
        return x.flatten(1)  # channel-major, then row-major spatial


def compression_forward(tokens: torch.Tensor, spec: CompressionSpec, params: dict[str, torch.Tensor]) -> torch.Tensor:
    """Functional form of :class:`CompressionLayer` over an explicit parameter map.

    ``params`` needs ``conv.weight``; ``norm.weight``/``norm.bias`` are optional.
    """
    if tokens.shape[1:] != (spec.num_patches, spec.patch_dim):
        raise DimensionError("token shape does not match compression spec")
    x = conv2d_forward(patch_reshape(tokens), params["conv.weight"], padding=1)
    x = group_norm_forward(x, 1, 1e-5, params.get("norm.weight"), params.get("norm.bias"))
    return torch.relu(x).flatten(1)
