"""Vision transformer encoder producing a square grid of patch tokens."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..neuralcore import ConfigurationError, DimensionError, LayerNorm, Linear, TransformerBlock
from ..neuralcore.layers import trunc_normal_
from .compression import grid_side


@dataclass(frozen=True)
class ViTConfig:
    image_size: int = 64
    patch_size: int = 8
    embed_dim: int = 96
    depth: int = 3
    num_heads: int = 3
    mlp_ratio: float = 4.0
    use_class_token: bool = True
    use_position_embedding: bool = True
    in_channels: int = 3

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigurationError("image_size must be divisible by patch_size")
        if self.embed_dim % self.num_heads:
            raise ConfigurationError("embed_dim must be divisible by num_heads")
        grid_side(self.num_patches)

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_pixels(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels

    def to_dict(self) -> dict:
        return asdict(self)


VIT_PRESETS = {
    "tiny-desk": ViTConfig(image_size=64, patch_size=8, embed_dim=96, depth=3, num_heads=3),
    "small-desk": ViTConfig(image_size=64, patch_size=8, embed_dim=192, depth=6, num_heads=3),
    "vit-s": ViTConfig(image_size=128, patch_size=16, embed_dim=384, depth=12, num_heads=6),
    "vit-b": ViTConfig(image_size=128, patch_size=16, embed_dim=768, depth=12, num_heads=12),
}


@dataclass
class PatchTokens:
    tokens: torch.Tensor  # [N, L, D], row-major patch order

    @property
    def grid_side(self) -> int:
        return grid_side(self.tokens.shape[1])


def patchify(images: torch.Tensor, patch_size: int) -> torch.Tensor:
    """[N, C, H, W] -> [N, L, p*p*C]; patches row-major, pixels (row, col, channel) inside."""
    n, c, h, w = images.shape
    gh, gw = h // patch_size, w // patch_size
    x = images.reshape(n, c, gh, patch_size, gw, patch_size)
    x = x.permute(0, 2, 4, 3, 5, 1)
    return x.reshape(n, gh * gw, patch_size * patch_size * c)


def unpatchify(patches: torch.Tensor, patch_size: int, channels: int = 3) -> torch.Tensor:
    n, length, _ = patches.shape
    side = grid_side(length)
    x = patches.reshape(n, side, side, patch_size, patch_size, channels)
    x = x.permute(0, 5, 1, 3, 2, 4)
    return x.reshape(n, channels, side * patch_size, side * patch_size)


class ViT(nn.Module):
    def __init__(self, cfg: ViTConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = Linear(cfg.patch_pixels, cfg.embed_dim)
        extra = 1 if cfg.use_class_token else 0
        self.cls_token = nn.Parameter(trunc_normal_(torch.empty(1, 1, cfg.embed_dim))) if extra else None
        self.pos_embed = (
            nn.Parameter(trunc_normal_(torch.empty(1, cfg.num_patches + extra, cfg.embed_dim)))
            if cfg.use_position_embedding
            else None
        )
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.embed_dim, cfg.num_heads, cfg.mlp_ratio) for _ in range(cfg.depth)
        )
        self.norm = LayerNorm(cfg.embed_dim)

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        if images.shape[1:] != (self.cfg.in_channels, self.cfg.image_size, self.cfg.image_size):
            raise DimensionError(
                f"expected images [N, {self.cfg.in_channels}, {self.cfg.image_size}, {self.cfg.image_size}], "
                f"got {tuple(images.shape)}"
            )
        x = self.patch_embed(patchify(images, self.cfg.patch_size))
        if self.pos_embed is not None:
            offset = 1 if self.cls_token is not None else 0
            x = x + self.pos_embed[:, offset:]
        return x

    def run_blocks(self, x: torch.Tensor) -> torch.Tensor:
        """Prepend the class token (if any), run the blocks, apply the final norm."""
        if self.cls_token is not None:
            cls = self.cls_token
            if self.pos_embed is not None:
                cls = cls + self.pos_embed[:, :1]
            x = torch.cat([cls.expand(x.shape[0], -1, -1), x], dim=1)
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def forward(self, images: torch.Tensor) -> PatchTokens:
        x = self.run_blocks(self.embed(images))
        if self.cls_token is not None:
            x = x[:, 1:]
        return PatchTokens(x)


def vit_forward(images: torch.Tensor, cfg: ViTConfig, model: ViT) -> PatchTokens:
    if model.cfg != cfg:
        raise ConfigurationError("model was built for a different ViTConfig")
    return model(images)
