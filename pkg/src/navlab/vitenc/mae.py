"""Masked-autoencoder pretraining pieces: masking, reconstruction loss, model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..neuralcore import DimensionError, LayerNorm, Linear, TransformerBlock
from ..neuralcore.layers import trunc_normal_
from .vit import ViT, ViTConfig, patchify


@dataclass(frozen=True)
class MaeMask:
    mask_ratio: float
    visible_indices: tuple[int, ...]
    masked_indices: tuple[int, ...]

    @property
    def num_patches(self) -> int:
        return len(self.visible_indices) + len(self.masked_indices)

    def as_bool(self) -> np.ndarray:
        out = np.zeros(self.num_patches, dtype=bool)
        out[list(self.masked_indices)] = True
        return out


def mae_mask(num_patches: int, mask_ratio: float, rng_seed: int | np.random.Generator) -> MaeMask:
    if not 0.0 < mask_ratio < 1.0:
        raise ValueError("mask_ratio must lie in (0, 1)")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    num_masked = int(round(mask_ratio * num_patches))
    order = rng.permutation(num_patches)
    visible = tuple(sorted(int(i) for i in order[num_masked:]))
    masked = tuple(sorted(int(i) for i in order[:num_masked]))
    return MaeMask(mask_ratio, visible, masked)


def _mask_matrix(mask, n: int, length: int) -> torch.Tensor:
    if isinstance(mask, MaeMask):
        m = torch.from_numpy(mask.as_bool()).expand(n, length)
    elif isinstance(mask, (list, tuple)):
        m = torch.from_numpy(np.stack([mm.as_bool() for mm in mask]))
    else:
        m = torch.as_tensor(mask, dtype=torch.bool)
    if m.shape != (n, length):
        raise DimensionError(f"mask shape {tuple(m.shape)} != {(n, length)}")
    return m


def mae_loss(
    predicted_patches: torch.Tensor,
    target_patches: torch.Tensor,
    mask,
    normalize_pixels: bool = True,
) -> torch.Tensor:
    """Mean squared error over masked patches only.

    ``mask`` is a :class:`MaeMask` shared by the batch, a list of per-sample
    masks, or a boolean ``[N, L]`` tensor with True on masked patches.
    """
    if predicted_patches.shape != target_patches.shape:
        raise DimensionError("prediction and target shapes differ")
    n, length, _ = target_patches.shape
    m = _mask_matrix(mask, n, length).to(predicted_patches.dtype)
    if m.sum() == 0:
        raise ValueError("mae_loss needs at least one masked patch")
    target = target_patches
    if normalize_pixels:
        mean = target.mean(dim=-1, keepdim=True)
        var = target.var(dim=-1, keepdim=True)
        target = (target - mean) / (var + 1e-6) ** 0.5
    per_patch = ((predicted_patches - target) ** 2).mean(dim=-1)
    return (per_patch * m).sum() / m.sum()


def batch_masks(n: int, num_patches: int, mask_ratio: float, rng: np.random.Generator) -> list[MaeMask]:
    return [mae_mask(num_patches, mask_ratio, rng) for _ in range(n)]


class MaskedAutoencoder(nn.Module):
    """ViT encoder on visible patches plus a small transformer decoder."""

    def __init__(self, cfg: ViTConfig, decoder_depth: int = 2, decoder_dim: int | None = None,
                 decoder_heads: int | None = None, normalize_pixels: bool = True):
        super().__init__()
        if not cfg.use_position_embedding:
            raise ValueError("MAE needs position embeddings to place mask tokens")
        self.cfg = cfg
        self.normalize_pixels = normalize_pixels
        self.encoder = ViT(cfg)
        dec_dim = decoder_dim or cfg.embed_dim // 2
        if decoder_heads is None:
            decoder_heads = max(h for h in range(1, cfg.num_heads + 1) if dec_dim % h == 0)
        self.decoder_embed = Linear(cfg.embed_dim, dec_dim)
        self.mask_token = nn.Parameter(trunc_normal_(torch.empty(1, 1, dec_dim)))
        extra = 1 if cfg.use_class_token else 0
        self.decoder_pos_embed = nn.Parameter(trunc_normal_(torch.empty(1, cfg.num_patches + extra, dec_dim)))
        self.decoder_blocks = nn.ModuleList(TransformerBlock(dec_dim, decoder_heads) for _ in range(decoder_depth))
        self.decoder_norm = LayerNorm(dec_dim)
        self.decoder_pred = Linear(dec_dim, cfg.patch_pixels)

    def forward(self, images: torch.Tensor, masks: list[MaeMask]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns ``(loss, predictions [N, L, P], mask matrix [N, L])``."""
        n = images.shape[0]
        length = self.cfg.num_patches
        if len(masks) != n:
            raise DimensionError("one mask per image required")
        visible = torch.tensor([m.visible_indices for m in masks], dtype=torch.long)
        x = self.encoder.embed(images)
        x = torch.gather(x, 1, visible.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
        latent = self.encoder.run_blocks(x)

        y = self.decoder_embed(latent)
        extra = 1 if self.cfg.use_class_token else 0
        full = self.mask_token.expand(n, length, -1).clone()
        full = full.scatter(1, visible.unsqueeze(-1).expand(-1, -1, y.shape[-1]), y[:, extra:])
        if extra:
            full = torch.cat([y[:, :1], full], dim=1)
        full = full + self.decoder_pos_embed
        for blk in self.decoder_blocks:
            full = blk(full)
        pred = self.decoder_pred(self.decoder_norm(full))[:, extra:]

        target = patchify(images, self.cfg.patch_size)
        mask_matrix = _mask_matrix(masks, n, length)
        loss = mae_loss(pred, target, mask_matrix, self.normalize_pixels)
        return loss, pred, mask_matrix

