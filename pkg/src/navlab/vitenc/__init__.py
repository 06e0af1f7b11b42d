"""ViT encoder, patch-grid compression layer, and MAE pretraining pieces."""
from .compression import (
    CompressionLayer,
    CompressionSpec,
    compression_forward,
    create_compression_layer,
    patch_reshape,
    patch_unreshape,
)
from .mae import MaeMask, MaskedAutoencoder, batch_masks, mae_loss, mae_mask
from .vit import VIT_PRESETS, PatchTokens, ViT, ViTConfig, patchify, unpatchify, vit_forward

__all__ = [
    "CompressionLayer", "CompressionSpec", "MaeMask", "MaskedAutoencoder", "PatchTokens", "VIT_PRESETS",
    "ViT", "ViTConfig", "batch_masks", "compression_forward", "create_compression_layer", "mae_loss",
    "mae_mask", "patch_reshape", "patch_unreshape", "patchify", "unpatchify", "vit_forward",
]
