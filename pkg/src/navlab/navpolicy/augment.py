"""Batch-consistent color jitter followed by a random replicate-pad shift.

One parameter draw is shared by every image in a call. Training code draws once
per rollout and re-applies the same parameters at update time, so an episode
sees one augmentation across time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class AugmentConfig:
    jitter_strength: float = 0.3
    shift_pad: int = 4
    apply_at_eval: bool = True

    def __post_init__(self):
        if not 0.0 <= self.jitter_strength < 1.0:
            raise ValueError("jitter_strength must lie in [0, 1)")
        if self.shift_pad < 0:
            raise ValueError("shift_pad must be non-negative")

    @property
    def is_identity(self) -> bool:
        return self.jitter_strength == 0.0 and self.shift_pad == 0


AUGMENT_PRESETS = {
    "none": AugmentConfig(0.0, 0, False),
    "imagenav": AugmentConfig(0.3, 4),
    "objectnav": AugmentConfig(0.4, 16),
}


@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 1.0
    contrast: float = 1.0
    saturation: float = 1.0
    hue: float = 0.0  # radians
    shift: tuple[int, int] = (0, 0)  # crop offset (dy, dx) relative to the centred crop, in [-pad, pad]


IDENTITY_PARAMS = AugmentParams()


def draw_params(cfg: AugmentConfig, rng: np.random.Generator | int | None) -> AugmentParams:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    s, p = cfg.jitter_strength, cfg.shift_pad
    b, c, sat = (float(v) for v in rng.uniform(1 - s, 1 + s, size=3))
    hue = float(rng.uniform(-s * math.pi, s * math.pi))
    dy, dx = (int(v) for v in rng.integers(-p, p + 1, size=2))
    return AugmentParams(b, c, sat, hue, (dy, dx))


_GRAY = (0.299, 0.587, 0.114)


def _gray(x: torch.Tensor) -> torch.Tensor:
    return _GRAY[0] * x[:, 0:1] + _GRAY[1] * x[:, 1:2] + _GRAY[2] * x[:, 2:3]


def _rotate_hue(x: torch.Tensor, angle: float) -> torch.Tensor:
    # rotation about the gray axis in YIQ space
    to_yiq = x.new_tensor([[0.299, 0.587, 0.114], [0.596, -0.274, -0.322], [0.211, -0.523, 0.312]])
    c, s = math.cos(angle), math.sin(angle)
    rot = x.new_tensor([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    m = torch.linalg.inv(to_yiq) @ rot @ to_yiq
    return torch.einsum("ij,bjhw->bihw", m, x)


def color_jitter(x: torch.Tensor, p: AugmentParams) -> torch.Tensor:
    if p.brightness != 1.0:
        x = (x * p.brightness).clamp(0, 1)
    if p.contrast != 1.0:
        mean = _gray(x).mean(dim=(1, 2, 3), keepdim=True)
        x = (mean + (x - mean) * p.contrast).clamp(0, 1)
    if p.saturation != 1.0:
        g = _gray(x)
        x = (g + (x - g) * p.saturation).clamp(0, 1)
    if p.hue != 0.0:
        x = _rotate_hue(x, p.hue).clamp(0, 1)
    return x


def random_shift(x: torch.Tensor, pad: int, shift: tuple[int, int]) -> torch.Tensor:
    if pad == 0:
        return x
    dy, dx = shift
    if abs(dy) > pad or abs(dx) > pad:
        raise ValueError("shift exceeds the padding")
    h, w = x.shape[-2:]
    padded = F.pad(x, (pad, pad, pad, pad), mode="replicate")
    return padded[..., pad + dy:pad + dy + h, pad + dx:pad + dx + w]


def apply_augment(images: torch.Tensor, params: AugmentParams, cfg: AugmentConfig) -> torch.Tensor:
    if cfg.is_identity:
        return images
    return random_shift(color_jitter(images, params), cfg.shift_pad, params.shift).contiguous()


def augment_batch(images: torch.Tensor, cfg: AugmentConfig,
                  rng_seed: np.random.Generator | int | None = None) -> torch.Tensor:
    """Augment ``images`` [B,3,H,W] in [0,1] with a single parameter draw for the whole batch."""
    if cfg.is_identity:
        return images
    return apply_augment(images, draw_params(cfg, rng_seed), cfg)
