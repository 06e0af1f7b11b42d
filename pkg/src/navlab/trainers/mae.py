"""Masked-autoencoder pretraining on frames rendered along oracle paths."""
from __future__ import annotations

import numpy as np
import torch

from ..neuralcore import AdamW
from ..simworld import EpisodeConfig, cached_scene, render_observation, rollout_oracle, sample_episodes
from ..vitenc import MaskedAutoencoder, batch_masks


def build_frame_dataset(scene_seeds: list[int], num_frames: int, seed: int, image_size: int = 64,
                        cfg: EpisodeConfig = EpisodeConfig()) -> torch.Tensor:
    """Float32 frames [M,3,H,W] rendered at every pose of oracle trajectories, in episode order."""
    frames: list[np.ndarray] = []
    batch = 0
    while len(frames) < num_frames:
        for ep in sample_episodes(scene_seeds, 32, seed * 1000 + batch, cfg, id_prefix=f"mae{batch}"):
            scene = cached_scene(ep.scene_seed, cfg.scene)
            traj = rollout_oracle(scene, ep, cfg)
            for s in [traj.initial] + traj.steps:
                frames.append(render_observation(scene, s.state, image_size, image_size, cfg.fov))
                if len(frames) == num_frames:
                    break
            if len(frames) == num_frames:
                break
        batch += 1
    return torch.from_numpy(np.stack(frames))


def mae_pretrain_epoch(frames: torch.Tensor, model: MaskedAutoencoder, mask_ratio: float, optimizer: AdamW,
                       batch_size: int = 64, rng: np.random.Generator | None = None) -> float:
    """One shuffled pass; returns the mean masked reconstruction loss."""
    if len(frames) == 0:
        raise ValueError("empty frame dataset")
    rng = rng if rng is not None else np.random.default_rng(0)
    order = rng.permutation(len(frames))
    losses = []
    for i in range(0, len(order), batch_size):
        idx = torch.from_numpy(order[i:i + batch_size])
        images = frames[idx]
        masks = batch_masks(len(idx), model.cfg.num_patches, mask_ratio, rng)
        loss, _, _ = model(images, masks)
        if not torch.isfinite(loss):
            raise FloatingPointError("non-finite MAE loss")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()) * len(idx))
    return sum(losses) / len(frames)


@torch.no_grad()
def mae_evaluate(frames: torch.Tensor, model: MaskedAutoencoder, mask_ratio: float, seed: int = 0,
                 batch_size: int = 128) -> float:
    """Mean masked loss with masks fixed by ``seed`` (comparable across checkpoints)."""
    if len(frames) == 0:
        raise ValueError("empty frame dataset")
    rng = np.random.default_rng(seed)
    total = 0.0
    for i in range(0, len(frames), batch_size):
        images = frames[i:i + batch_size]
        masks = batch_masks(len(images), model.cfg.num_patches, mask_ratio, rng)
        loss, _, _ = model(images, masks)
        total += float(loss) * len(images)
    return total / len(frames)


def save_mae(path, model: MaskedAutoencoder, extra: dict | None = None) -> None:
    from ..neuralcore import save_module

    header = {"kind": "mae", "vit_config": model.cfg.to_dict(), "normalize_pixels": model.normalize_pixels}
    header.update(extra or {})
    save_module(path, model, header)
