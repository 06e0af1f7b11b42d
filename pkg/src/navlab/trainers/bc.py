"""Behavior cloning from oracle demonstrations replayed through the simulator."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..navpolicy import AugmentConfig, NavPolicy, action_log_probs, draw_params
from ..neuralcore import AdamW, AdamWConfig, clip_grad_norm
from ..simworld import Action, NavEnv, replay_demo
from ..simworld.demos import DemoFormatError
from ..simworld.render import to_uint8
from .ppo import augment_obs


@dataclass(frozen=True)
class BcConfig:
    encoder_lr: float = 1e-4
    head_lr: float = 1e-3
    weight_decay: float = 1e-6
    batch_episodes: int = 8
    epochs: int = 10
    max_grad_norm: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DemoEpisode:
    obs: dict  # "rgb" uint8 [T,3,H,W], "goal" uint8 [3,H,W] or int, or "vector" float32 [T,K]
    actions: np.ndarray  # int64 [T]
    episode_id: str


def demo_episode(record: dict, env: NavEnv) -> DemoEpisode:
    """Replay one demo record through ``env`` and capture the observation before every action."""
    ep = record["episode"]
    replay_demo(record, env.cfg.episode)  # validates scene digest and stored states
    obs = env.reset(ep)
    frames = [obs]
    actions = [int(a) for a in record["actions"]]
    for a in actions[:-1]:
        obs, _, done, _ = env.step(a)
        if done:
            raise DemoFormatError(f"episode {ep.episode_id} ended before its last action")
        frames.append(obs)
    out: dict = {}
    if "vector" in frames[0]:
        out["vector"] = np.stack([f["vector"] for f in frames]).astype(np.float32)
    else:
        out["rgb"] = to_uint8(np.stack([f["rgb"] for f in frames]))
    goal = frames[0].get("goal")
    if goal is not None:
        out["goal"] = int(goal) if np.ndim(goal) == 0 else to_uint8(goal)
    return DemoEpisode(out, np.asarray(actions, dtype=np.int64), ep.episode_id)


def build_demo_dataset(records: list[dict], env: NavEnv) -> list[DemoEpisode]:
    return [demo_episode(r, env) for r in records]


def collate_demos(episodes: list[DemoEpisode]) -> dict:
    """Pad to [T_max, B]; returns obs, actions, mask and episode_starts."""
    t_max = max(len(e.actions) for e in episodes)
    b = len(episodes)
    actions = torch.zeros(t_max, b, dtype=torch.long)
    mask = torch.zeros(t_max, b)
    for j, e in enumerate(episodes):
        n = len(e.actions)
        actions[:n, j] = torch.from_numpy(e.actions)
        mask[:n, j] = 1.0
    obs: dict = {}
    first = episodes[0].obs
    if "vector" in first:
        v = torch.zeros(t_max, b, first["vector"].shape[-1])
        for j, e in enumerate(episodes):
            v[: len(e.actions), j] = torch.from_numpy(e.obs["vector"])
        obs["vector"] = v
    else:
        shape = first["rgb"].shape[1:]
        rgb = torch.zeros(t_max, b, *shape)
        for j, e in enumerate(episodes):
            rgb[: len(e.actions), j] = torch.from_numpy(e.obs["rgb"]).float() / 255.0
        obs["rgb"] = rgb
        if isinstance(first.get("goal"), int):
            obs["goal"] = torch.tensor([[e.obs["goal"] for e in episodes]] * t_max, dtype=torch.long)
        elif "goal" in first:
            g = torch.stack([torch.from_numpy(e.obs["goal"]).float() / 255.0 for e in episodes])
            obs["goal"] = g.unsqueeze(0).expand(t_max, *g.shape).contiguous()
    starts = torch.zeros(t_max, b, dtype=torch.bool)
    starts[0] = True
    return {"obs": obs, "actions": actions, "mask": mask, "episode_starts": starts}


def make_bc_optimizer(policy: NavPolicy, cfg: BcConfig) -> AdamW:
    """Two parameter groups: visual encoder and everything else."""
    return AdamW(
        {"encoder": (policy.encoder_parameters(), cfg.encoder_lr), "rest": (policy.head_parameters(), cfg.head_lr)},
        AdamWConfig(learning_rate=cfg.head_lr, weight_decay=cfg.weight_decay),
    )


def bc_loss(logits: torch.Tensor, actions: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Masked cross-entropy and action accuracy."""
    denom = mask.sum().clamp_min(1)
    nll = -(action_log_probs(logits, actions) * mask).sum() / denom
    acc = ((logits.argmax(-1) == actions).to(mask.dtype) * mask).sum() / denom
    return nll, acc


def _forward(batch: dict, policy: NavPolicy, augment: AugmentConfig | None, rng: np.random.Generator | None):
    obs = batch["obs"]
    if augment is not None and not augment.is_identity:
        obs = augment_obs(obs, draw_params(augment, rng), augment)
    b = batch["actions"].shape[1]
    return policy.evaluate_sequence(obs, policy.initial_state(b), batch["actions"], batch["episode_starts"],
                                   batch["mask"] > 0)[0]


def bc_update(batch: dict, policy: NavPolicy, optimizer: AdamW, cfg: BcConfig = BcConfig(),
              augment: AugmentConfig | None = None, rng: np.random.Generator | None = None) -> dict:
    logits = _forward(batch, policy, augment, rng)
    loss, acc = bc_loss(logits, batch["actions"], batch["mask"])
    if not torch.isfinite(loss):
        raise FloatingPointError("non-finite BC loss")
    optimizer.zero_grad()
    loss.backward()
    clip_grad_norm(optimizer.parameters(), cfg.max_grad_norm)
    optimizer.step()
    return {"loss": float(loss.detach()), "action_accuracy": float(acc)}


@torch.no_grad()
def bc_evaluate(episodes: list[DemoEpisode], policy: NavPolicy, batch_episodes: int = 16,
                augment: AugmentConfig | None = None, seed: int = 0) -> dict:
    """Teacher-forced loss and action accuracy over ``episodes``."""
    rng = np.random.default_rng(seed)
    tot_loss = tot_acc = tot_n = 0.0
    for i in range(0, len(episodes), batch_episodes):
        batch = collate_demos(episodes[i:i + batch_episodes])
        logits = _forward(batch, policy, augment, rng)
        loss, acc = bc_loss(logits, batch["actions"], batch["mask"])
        n = float(batch["mask"].sum())
        tot_loss += float(loss) * n
        tot_acc += float(acc) * n
        tot_n += n
    return {"loss": tot_loss / tot_n, "action_accuracy": tot_acc / tot_n}


def bc_epoch(episodes: list[DemoEpisode], policy: NavPolicy, optimizer: AdamW, cfg: BcConfig,
             rng: np.random.Generator, augment: AugmentConfig | None = None) -> dict:
    order = rng.permutation(len(episodes))
    stats = []
    for i in range(0, len(order), cfg.batch_episodes):
        batch = collate_demos([episodes[j] for j in order[i:i + cfg.batch_episodes]])
        stats.append(bc_update(batch, policy, optimizer, cfg, augment, rng))
    return {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}


__all__ = ["Action", "BcConfig", "DemoEpisode", "bc_epoch", "bc_evaluate", "bc_loss", "bc_update",
           "build_demo_dataset", "collate_demos", "demo_episode", "make_bc_optimizer"]
