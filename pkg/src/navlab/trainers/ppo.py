"""Rollout collection, GAE and clipped-surrogate PPO for the recurrent policy."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch

from ..navpolicy import AugmentConfig, NavPolicy, PolicyState, action_log_probs, apply_augment, draw_params, entropy, sample_actions
from ..navpolicy.augment import IDENTITY_PARAMS
from ..neuralcore import AdamW, AdamWConfig, clip_grad_norm


@dataclass(frozen=True)
class PpoConfig:
    num_envs: int = 8
    rollout_length: int = 64
    ppo_epochs: int = 2
    minibatches: int = 2
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 2.5e-4
    weight_decay: float = 1e-6
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True

    def __post_init__(self):
        if (self.rollout_length * self.num_envs) % self.minibatches:
            raise ValueError("rollout_length * num_envs must be divisible by minibatches")
        if self.num_envs % self.minibatches:
            # recurrent minibatches hold whole environment sequences
            raise ValueError("num_envs must be divisible by minibatches")
        if self.clip_epsilon <= 0 or not 0 < self.discount <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ValueError("invalid PPO coefficients")

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, message: str, stats: dict):
        super().__init__(f"{message}: {stats}")
        self.stats = stats


@dataclass
class RolloutBuffer:
    """Fields are [T, N] (or [T, N, ...] for observations)."""

    obs: dict
    actions: torch.Tensor
    log_probs: torch.Tensor
    values: torch.Tensor
    rewards: torch.Tensor
    dones: torch.Tensor
    episode_starts: torch.Tensor  # state reset before acting at (t, n)
    init_state: PolicyState
    bootstrap_value: torch.Tensor  # [N]

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.actions.shape)


def obs_to_torch(obs: dict) -> dict:
    out = {}
    for k, v in obs.items():
        t = torch.from_numpy(np.asarray(v))
        out[k] = t.long() if k in ("prev_action",) or (k == "goal" and t.dim() == 1) else t.float()
    return out


def augment_obs(obs: dict, params, cfg: AugmentConfig | None) -> dict:
    if cfg is None or cfg.is_identity:
        return obs
    out = dict(obs)
    for k in ("rgb", "goal"):
        if k in out and out[k].dim() == 4:
            out[k] = apply_augment(out[k], params, cfg)
    return out


class RolloutCollector:
    """Carries environment observations and LSTM state across rollouts."""

    def __init__(self, venv, policy: NavPolicy, augment: AugmentConfig | None = None, seed: int = 0):
        self.venv = venv
        self.policy = policy
        self.augment = augment
        self.rng = np.random.default_rng(seed)
        self.generator = torch.Generator().manual_seed(seed)
        self.obs = venv.reset()
        n = venv.num_envs
        self.state = policy.initial_state(n)
        self.starts = torch.ones(n, dtype=torch.bool)
        self.finished: list[dict] = []
        self.env_steps = 0

    @torch.no_grad()
    def collect(self, length: int) -> RolloutBuffer:
        n = self.venv.num_envs
        params = draw_params(self.augment, self.rng) if self.augment and not self.augment.is_identity else IDENTITY_PARAMS
        init_state = self.state.detach()
        obs_steps, acts, logps, vals, rews, dns, starts = [], [], [], [], [], [], []
        state = self.state
        for _ in range(length):
            o = augment_obs(obs_to_torch(self.obs), params, self.augment)
            starts.append(self.starts.clone())
            state = state.reset_where(self.starts)
            logits, value, state = self.policy(o, state)
            a = sample_actions(logits, self.generator)
            logps.append(action_log_probs(logits, a))
            vals.append(value)
            acts.append(a)
            obs_steps.append(o)
            self.obs, r, d, infos = self.venv.step(a.numpy())
            self.env_steps += n
            rews.append(torch.from_numpy(r))
            dn = torch.from_numpy(d)
            dns.append(dn)
            self.finished.extend(info for info in infos if "success" in info)
            state = state.with_action(a)
            self.starts = dn
        o = augment_obs(obs_to_torch(self.obs), params, self.augment)
        _, bootstrap, _ = self.policy(o, state.reset_where(self.starts))
        self.state = state
        return RolloutBuffer(
            obs={k: torch.stack([s[k] for s in obs_steps]) for k in obs_steps[0] if k != "prev_action"},
            actions=torch.stack(acts), log_probs=torch.stack(logps), values=torch.stack(vals),
            rewards=torch.stack(rews).float(), dones=torch.stack(dns), episode_starts=torch.stack(starts),
            init_state=init_state, bootstrap_value=bootstrap,
        )

    def pop_finished(self) -> list[dict]:
        out, self.finished = self.finished, []
        return out


def collect_rollouts(collector: RolloutCollector, length: int) -> RolloutBuffer:
    return collector.collect(length)


def compute_gae(rewards: torch.Tensor, values: torch.Tensor, dones: torch.Tensor, bootstrap_value: torch.Tensor,
                discount: float = 0.99, gae_lambda: float = 0.95) -> tuple[torch.Tensor, torch.Tensor]:
    """Advantages and returns for [T, ...] arrays; ``dones[t]`` ends the episode after step t."""
    T = rewards.shape[0]
    adv = torch.zeros_like(values)
    not_done = 1.0 - dones.to(values.dtype)
    next_value = bootstrap_value
    next_adv = torch.zeros_like(bootstrap_value)
    for t in reversed(range(T)):
        delta = rewards[t] + discount * next_value * not_done[t] - values[t]
        next_adv = delta + discount * gae_lambda * not_done[t] * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def ppo_loss(logits, values, actions, old_log_probs, advantages, returns, clip_epsilon=0.2,
             value_coef=0.5, entropy_coef=0.01, mask=None):
    """Clipped surrogate + value MSE - entropy bonus, averaged over (masked) samples."""
    logp = action_log_probs(logits, actions)
    ratio = torch.exp(logp - old_log_probs)
    surr = torch.min(ratio * advantages, torch.clamp(ratio, 1 - clip_epsilon, 1 + clip_epsilon) * advantages)
    ent = entropy(logits)
    vloss = (returns - values) ** 2
    clipped = ((ratio - 1).abs() > clip_epsilon).to(logits.dtype)
    if mask is None:
        mask = torch.ones_like(surr)
    denom = mask.sum().clamp_min(1)
    policy_loss = -(surr * mask).sum() / denom
    value_loss = (vloss * mask).sum() / denom
    ent_mean = (ent * mask).sum() / denom
    loss = policy_loss + value_coef * value_loss - entropy_coef * ent_mean
    stats = {
        "policy_loss": policy_loss.detach(),
        "value_loss": value_loss.detach(),
        "entropy": ent_mean.detach(),
        "clip_fraction": ((clipped * mask).sum() / denom).detach(),
    }
    return loss, stats


def make_ppo_optimizer(policy: NavPolicy, cfg: PpoConfig) -> AdamW:
    return AdamW.for_module(policy, AdamWConfig(learning_rate=cfg.learning_rate, weight_decay=cfg.weight_decay))


def ppo_update(buffer: RolloutBuffer, policy: NavPolicy, optimizer: AdamW, cfg: PpoConfig,
               generator: torch.Generator | None = None) -> dict:
    adv, returns = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.bootstrap_value,
                               cfg.discount, cfg.gae_lambda)
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = buffer.actions.shape[1]
    totals: dict[str, float] = {}
    count = 0
    for _ in range(cfg.ppo_epochs):
        perm = torch.randperm(n, generator=generator)
        for idx in perm.chunk(cfg.minibatches):
            obs = {k: v[:, idx] for k, v in buffer.obs.items()}
            logits, values = policy.evaluate_sequence(obs, buffer.init_state.index(idx), buffer.actions[:, idx],
                                                      buffer.episode_starts[:, idx])
            loss, stats = ppo_loss(logits, values, buffer.actions[:, idx], buffer.log_probs[:, idx], adv[:, idx],
                                   returns[:, idx], cfg.clip_epsilon, cfg.value_coef, cfg.entropy_coef)
            if not torch.isfinite(loss):
                raise TrainingDivergedError("non-finite PPO loss", {k: float(v) for k, v in stats.items()})
            optimizer.zero_grad()
            loss.backward()
            stats["grad_norm"] = torch.tensor(clip_grad_norm(optimizer.parameters(), cfg.max_grad_norm))
            optimizer.step()
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + float(v)
            count += 1
    return {k: v / count for k, v in totals.items()}


__all__ = ["PpoConfig", "RolloutBuffer", "RolloutCollector", "TrainingDivergedError", "augment_obs",
           "collect_rollouts", "compute_gae", "make_ppo_optimizer", "obs_to_torch", "ppo_loss", "ppo_update"]

