"""Recurrent actor-critic: ViT + compression encoder, goal and previous-action embeddings, LSTM, heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import torch
from torch import nn

from ..neuralcore import CheckpointError, Embedding, Linear, LSTMCell, load_checkpoint, load_into_module, save_module
from ..neuralcore.functional import log_softmax, softmax
from ..vitenc import CompressionLayer, CompressionSpec, ViT, ViTConfig, create_compression_layer

STOP_ACTION = 0
NUM_CATEGORIES = 6
DEFAULT_VECTOR_DIM = 14


@dataclass(frozen=True)
class PolicyConfig:
    encoder: ViTConfig = field(default_factory=ViTConfig)
    approx_output_size: int = 2048
    lstm_hidden: int = 512
    num_actions: int = 4
    goal_mode: str = "image"  # "image" | "category"
    share_encoder_with_goal: bool = True
    obs_mode: str = "image"  # "image" | "vector"
    vector_dim: int = DEFAULT_VECTOR_DIM
    vector_embed_dim: int = 128
    goal_embed_dim: int = 32
    action_embed_dim: int = 32
    num_categories: int = NUM_CATEGORIES

    def __post_init__(self):
        if self.goal_mode not in ("image", "category"):
            raise ValueError(f"unknown goal_mode {self.goal_mode!r}")
        if self.obs_mode not in ("image", "vector"):
            raise ValueError(f"unknown obs_mode {self.obs_mode!r}")

    @property
    def compression(self) -> CompressionSpec:
        return create_compression_layer(self.encoder.embed_dim, self.encoder.num_patches, self.approx_output_size)

    @property
    def goal_feature_size(self) -> int:
        if self.obs_mode == "vector":
            return 0  # the goal compass is part of the vector observation
        return self.compression.output_size if self.goal_mode == "image" else self.goal_embed_dim

    @property
    def obs_feature_size(self) -> int:
        return self.vector_embed_dim if self.obs_mode == "vector" else self.compression.output_size

    @property
    def feature_size(self) -> int:
        return self.obs_feature_size + self.goal_feature_size + self.action_embed_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"] = self.encoder.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        d = dict(d)
        d["encoder"] = ViTConfig(**d["encoder"])
        return cls(**d)


@dataclass
class PolicyState:
    h: torch.Tensor
    c: torch.Tensor
    prev_action: torch.Tensor  # long [B]

    @classmethod
    def initial(cls, batch: int, hidden: int, dtype=torch.float32) -> "PolicyState":
        z = torch.zeros(batch, hidden, dtype=dtype)
        return cls(z, z.clone(), torch.full((batch,), STOP_ACTION, dtype=torch.long))

    def reset_where(self, done: torch.Tensor) -> "PolicyState":
        """Zero the recurrent state and previous action of environments whose episode just ended."""
        keep = (~done.bool()).to(self.h.dtype).unsqueeze(-1)
        prev = torch.where(done.bool(), torch.full_like(self.prev_action, STOP_ACTION), self.prev_action)
        return PolicyState(self.h * keep, self.c * keep, prev)

    def with_action(self, action: torch.Tensor) -> "PolicyState":
        return replace(self, prev_action=action.long())

    def detach(self) -> "PolicyState":
        return PolicyState(self.h.detach(), self.c.detach(), self.prev_action)

    def index(self, idx) -> "PolicyState":
        return PolicyState(self.h[idx], self.c[idx], self.prev_action[idx])


class ImageEncoder(nn.Module):
    """ViT followed by the patch compression layer; class token dropped before reshaping."""

    def __init__(self, vit_cfg: ViTConfig, spec: CompressionSpec):
        super().__init__()
        self.vit = ViT(vit_cfg)
        self.compression = CompressionLayer(spec)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.compression(self.vit(images).tokens)


class NavPolicy(nn.Module):
    def __init__(self, cfg: PolicyConfig = PolicyConfig()):
        super().__init__()
        self.cfg = cfg
        if cfg.obs_mode == "image":
            self.encoder = ImageEncoder(cfg.encoder, cfg.compression)
            if cfg.goal_mode == "image" and not cfg.share_encoder_with_goal:
                self.goal_encoder = ImageEncoder(cfg.encoder, cfg.compression)
        else:
            self.vector_encoder = nn.Sequential(Linear(cfg.vector_dim, cfg.vector_embed_dim), nn.ReLU())
        if cfg.goal_mode == "category" and cfg.obs_mode == "image":
            self.category_embed = Embedding(cfg.num_categories, cfg.goal_embed_dim)
        self.action_embed = Embedding(cfg.num_actions, cfg.action_embed_dim)
        self.lstm = LSTMCell(cfg.feature_size, cfg.lstm_hidden)
        self.actor = Linear(cfg.lstm_hidden, cfg.num_actions)
        self.critic = Linear(cfg.lstm_hidden, 1)
        for head in (self.actor, self.critic):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    # parameter groups used by behavior cloning
    def encoder_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if n.startswith(("encoder.", "goal_encoder."))]

    def head_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if not n.startswith(("encoder.", "goal_encoder."))]

    def initial_state(self, batch: int) -> PolicyState:
        return PolicyState.initial(batch, self.cfg.lstm_hidden, self.actor.weight.dtype)

    def encode_goal(self, goal: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        if cfg.goal_mode == "image":
            if goal.dim() != 4:
                raise ValueError("goal_mode 'image' expects goal images [B,3,H,W]")
            enc = self.encoder if cfg.share_encoder_with_goal else self.goal_encoder
            return enc(goal)
        if goal.dim() != 1 or goal.dtype not in (torch.int64, torch.int32):
            raise ValueError("goal_mode 'category' expects integer category ids [B]")
        return self.category_embed(goal.long())

    def encode_observation(self, obs: dict, state: PolicyState, goal_feature: torch.Tensor | None = None) -> torch.Tensor:
        """Concatenate observation, goal and previous-action features."""
        parts = []
        if self.cfg.obs_mode == "vector":
            parts.append(self.vector_encoder(obs["vector"]))
        else:
            parts.append(self.encoder(obs["rgb"]))
            parts.append(goal_feature if goal_feature is not None else self.encode_goal(obs["goal"]))
        parts.append(self.action_embed(state.prev_action))
        return fuse_features(parts)

    def policy_step(self, feature: torch.Tensor, state: PolicyState):
        if not torch.isfinite(feature).all():
            raise FloatingPointError("non-finite policy feature")
        h, c = self.lstm(feature, (state.h, state.c))
        logits = self.actor(h)
        value = self.critic(h).squeeze(-1)
        return logits, value, PolicyState(h, c, state.prev_action)

    def forward(self, obs: dict, state: PolicyState):
        return self.policy_step(self.encode_observation(obs, state), state)

    def encode_sequence(self, obs: dict, valid: torch.Tensor | None = None) -> dict:
        """Encode image inputs of a [T, B, ...] batch in one pass; returns per-step feature tensors.

        ``valid`` [T, B] marks real steps; padded steps get zero features and skip the encoder.
        A goal image repeated on consecutive steps of a column is encoded once.
        """
        t, b = next(iter(obs.values())).shape[:2]
        out = {}
        if self.cfg.obs_mode == "vector":
            out["obs"] = self.vector_encoder(obs["vector"].reshape(t * b, -1)).reshape(t, b, -1)
            return out
        rgb = obs["rgb"].reshape(t * b, *obs["rgb"].shape[2:])
        if valid is None:
            out["obs"] = self.encoder(rgb).reshape(t, b, -1)
        else:
            keep = valid.reshape(-1).bool()
            feats = self.encoder(rgb[keep])
            full = feats.new_zeros(t * b, feats.shape[-1])
            out["obs"] = full.index_copy(0, keep.nonzero().squeeze(1), feats).reshape(t, b, -1)
        goal = obs["goal"]
        if self.cfg.goal_mode == "image":
            out["goal"] = self._encode_goal_runs(goal)
        else:
            out["goal"] = self.encode_goal(goal.reshape(t * b)).reshape(t, b, -1)
        return out

    def _encode_goal_runs(self, goal: torch.Tensor) -> torch.Tensor:
        """Encode [T, B, 3, H, W] goal images once per run of identical consecutive steps."""
        t, b = goal.shape[:2]
        new = torch.ones(t, b, dtype=torch.bool)
        if t > 1:
            new[1:] = (goal[1:] != goal[:-1]).flatten(2).any(-1)
        col_major = goal.transpose(0, 1).reshape(b * t, *goal.shape[2:])
        first = new.t().reshape(-1)
        feats = self.encode_goal(col_major[first])
        run_index = torch.cumsum(first.long(), 0) - 1
        return feats[run_index].reshape(b, t, -1).transpose(0, 1)

    def evaluate_sequence(self, obs: dict, init_state: PolicyState, actions: torch.Tensor,
                          episode_starts: torch.Tensor, valid: torch.Tensor | None = None):
        """Re-run a [T, B] rollout. ``episode_starts[t]`` marks steps whose state was reset before acting.

        Returns logits [T,B,A] and values [T,B]. Outputs at steps outside ``valid`` are meaningless.
        """
        enc = self.encode_sequence(obs, valid)
        # teacher forcing: every step's previous action is known up front
        starts = episode_starts.bool()
        prev = torch.empty_like(actions)
        prev[0] = init_state.prev_action
        prev[1:] = actions[:-1]
        prev = torch.where(starts, torch.full_like(prev, STOP_ACTION), prev)
        parts = [enc["obs"]]
        if "goal" in enc:
            parts.append(enc["goal"])
        parts.append(self.action_embed(prev))
        features = fuse_features(parts)
        if not torch.isfinite(features).all():
            raise FloatingPointError("non-finite policy feature")
        input_gates = self.lstm.project_input(features)
        h, c = init_state.h, init_state.c
        hs = []
        for t in range(actions.shape[0]):
            keep = (~starts[t]).to(h.dtype).unsqueeze(-1)
            h, c = self.lstm.step_projected(input_gates[t], (h * keep, c * keep))
            hs.append(h)
        hs = torch.stack(hs)
        return self.actor(hs), self.critic(hs).squeeze(-1)


def fuse_features(parts: list[torch.Tensor]) -> torch.Tensor:
    """Goal/observation fusion; concatenation."""
    return torch.cat(parts, dim=-1)


def action_log_probs(logits: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
    return log_softmax(logits, dim=-1).gather(-1, actions.long().unsqueeze(-1)).squeeze(-1)


def entropy(logits: torch.Tensor) -> torch.Tensor:
    logp = log_softmax(logits, dim=-1)
    return -(logp.exp() * logp).sum(-1)


def sample_actions(logits: torch.Tensor, generator: torch.Generator | None = None,
                   deterministic: bool = False) -> torch.Tensor:
    if deterministic:
        return logits.argmax(-1)
    probs = softmax(logits.detach().double(), dim=-1)
    return torch.multinomial(probs, 1, generator=generator).squeeze(-1)


def save_policy(path, policy: NavPolicy, extra: dict | None = None) -> None:
    header = {"kind": "policy", "policy_config": policy.cfg.to_dict()}
    header.update(extra or {})
    save_module(path, policy, header)


def load_policy(path) -> tuple[NavPolicy, dict]:
    tensors, header = load_checkpoint(path)
    if header.get("kind") != "policy":
        raise CheckpointError(f"{path} is not a policy checkpoint")
    policy = NavPolicy(PolicyConfig.from_dict(header["policy_config"]))
    # training checkpoints also carry optimizer moments under "optim/"
    load_into_module(policy, {k: v for k, v in tensors.items() if not k.startswith("optim/")})
    return policy, header


def load_pretrained_encoder(policy: NavPolicy, path) -> list[str]:
    """Copy MAE encoder weights into the policy's ViT; the recorded ViTConfig must match."""
    tensors, header = load_checkpoint(path)
    if header.get("kind") != "mae":
        raise CheckpointError(f"{path} is not an MAE checkpoint")
    if policy.cfg.obs_mode != "image":
        raise CheckpointError("vector-observation policies have no image encoder")
    if ViTConfig(**header["vit_config"]) != policy.cfg.encoder:
        raise CheckpointError("pretrained encoder ViTConfig differs from the policy's encoder config")
    loaded = load_into_module(policy.encoder.vit, tensors, prefix="encoder.")
    if hasattr(policy, "goal_encoder"):
        load_into_module(policy.goal_encoder.vit, tensors, prefix="encoder.")
    return loaded
