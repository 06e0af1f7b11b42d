"""Evaluation driver and report serialization."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..navpolicy import AugmentConfig, NavPolicy, apply_augment, draw_params, sample_actions
from ..rewardlab import RewardConfig
from ..simworld import Action, EnvConfig, EpisodeSpec, NavEnv, OracleAgent
from ..trainers.ppo import obs_to_torch
from .metrics import classify_failure, episode_success, spl_term

REPORT_SCHEMA_VERSION = 1


@dataclass
class EpisodeRow:
    episode_id: str
    success: bool
    angle_success: bool
    spl: float
    path_length: float
    geodesic: float
    num_steps: int
    failure_category: str


@dataclass
class EvalReport:
    task: str
    seed: int
    rows: list[EpisodeRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def num_episodes(self) -> int:
        return len(self.rows)

    @property
    def success_rate(self) -> float:
        return float(np.mean([r.success for r in self.rows])) if self.rows else 0.0

    @property
    def spl(self) -> float:
        return float(np.mean([r.spl for r in self.rows])) if self.rows else 0.0

    @property
    def angle_success_rate(self) -> float:
        return float(np.mean([r.angle_success for r in self.rows])) if self.rows else 0.0

    def failure_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.failure_category] = out.get(r.failure_category, 0) + 1
        return dict(sorted(out.items()))

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "task": self.task,
            "seed": self.seed,
            "num_episodes": self.num_episodes,
            "success_rate": self.success_rate,
            "spl": self.spl,
            "angle_success_rate": self.angle_success_rate,
            "failure_counts": self.failure_counts(),
            "metadata": self.metadata,
            "episodes": [asdict(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(EpisodeRow.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(asdict(r))
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')}")
        return cls(d["task"], d["seed"], [EpisodeRow(**r) for r in d["episodes"]], d.get("metadata", {}))


class Agent:
    """Evaluation agent interface. ``act`` may inspect the environment (privileged baselines do)."""

    def reset(self, episode: EpisodeSpec, rng: np.random.Generator) -> None:
        pass

    def act(self, obs: dict, env: NavEnv) -> int:
        raise NotImplementedError


class OracleEvalAgent(Agent):
    def reset(self, episode, rng):
        self._oracle = None

    def act(self, obs, env):
        if self._oracle is None:
            self._oracle = OracleAgent(env.scene, env.episode, env.cfg.episode.goal_radius)
        return int(self._oracle.act(env.state))


class AlwaysStopAgent(Agent):
    def act(self, obs, env):
        return int(Action.STOP)


class RandomAgent(Agent):
    """Uniform over the four actions."""

    def reset(self, episode, rng):
        self.rng = rng

    def act(self, obs, env):
        return int(self.rng.integers(4))


class PolicyAgent(Agent):
    """Runs a NavPolicy; one augmentation draw per episode when ``augment.apply_at_eval``."""

    def __init__(self, policy: NavPolicy, augment: AugmentConfig | None = None, deterministic: bool = False):
        self.policy = policy.eval()
        self.augment = augment if augment is not None and augment.apply_at_eval and not augment.is_identity else None
        self.deterministic = deterministic

    def reset(self, episode, rng):
        self.state = self.policy.initial_state(1)
        self.params = draw_params(self.augment, rng) if self.augment else None
        self.generator = torch.Generator().manual_seed(int(rng.integers(2**31)))

    @torch.no_grad()
    def act(self, obs, env):
        o = obs_to_torch({k: np.asarray(v)[None] for k, v in obs.items()})
        if self.augment:
            for k in ("rgb", "goal"):
                if k in o and o[k].dim() == 4:
                    o[k] = apply_augment(o[k], self.params, self.augment)
        logits, _, self.state = self.policy(o, self.state)
        a = sample_actions(logits, self.generator, self.deterministic)
        self.state = self.state.with_action(a)
        return int(a[0])


def evaluate(agent: Agent, episodes: list[EpisodeSpec], env_cfg: EnvConfig, seed: int,
             reward_cfg: RewardConfig | None = None, keep_trajectories: bool = False):
    """Run every episode once; returns an EvalReport (and trajectories if requested)."""
    reward_cfg = reward_cfg or env_cfg.reward_cfg
    env = NavEnv(episodes, env_cfg, seed)
    report = EvalReport(episodes[0].task if episodes else env_cfg.episode.task, seed)
    trajs = []
    for i, ep in enumerate(episodes):
        rng = np.random.default_rng([seed, i])
        obs = env.reset(ep)
        agent.reset(ep, rng)
        done = False
        while not done:
            obs, _, done, _ = env.step(agent.act(obs, env))
        traj = env.traj
        success, angle_ok = episode_success(traj, reward_cfg, env.scene)
        category = classify_failure(traj, ep, reward_cfg, env.scene)
        path = traj.path_length()
        report.rows.append(EpisodeRow(ep.episode_id, bool(success), bool(angle_ok),
                                      spl_term(success, ep.geodesic_start_to_goal, path), path,
                                      ep.geodesic_start_to_goal, len(traj.steps), category.value))
        if keep_trajectories:
            trajs.append(traj)
    return (report, trajs) if keep_trajectories else report
