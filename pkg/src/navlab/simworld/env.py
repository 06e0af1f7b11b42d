"""Gym-style navigation environments with reward integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..rewardlab import RewardConfig, StepInfo, get_reward_fn
from .episodes import OBJECTNAV, EpisodeConfig, EpisodeSpec, StepRecord, TrajectoryRecord, measure, new_trajectory, task_success
from .geometry import Action, AgentState, raycast_columns, signed_angle, step
from .render import render_observation
from .scene import cached_scene

NUM_SCAN_RAYS = 8
SCAN_RANGE = 3.0
VECTOR_OBS_DIM = 6 + NUM_SCAN_RAYS


@dataclass(frozen=True)
class EnvConfig:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    obs_mode: str = "image"  # "image" | "vector"
    image_size: int = 64
    reward: str = "zer"
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        if self.obs_mode not in ("image", "vector"):
            raise ValueError(f"unknown obs_mode {self.obs_mode!r}")
        get_reward_fn(self.reward)


def vector_observation(scene, state: AgentState, episode: EpisodeSpec, collided: bool) -> np.ndarray:
    """Goal compass, goal-heading error, last collision and a coarse range scan, as float32."""
    gx, gy = episode.goal.position
    d = math.hypot(gx - state.x, gy - state.y)
    rel = signed_angle(math.atan2(gy - state.y, gx - state.x), state.heading) if d > 1e-9 else 0.0
    head = signed_angle(episode.goal.heading, state.heading)
    angles = state.heading + np.linspace(-math.pi, math.pi, NUM_SCAN_RAYS, endpoint=False)
    dist, *_ = raycast_columns(scene.occupancy, state.x, state.y, angles, scene.cell_size, SCAN_RANGE)
    out = np.empty(VECTOR_OBS_DIM, dtype=np.float32)
    out[:6] = (min(d, 5.0) / 5.0, math.sin(rel), math.cos(rel), math.sin(head), math.cos(head), float(collided))
    out[6:] = np.minimum(dist, SCAN_RANGE) / SCAN_RANGE
    return out


class NavEnv:
    """Single environment cycling through a fixed episode list in a seeded random order."""

    def __init__(self, episodes: list[EpisodeSpec], cfg: EnvConfig = EnvConfig(), seed: int = 0):
        if not episodes:
            raise ValueError("NavEnv needs at least one episode")
        self.episodes = list(episodes)
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.reward_fn = get_reward_fn(cfg.reward)
        self.episode: EpisodeSpec | None = None
        self.traj: TrajectoryRecord | None = None
        self._goal_image = None

    def _obs(self, collided: bool = False) -> dict:
        ep, state = self.episode, self.state
        obs: dict = {"prev_action": int(self.prev_action)}
        if self.cfg.obs_mode == "vector":
            obs["vector"] = vector_observation(self.scene, state, ep, collided)
        else:
            s = self.cfg.image_size
            obs["rgb"] = render_observation(self.scene, state, s, s, self.cfg.episode.fov)
        if ep.task == OBJECTNAV:
            obs["goal"] = int(ep.goal_category)
        elif self.cfg.obs_mode == "image":
            obs["goal"] = self._goal_image
        return obs

    def reset(self, episode: EpisodeSpec | None = None) -> dict:
        if episode is None:
            episode = self.episodes[int(self.rng.integers(len(self.episodes)))]
        self.episode = episode
        self.scene = cached_scene(episode.scene_seed, self.cfg.episode.scene)
        self.state = episode.start
        self.prev_action = Action.STOP
        self.traj = new_trajectory(self.scene, episode, self.cfg.episode)
        if self.cfg.obs_mode == "image" and episode.task != OBJECTNAV:
            s = self.cfg.image_size
            self._goal_image = render_observation(self.scene, episode.goal, s, s, self.cfg.episode.fov)
        return self._obs()

    def step(self, action: int) -> tuple[dict, float, bool, dict]:
        if self.traj is None or self.traj.terminated:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = Action(int(action))
        prev = self.traj.final
        self.state, collided = step(self.scene, self.state, action)
        d, theta, vis = measure(self.scene, self.state, self.episode, self.cfg.episode)
        self.traj.steps.append(StepRecord(self.state, action, d, theta, vis, collided))
        if action == Action.STOP:
            self.traj.stop_called = True
        reward, _ = self.reward_fn(StepInfo(prev.d, min(prev.theta, math.pi), prev.action),
                                   StepInfo(d, min(theta, math.pi), action), self.cfg.reward_cfg)
        self.prev_action = action
        done = self.traj.terminated
        info: dict = {"collision": collided}
        if done:
            success = task_success(self.traj, self.scene, self.cfg.episode)
            geo = self.episode.geodesic_start_to_goal
            info.update(success=success, spl=float(success) * geo / max(self.traj.path_length(), geo),
                        episode_id=self.episode.episode_id, trajectory=self.traj)
        return self._obs(collided), float(reward), done, info


class VectorNavEnv:
    """Synchronous batch of NavEnvs with auto-reset. Observations are stacked along axis 0."""

    def __init__(self, envs: list[NavEnv]):
        self.envs = envs

    @classmethod
    def from_episodes(cls, episodes: list[EpisodeSpec], num_envs: int, cfg: EnvConfig, seed: int) -> "VectorNavEnv":
        seeds = np.random.SeedSequence(seed).spawn(num_envs)
        return cls([NavEnv(episodes, cfg, int(s.generate_state(1)[0])) for s in seeds])

    @property
    def num_envs(self) -> int:
        return len(self.envs)

    def reset(self) -> dict:
        return stack_obs([e.reset() for e in self.envs])

    def step(self, actions) -> tuple[dict, np.ndarray, np.ndarray, list[dict]]:
        obs, rewards, dones, infos = [], [], [], []
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            try:
                o, r, d, info = env.step(int(a))
            except Exception as exc:
                raise RuntimeError(f"env {i} failed to step") from exc
            if d:
                o = env.reset()
            obs.append(o)
            rewards.append(r)
            dones.append(d)
            infos.append(info)
        return stack_obs(obs), np.asarray(rewards, dtype=np.float32), np.asarray(dones, dtype=bool), infos


def stack_obs(obs: list[dict]) -> dict:
    return {k: np.stack([np.asarray(o[k]) for o in obs]) for k in obs[0]}
