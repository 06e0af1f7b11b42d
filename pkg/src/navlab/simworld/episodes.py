"""Episode specifications, trajectory records, and task success predicates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geodesic import distance_field, geodesic_distance
from .geometry import Action, AgentState, angle_diff, line_of_sight, wrap_angle
from .scene import NUM_CATEGORIES, Scene, SceneConfig, cached_scene

IMAGENAV = "imagenav"
OBJECTNAV = "objectnav"
DEFAULT_FOV = math.pi / 2


@dataclass(frozen=True)
class EpisodeSpec:
    episode_id: str
    task: str
    scene_seed: int
    start: AgentState
    goal: AgentState  # ImageNav: the goal camera pose. ObjectNav: the nearest valid viewpoint.
    max_steps: int
    geodesic_start_to_goal: float
    goal_category: int | None = None

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "task": self.task,
            "scene_seed": self.scene_seed,
            "start": self.start.to_dict(),
            "goal": self.goal.to_dict(),
            "max_steps": self.max_steps,
            "geodesic_start_to_goal": self.geodesic_start_to_goal,
            "goal_category": self.goal_category,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        return cls(
            episode_id=d["episode_id"],
            task=d["task"],
            scene_seed=int(d["scene_seed"]),
            start=AgentState.from_dict(d["start"]),
            goal=AgentState.from_dict(d["goal"]),
            max_steps=int(d["max_steps"]),
            geodesic_start_to_goal=float(d["geodesic_start_to_goal"]),
            goal_category=d.get("goal_category"),
        )


@dataclass(frozen=True)
class StepRecord:
    """State reached after ``action`` together with the measurements taken there."""

    state: AgentState
    action: Action
    d: float
    theta: float
    goal_visible: bool
    collision: bool


@dataclass
class TrajectoryRecord:
    episode: EpisodeSpec
    initial: StepRecord
    steps: list[StepRecord] = field(default_factory=list)
    stop_called: bool = False

    @property
    def final(self) -> StepRecord:
        return self.steps[-1] if self.steps else self.initial

    @property
    def terminated(self) -> bool:
        return self.stop_called or len(self.steps) >= self.episode.max_steps

    @property
    def actions(self) -> list[Action]:
        return [s.action for s in self.steps]

    def path_length(self) -> float:
        total = 0.0
        prev = self.initial.state
        for s in self.steps:
            total += math.hypot(s.state.x - prev.x, s.state.y - prev.y)
            prev = s.state
        return total


@dataclass(frozen=True)
class EpisodeConfig:
    task: str = IMAGENAV
    max_steps: int = 200
    min_geodesic: float = 1.5
    max_geodesic: float = 5.0
    goal_radius: float = 1.0
    theta_mode: str = "heading"  # "heading": vs goal heading; "bearing": vs direction to goal
    fov: float = DEFAULT_FOV
    scene: SceneConfig = SceneConfig()


def measure(scene: Scene, state: AgentState, episode: EpisodeSpec, cfg: EpisodeConfig) -> tuple[float, float, bool]:
    """Distance to goal, angle theta in [0, pi], and whether the goal is in view with clear line of sight."""
    gx, gy = episode.goal.x, episode.goal.y
    d = math.hypot(gx - state.x, gy - state.y)
    bearing = math.atan2(gy - state.y, gx - state.x) if d > 0 else state.heading
    if cfg.theta_mode == "bearing":
        theta = angle_diff(state.heading, bearing)
    else:
        theta = angle_diff(state.heading, episode.goal.heading)
    visible = _goal_visible(scene, state, episode, cfg.fov)
    return d, theta, visible


def _goal_visible(scene: Scene, state: AgentState, episode: EpisodeSpec, fov: float) -> bool:
    if episode.task == OBJECTNAV and episode.goal_category is not None:
        for i, obj in enumerate(scene.objects):
            if obj.category != episode.goal_category:
                continue
            b = math.atan2(obj.position[1] - state.y, obj.position[0] - state.x)
            if angle_diff(b, state.heading) <= fov / 2 and line_of_sight(scene, state.position, obj.position, i):
                return True
        return False
    gx, gy = episode.goal.x, episode.goal.y
    if math.hypot(gx - state.x, gy - state.y) < 1e-9:
        return True
    b = math.atan2(gy - state.y, gx - state.x)
    return angle_diff(b, state.heading) <= fov / 2 and line_of_sight(scene, state.position, (gx, gy))


def new_trajectory(scene: Scene, episode: EpisodeSpec, cfg: EpisodeConfig) -> TrajectoryRecord:
    d, theta, vis = measure(scene, episode.start, episode, cfg)
    return TrajectoryRecord(episode, StepRecord(episode.start, Action.STOP, d, theta, vis, False))


def imagenav_success(traj: TrajectoryRecord, goal_radius: float = 1.0,
                     angle_threshold: float = math.radians(25)) -> tuple[bool, bool]:
    final = traj.final
    success = traj.stop_called and final.d < goal_radius
    return success, success and final.theta < angle_threshold


def objectnav_success(traj: TrajectoryRecord, scene: Scene, goal_category: int, radius: float = 1.0) -> bool:
    if not traj.stop_called:
        return False
    pos = traj.final.state.position
    for i, obj in enumerate(scene.objects):
        if obj.category != goal_category:
            continue
        if math.hypot(obj.position[0] - pos[0], obj.position[1] - pos[1]) <= radius and line_of_sight(
            scene, pos, obj.position, i
        ):
            return True
    return False


def task_success(traj: TrajectoryRecord, scene: Scene, cfg: EpisodeConfig) -> bool:
    if traj.episode.task == OBJECTNAV:
        return objectnav_success(traj, scene, traj.episode.goal_category, cfg.goal_radius)
    return imagenav_success(traj, cfg.goal_radius)[0]


def _random_position(scene: Scene, rng: np.random.Generator) -> tuple[float, float]:
    cells = np.argwhere(scene.navigable)
    r, c = cells[int(rng.integers(len(cells)))]
    cs = scene.cell_size
    jx, jy = rng.uniform(0.1, 0.9, size=2)
    return (c + jx) * cs, (r + jy) * cs


def objectnav_viewpoints(scene: Scene, category: int, radius: float = 1.0) -> list[tuple[float, float, float]]:
    """Navigable cell centres within ``radius`` - cell of an instance with line of sight: (x, y, heading)."""
    out = []
    cs = scene.cell_size
    span = int(math.ceil(radius / cs)) + 1
    for i, obj in enumerate(scene.objects):
        if obj.category != category:
            continue
        r0, c0 = scene.cell_of(*obj.position)
        for r in range(max(0, r0 - span), min(scene.shape[0], r0 + span + 1)):
            for c in range(max(0, c0 - span), min(scene.shape[1], c0 + span + 1)):
                if not scene.navigable[r, c]:
                    continue
                x, y = scene.cell_center((r, c))
                if math.hypot(x - obj.position[0], y - obj.position[1]) > radius - cs:
                    continue
                if line_of_sight(scene, (x, y), obj.position, i):
                    out.append((x, y, wrap_angle(math.atan2(obj.position[1] - y, obj.position[0] - x))))
    return out


def sample_episodes(scene_seeds: list[int], num_episodes: int, seed: int, cfg: EpisodeConfig,
                    id_prefix: str = "ep") -> list[EpisodeSpec]:
    """Deterministic episode set; scenes are visited round-robin."""
    rng = np.random.default_rng(seed)
    episodes = []
    for k in range(num_episodes):
        scene_seed = scene_seeds[k % len(scene_seeds)]
        scene = cached_scene(scene_seed, cfg.scene)
        for _ in range(10_000):
            sx, sy = _random_position(scene, rng)
            start = AgentState(sx, sy, wrap_angle(float(rng.uniform(0, 2 * math.pi))))
            if cfg.task == OBJECTNAV:
                category = int(rng.integers(NUM_CATEGORIES))
                views = objectnav_viewpoints(scene, category, cfg.goal_radius)
                if not views:
                    continue
                field_start = distance_field(scene, scene.cell_of(sx, sy))
                dists = [field_start[scene.cell_of(x, y)] for x, y, _ in views]
                j = int(np.argmin(dists))
                gx, gy, gh = views[j]
                goal = AgentState(gx, gy, gh)
            else:
                category = None
                gx, gy = _random_position(scene, rng)
                goal = AgentState(gx, gy, wrap_angle(float(rng.uniform(0, 2 * math.pi))))
            geo = geodesic_distance(scene, start.position, goal.position)
            euclid = math.hypot(gx - sx, gy - sy)
            if not (cfg.min_geodesic <= geo <= cfg.max_geodesic) or euclid < cfg.goal_radius * 1.25:
                continue
            episodes.append(EpisodeSpec(f"{id_prefix}-{k:05d}", cfg.task, scene_seed, start, goal,
                                        cfg.max_steps, geo, category))
            break
        else:
            raise RuntimeError(f"could not sample an episode in scene {scene_seed}")
    return episodes
