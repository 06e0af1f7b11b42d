"""Success rate, SPL and the geometric failure taxonomy."""
from __future__ import annotations

import math
from collections import Counter
from enum import Enum
from typing import Iterable

from ..rewardlab import RewardConfig
from ..simworld import OBJECTNAV, TrajectoryRecord, imagenav_success, objectnav_success

LOOKING_TOWARD = math.radians(45)
NEARLY_MIN, NEARLY_MAX = 1.0, 1.5
LOOP_RADIUS = 2.0
LOOP_FRACTION = 0.5
FAR_STOP = 3.0
MODAL_CELL = 0.25


class FailureCategory(str, Enum):
    SUCCESS = "Success"
    NEARLY_REACHED = "NearlyReached"
    SLIGHTLY_FAR = "SlightlyFar"
    DIDNT_STOP = "DidntStop"
    EXPLORATION_FAILURE = "ExplorationFailure"
    UNKNOWN = "Unknown"


def spl_term(success: bool, geodesic: float, path_length: float) -> float:
    if geodesic <= 0:
        raise ValueError("geodesic distance must be positive")
    if path_length < 0:
        raise ValueError("path length must be non-negative")
    return float(success) * geodesic / max(path_length, geodesic)


def spl(episodes: Iterable[tuple[bool, float, float]]) -> float:
    """Mean over (success, geodesic l_i, path length p_i) of S_i * l_i / max(p_i, l_i)."""
    terms = [spl_term(s, l, p) for s, l, p in episodes]
    if not terms:
        raise ValueError("no episodes")
    return sum(terms) / len(terms)


def episode_success(traj: TrajectoryRecord, cfg: RewardConfig = RewardConfig(), scene=None) -> tuple[bool, bool]:
    """(success, angle_success) under the episode's task predicate."""
    if traj.episode.task == OBJECTNAV:
        if scene is None:
            raise ValueError("ObjectNav success needs the scene for line-of-sight checks")
        ok = objectnav_success(traj, scene, traj.episode.goal_category, cfg.r_g)
        return ok, ok and traj.final.theta < cfg.theta_g
    return imagenav_success(traj, cfg.r_g, cfg.theta_g)


def _loops_locally(traj: TrajectoryRecord) -> bool:
    pts = [s.state.position for s in traj.steps]
    if not pts:
        return False
    cells = Counter((math.floor(x / MODAL_CELL), math.floor(y / MODAL_CELL)) for x, y in pts)
    # ties broken by the smallest cell index for determinism
    (cx, cy), _ = min(cells.items(), key=lambda kv: (-kv[1], kv[0]))
    mx, my = (cx + 0.5) * MODAL_CELL, (cy + 0.5) * MODAL_CELL
    inside = sum(math.hypot(x - mx, y - my) <= LOOP_RADIUS for x, y in pts)
    return inside >= LOOP_FRACTION * len(pts)


def classify_failure(traj: TrajectoryRecord, episode=None, cfg: RewardConfig = RewardConfig(),
                     scene=None) -> FailureCategory:
    """First-match geometric failure category of a finished trajectory."""
    if not traj.terminated:
        raise ValueError("trajectory has not terminated")
    if episode is not None and episode != traj.episode:
        raise ValueError("trajectory belongs to a different episode")
    if episode_success(traj, cfg, scene)[0]:
        return FailureCategory.SUCCESS
    final = traj.final
    looking = final.theta < LOOKING_TOWARD
    if traj.stop_called and NEARLY_MIN <= final.d <= NEARLY_MAX and looking:
        return FailureCategory.NEARLY_REACHED
    if traj.stop_called and final.d > NEARLY_MAX and looking:
        return FailureCategory.SLIGHTLY_FAR
    if not traj.stop_called and any(s.goal_visible and s.d < 2 * cfg.r_g for s in [traj.initial] + traj.steps):
        return FailureCategory.DIDNT_STOP
    if _loops_locally(traj) or (traj.stop_called and final.d > FAR_STOP):
        return FailureCategory.EXPLORATION_FAILURE
    return FailureCategory.UNKNOWN
