"""Shortest-path oracle agent and demonstration generation.

The oracle plans with A* over the agent's own discrete action lattice, so every
planned forward move is collision free by construction. Positions are merged on a
half-cell grid and headings on the 30 degree lattice.
"""
from __future__ import annotations

import heapq
import itertools
import math

import numpy as np

from .episodes import (OBJECTNAV, EpisodeConfig, EpisodeSpec, StepRecord, TrajectoryRecord, measure,
                       new_trajectory, task_success)
from .geodesic import distance_field
from .geometry import FORWARD_STEP, TURN_ANGLE, Action, AgentState, angle_diff, line_of_sight, signed_angle, step
from .scene import Scene

ARRIVE_RADIUS = 0.2
ALIGN_TOLERANCE = TURN_ANGLE / 2
MAX_EXPANSIONS = 200_000


class UnreachableGoalError(ValueError):
    pass


class OracleAgent:
    """Plans a minimum-action route to the goal and replays it.

    ImageNav: reach within 0.2 m of the goal position, face the goal heading, STOP.
    ObjectNav: reach any position satisfying the success predicate, face the object, STOP.
    If the observed state departs from the plan, the agent replans from there.
    """

    def __init__(self, scene: Scene, episode: EpisodeSpec, goal_radius: float = 1.0):
        self.scene = scene
        self.episode = episode
        self.goal = episode.goal
        self.goal_radius = goal_radius
        self.goal_cell = scene.cell_of(self.goal.x, self.goal.y)
        if not scene.in_bounds(self.goal_cell) or not scene.navigable[self.goal_cell]:
            raise UnreachableGoalError("goal is not navigable")
        self.field = distance_field(scene, self.goal_cell)
        start_cell = scene.cell_of(episode.start.x, episode.start.y)
        if not np.isfinite(self.field[start_cell]):
            raise UnreachableGoalError(f"goal unreachable in scene {episode.scene_seed}")
        self._targets = [i for i, o in enumerate(scene.objects) if o.category == episode.goal_category]
        self._plan: list[Action] = []
        self._expected: AgentState | None = None

    # goal test and final heading -------------------------------------------------
    def _goal_heading(self, state: AgentState) -> float | None:
        """Heading to face before stopping, or None if ``state`` is not an arrival position."""
        if self.episode.task == OBJECTNAV:
            best = None
            for i in self._targets:
                ox, oy = self.scene.objects[i].position
                dist = math.hypot(ox - state.x, oy - state.y)
                # small margin so the stop position is robustly inside the radius
                if dist <= self.goal_radius - 0.05 and line_of_sight(self.scene, state.position, (ox, oy), i):
                    if best is None or dist < best[0]:
                        best = (dist, math.atan2(oy - state.y, ox - state.x))
            return None if best is None else best[1]
        if math.dist(state.position, self.goal.position) < ARRIVE_RADIUS:
            return self.goal.heading
        return None

    def _heuristic(self, state: AgentState) -> float:
        cell = self.scene.cell_of(state.x, state.y)
        slack = self.goal_radius if self.episode.task == OBJECTNAV else ARRIVE_RADIUS
        return max(0.0, float(self.field[cell]) - slack - self.scene.cell_size) / FORWARD_STEP

    def _key(self, state: AgentState) -> tuple[int, int, int]:
        q = self.scene.cell_size / 2
        return (int(math.floor(state.x / q)), int(math.floor(state.y / q)),
                int(round(state.heading / TURN_ANGLE)) % 12)

    def plan(self, start: AgentState) -> list[Action]:
        tie = itertools.count()
        frontier = [(self._heuristic(start), next(tie), 0, start, None)]
        parents: dict = {}
        seen = {self._key(start): 0}
        expansions = 0
        while frontier:
            _, _, g, state, link = heapq.heappop(frontier)
            expansions += 1
            if expansions > MAX_EXPANSIONS:
                break
            heading = self._goal_heading(state)
            if heading is not None:
                actions = []
                while link is not None:
                    action, link = link
                    actions.append(action)
                actions.reverse()
                return actions + _turns_to(state.heading, heading) + [Action.STOP]
            for action in (Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT):
                nxt, collided = step(self.scene, state, action)
                if collided:
                    continue
                key = self._key(nxt)
                if seen.get(key, math.inf) <= g + 1:
                    continue
                seen[key] = g + 1
                heapq.heappush(frontier, (g + 1 + self._heuristic(nxt), next(tie), g + 1, nxt, (action, link)))
        raise UnreachableGoalError(f"no action sequence reaches the goal of {self.episode.episode_id}")

    def act(self, state: AgentState) -> Action:
        if not self._plan or self._expected is None or not _same(state, self._expected):
            self._plan = self.plan(state)
        action = self._plan.pop(0)
        self._expected = step(self.scene, state, action)[0]
        return action


def _turns_to(heading: float, target: float) -> list[Action]:
    err = signed_angle(target, heading)
    n = int(round(abs(err) / TURN_ANGLE))
    return [Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT] * n


def _same(a: AgentState, b: AgentState) -> bool:
    return abs(a.x - b.x) < 1e-9 and abs(a.y - b.y) < 1e-9 and angle_diff(a.heading, b.heading) < 1e-9


def rollout_oracle(scene: Scene, episode: EpisodeSpec, cfg: EpisodeConfig) -> TrajectoryRecord:
    agent = OracleAgent(scene, episode, cfg.goal_radius)
    traj = new_trajectory(scene, episode, cfg)
    state = episode.start
    while len(traj.steps) < episode.max_steps:
        action = agent.act(state)
        state, collision = step(scene, state, action)
        d, theta, vis = measure(scene, state, episode, cfg)
        traj.steps.append(StepRecord(state, action, d, theta, vis, collision))
        if action == Action.STOP:
            traj.stop_called = True
            break
    return traj


def oracle_demonstration(scene: Scene, episode: EpisodeSpec, cfg: EpisodeConfig) -> TrajectoryRecord:
    """Oracle trajectory that is required to succeed; raises otherwise."""
    traj = rollout_oracle(scene, episode, cfg)
    if not task_success(traj, scene, cfg):
        raise RuntimeError(f"oracle failed on episode {episode.episode_id}")
    return traj


__all__ = ["OracleAgent", "UnreachableGoalError", "oracle_demonstration", "rollout_oracle", "ARRIVE_RADIUS"]
