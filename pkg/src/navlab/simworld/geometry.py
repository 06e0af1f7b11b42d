"""Agent kinematics, collision checks, line of sight and grid raycasting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numba
import numpy as np

FORWARD_STEP = 0.25
TURN_ANGLE = math.pi / 6
TWO_PI = 2 * math.pi


class Action(IntEnum):
    STOP = 0
    MOVE_FORWARD = 1
    TURN_LEFT = 2
    TURN_RIGHT = 3


NUM_ACTIONS = len(Action)


@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    heading: float  # radians in [0, 2*pi)

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentState":
        return cls(float(d["x"]), float(d["y"]), float(d["heading"]))


def wrap_angle(a: float) -> float:
    a = math.fmod(a, TWO_PI)
    if a < 0:
        a += TWO_PI
    return 0.0 if a >= TWO_PI else a


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute difference between two angles, in [0, pi]."""
    d = abs(math.fmod(a - b, TWO_PI))
    return TWO_PI - d if d > math.pi else d


def signed_angle(target: float, current: float) -> float:
    """Signed rotation from ``current`` to ``target`` in (-pi, pi]; positive = counter-clockwise."""
    d = math.fmod(target - current, TWO_PI)
    if d > math.pi:
        d -= TWO_PI
    elif d <= -math.pi:
        d += TWO_PI
    return d


def segment_navigable(scene, p: tuple[float, float], q: tuple[float, float]) -> bool:
    """True when every sample on p->q (spacing a quarter cell) lies in a navigable cell."""
    return bool(_segment_ok(scene.navigable, p[0], p[1], q[0], q[1], scene.cell_size))


@numba.njit(cache=True)
def _segment_ok(grid, x0, y0, x1, y1, cs):
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(1, int(math.ceil(length / (cs * 0.25))))
    rows, cols = grid.shape
    for k in range(n + 1):
        t = k / n
        x = x0 + t * (x1 - x0)
        y = y0 + t * (y1 - y0)
        r = int(math.floor(y / cs))
        c = int(math.floor(x / cs))
        if r < 0 or c < 0 or r >= rows or c >= cols or not grid[r, c]:
            return False
    return True


def step(scene, state: AgentState, action: Action) -> tuple[AgentState, bool]:
    """Apply one action. Blocked forward motion leaves the state unchanged and reports a collision."""
    action = Action(action)
    if action == Action.STOP:
        return state, False
    if action == Action.TURN_LEFT:
        return AgentState(state.x, state.y, wrap_angle(state.heading + TURN_ANGLE)), False
    if action == Action.TURN_RIGHT:
        return AgentState(state.x, state.y, wrap_angle(state.heading - TURN_ANGLE)), False
    nx = state.x + FORWARD_STEP * math.cos(state.heading)
    ny = state.y + FORWARD_STEP * math.sin(state.heading)
    if not segment_navigable(scene, (state.x, state.y), (nx, ny)):
        return state, True
    return AgentState(nx, ny, state.heading), False


@numba.njit(cache=True)
def raycast_columns(occupancy, px, py, angles, cs, max_dist):
    """DDA raycast per angle. Returns (euclidean distance, hit row, hit col, side) arrays; side 1 = y-facing wall."""
    n = angles.shape[0]
    dist = np.empty(n)
    hit_r = np.full(n, -1, dtype=np.int64)
    hit_c = np.full(n, -1, dtype=np.int64)
    side_out = np.zeros(n, dtype=np.int64)
    rows, cols = occupancy.shape
    gx = px / cs
    gy = py / cs
    for i in range(n):
        dx = math.cos(angles[i])
        dy = math.sin(angles[i])
        c = int(math.floor(gx))
        r = int(math.floor(gy))
        if dx > 0:
            step_c = 1
            t_max_x = (c + 1 - gx) / dx
            t_dx = 1.0 / dx
        elif dx < 0:
            step_c = -1
            t_max_x = (gx - c) / -dx
            t_dx = -1.0 / dx
        else:
            step_c = 0
            t_max_x = 1e30
            t_dx = 1e30
        if dy > 0:
            step_r = 1
            t_max_y = (r + 1 - gy) / dy
            t_dy = 1.0 / dy
        elif dy < 0:
            step_r = -1
            t_max_y = (gy - r) / -dy
            t_dy = -1.0 / dy
        else:
            step_r = 0
            t_max_y = 1e30
            t_dy = 1e30
        t = 0.0
        side = 0
        found = False
        limit = max_dist / cs
        if 0 <= r < rows and 0 <= c < cols and occupancy[r, c]:
            found = True
        while not found and t <= limit:
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_dx
                c += step_c
                side = 0
            else:
                t = t_max_y
                t_max_y += t_dy
                r += step_r
                side = 1
            if r < 0 or c < 0 or r >= rows or c >= cols:
                break
            if occupancy[r, c]:
                found = True
        if found:
            dist[i] = t * cs
            hit_r[i] = r
            hit_c[i] = c
            side_out[i] = side
        else:
            dist[i] = max_dist
    return dist, hit_r, hit_c, side_out


def line_of_sight(scene, p: tuple[float, float], q: tuple[float, float], target_object: int | None = None) -> bool:
    """No occupied cell strictly between p and q, ignoring cells of ``target_object``."""
    dx, dy = q[0] - p[0], q[1] - p[1]
    length = math.hypot(dx, dy)
    if length == 0:
        return True
    dist, hr, hc, _ = raycast_columns(scene.occupancy, p[0], p[1], np.array([math.atan2(dy, dx)]),
                                      scene.cell_size, length)
    if hr[0] < 0 or dist[0] >= length:
        return True
    if target_object is not None and scene.object_index[hr[0], hc[0]] == target_object:
        return True
    return False
