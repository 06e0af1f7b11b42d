"""Egocentric 2.5-D column renderer."""
from __future__ import annotations

import math

import numba
import numpy as np

from .geometry import AgentState, raycast_columns

CEILING_RGB = np.array([0.30, 0.30, 0.34])
FLOOR_RGB = np.array([0.42, 0.38, 0.33])
WALL_SCALE = 0.5  # a wall at this perpendicular distance fills the full column height
MAX_RANGE = 64.0


def column_angles(heading: float, width: int, fov: float) -> np.ndarray:
    """Ray angle per image column, left to right, uniformly spaced in angle."""
    offsets = fov / 2 - (np.arange(width) + 0.5) * (fov / width)
    return heading + offsets


@numba.njit(cache=True)
def _fill(image, perp, hit_r, hit_c, side, cell_rgb, ceiling, floor):
    _, h, w = image.shape
    for col in range(w):
        if hit_r[col] < 0:
            half = 0.0
        else:
            half = (h / 2.0) * 0.5 / max(perp[col], 1e-6)
        top = h / 2.0 - half
        bottom = h / 2.0 + half
        shade = 1.0 / (1.0 + perp[col])
        if side[col] == 1:
            shade *= 0.85
        for row in range(h):
            centre = row + 0.5
            if centre < top:
                for k in range(3):
                    image[k, row, col] = ceiling[k]
            elif centre >= bottom:
                for k in range(3):
                    image[k, row, col] = floor[k]
            else:
                for k in range(3):
                    image[k, row, col] = cell_rgb[hit_r[col], hit_c[col], k] * shade


def raycast_view(scene, state: AgentState, width: int, fov: float):
    angles = column_angles(state.heading, width, fov)
    dist, hr, hc, side = raycast_columns(scene.occupancy, state.x, state.y, angles, scene.cell_size, MAX_RANGE)
    perp = dist * np.cos(angles - state.heading)
    return angles, dist, perp, hr, hc, side


def render_observation(scene, state: AgentState, width: int = 64, height: int = 64,
                       fov: float = math.pi / 2) -> np.ndarray:
    """RGB float32 image [3, H, W] with values in [0, 1]."""
    _, _, perp, hr, hc, side = raycast_view(scene, state, width, fov)
    image = np.empty((3, height, width), dtype=np.float32)
    _fill(image, perp, hr, hc, side, scene.cell_rgb, CEILING_RGB, FLOOR_RGB)
    return image


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
