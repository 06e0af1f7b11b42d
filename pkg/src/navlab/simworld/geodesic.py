"""Shortest paths on the 8-connected navigable grid."""
from __future__ import annotations

import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

SQRT2 = math.sqrt(2.0)
_NEIGHBOURS = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
               (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]


class OccupiedPositionError(ValueError):
    """A geodesic query endpoint lies outside navigable space."""


def _graph(scene):
    if scene._graph is not None:
        return scene._graph
    nav = scene.navigable
    rows, cols = nav.shape
    index = -np.ones(nav.shape, dtype=np.int64)
    cells = np.argwhere(nav)
    index[nav] = np.arange(len(cells))
    src, dst, w = [], [], []
    for dr, dc, cost in _NEIGHBOURS:
        r2, c2 = cells[:, 0] + dr, cells[:, 1] + dc
        ok = (r2 >= 0) & (r2 < rows) & (c2 >= 0) & (c2 < cols)
        ok[ok] &= nav[r2[ok], c2[ok]]
        if dr and dc:
            # no corner cutting: both orthogonal neighbours must be navigable
            ok[ok] &= nav[cells[ok, 0] + dr, cells[ok, 1]] & nav[cells[ok, 0], cells[ok, 1] + dc]
        src.append(index[cells[ok, 0], cells[ok, 1]])
        dst.append(index[r2[ok], c2[ok]])
        w.append(np.full(ok.sum(), cost * scene.cell_size))
    n = len(cells)
    mat = coo_matrix((np.concatenate(w), (np.concatenate(src), np.concatenate(dst))), shape=(n, n)).tocsr()
    scene._graph = (mat, index)
    return scene._graph


def distance_field(scene, cell: tuple[int, int]) -> np.ndarray:
    """Grid geodesic (meters) from every cell to ``cell``; inf where unreachable or blocked."""
    cell = (int(cell[0]), int(cell[1]))
    cached = scene._fields.get(cell)
    if cached is not None:
        return cached
    if not scene.in_bounds(cell) or not scene.navigable[cell]:
        raise OccupiedPositionError(f"cell {cell} is not navigable")
    mat, index = _graph(scene)
    d = dijkstra(mat, directed=False, indices=int(index[cell]))
    field = np.full(scene.shape, np.inf)
    field[index >= 0] = d
    if len(scene._fields) > 64:
        scene._fields.clear()
    scene._fields[cell] = field
    return field


def geodesic_distance(scene, src: tuple[float, float], dst: tuple[float, float]) -> float:
    """Grid shortest path between the endpoint cells plus straight legs to the cell centres.

    Always at least the Euclidean distance (triangle inequality on every leg).
    """
    for p in (src, dst):
        if not scene.is_navigable(*p):
            raise OccupiedPositionError(f"position {p} is not navigable")
    a, b = scene.cell_of(*src), scene.cell_of(*dst)
    if a == b:
        return math.hypot(dst[0] - src[0], dst[1] - src[1])
    grid = distance_field(scene, b)[a]
    if not np.isfinite(grid):
        return math.inf
    ca, cb = scene.cell_center(a), scene.cell_center(b)
    return math.hypot(ca[0] - src[0], ca[1] - src[1]) + float(grid) + math.hypot(dst[0] - cb[0], dst[1] - cb[1])


def shortest_path_cells(scene, start_cell: tuple[int, int], goal_cell: tuple[int, int]) -> list[tuple[int, int]]:
    """Cells from start to goal following steepest descent of the goal's distance field."""
    field = distance_field(scene, goal_cell)
    if not np.isfinite(field[start_cell]):
        raise ValueError("goal unreachable")
    path = [tuple(start_cell)]
    cur = tuple(start_cell)
    rows, cols = scene.shape
    cs = scene.cell_size
    while cur != tuple(goal_cell):
        best, best_val = None, field[cur]
        for dr, dc, cost in _NEIGHBOURS:
            r, c = cur[0] + dr, cur[1] + dc
            if not (0 <= r < rows and 0 <= c < cols) or not scene.navigable[r, c]:
                continue
            if dr and dc and not (scene.navigable[cur[0] + dr, cur[1]] and scene.navigable[cur[0], cur[1] + dc]):
                continue
            val = field[r, c]
            if abs(val + cost * cs - field[cur]) < 1e-9 and val < best_val:
                best, best_val = (r, c), val
        if best is None:
            raise RuntimeError("distance field descent stalled")
        path.append(best)
        cur = best
    return path
