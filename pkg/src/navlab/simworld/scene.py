"""Procedurally generated occupancy-grid scenes.

World frame: x grows with the column index, y with the row index, headings are
measured counter-clockwise from +x. A cell (row, col) covers
``[col*cs, (col+1)*cs) x [row*cs, (row+1)*cs)``.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

NUM_CATEGORIES = 6
CATEGORY_NAMES = ("chair", "bed", "plant", "toilet", "tv_monitor", "sofa")
CATEGORY_COLORS = np.array(
    [
        [0.95, 0.15, 0.15],
        [0.15, 0.85, 0.20],
        [0.20, 0.30, 0.95],
        [0.95, 0.90, 0.10],
        [0.90, 0.15, 0.90],
        [0.10, 0.90, 0.90],
    ]
)
CELL_SIZE = 0.125
CROSS = ndimage.generate_binary_structure(2, 1)
SQUARE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class ObjectInstance:
    category: int
    position: tuple[float, float]
    cells: tuple[tuple[int, int], ...]


@dataclass(eq=False)
class Scene:
    seed: int
    occupancy: np.ndarray  # bool [rows, cols], True = blocked
    cell_size: float
    wall_hue: np.ndarray  # float [rows, cols] in [0, 1)
    objects: list[ObjectInstance] = field(default_factory=list)

    def __post_init__(self):
        self.occupancy = np.ascontiguousarray(self.occupancy, dtype=bool)
        self.object_index = np.full(self.occupancy.shape, -1, dtype=np.int16)
        for i, obj in enumerate(self.objects):
            for r, c in obj.cells:
                self.object_index[r, c] = i
                self.occupancy[r, c] = True
        # the agent is a disc of radius < one cell: keep one cell of clearance
        self.navigable = ~ndimage.binary_dilation(self.occupancy, SQUARE) & ~self.occupancy
        self.cell_rgb = self._cell_colors()
        self._fields: dict[tuple[int, int], np.ndarray] = {}
        self._graph = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    @property
    def size_m(self) -> tuple[float, float]:
        rows, cols = self.shape
        return cols * self.cell_size, rows * self.cell_size

    def _cell_colors(self) -> np.ndarray:
        rgb = np.zeros(self.shape + (3,), dtype=np.float64)
        rows, cols = np.nonzero(self.occupancy)
        for r, c in zip(rows, cols):
            idx = self.object_index[r, c]
            if idx >= 0:
                rgb[r, c] = CATEGORY_COLORS[self.objects[idx].category]
            else:
                rgb[r, c] = colorsys.hsv_to_rgb(float(self.wall_hue[r, c]), 0.35, 0.9)
        return rgb

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return int(np.floor(y / self.cell_size)), int(np.floor(x / self.cell_size))

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        r, c = cell
        return (c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.shape[0] and 0 <= c < self.shape[1]

    def is_navigable(self, x: float, y: float) -> bool:
        cell = self.cell_of(x, y)
        return self.in_bounds(cell) and bool(self.navigable[cell])

    def is_free(self, x: float, y: float) -> bool:
        cell = self.cell_of(x, y)
        return self.in_bounds(cell) and not self.occupancy[cell]

    def equals(self, other: "Scene") -> bool:
        return (
            self.seed == other.seed
            and self.cell_size == other.cell_size
            and np.array_equal(self.occupancy, other.occupancy)
            and np.array_equal(self.wall_hue, other.wall_hue)
            and self.objects == other.objects
        )

    @classmethod
    def from_ascii(cls, rows: list[str], cell_size: float = CELL_SIZE, seed: int = -1) -> "Scene":
        """Build a scene from text: ``#`` wall, ``.`` free, digits 0-5 object cells of that category."""
        grid = np.array([[ch == "#" for ch in line] for line in rows], dtype=bool)
        hue = np.zeros(grid.shape)
        cells: dict[int, list[tuple[int, int]]] = {}
        for r, line in enumerate(rows):
            for c, ch in enumerate(line):
                if ch.isdigit():
                    cells.setdefault(int(ch), []).append((r, c))
        objects = []
        for cat, cs in sorted(cells.items()):
            # one instance per connected blob of the same digit
            mask = np.zeros(grid.shape, dtype=bool)
            for rc in cs:
                mask[rc] = True
            labels, n = ndimage.label(mask, CROSS)
            for k in range(1, n + 1):
                blob = tuple((int(r), int(c)) for r, c in zip(*np.nonzero(labels == k)))
                cy = np.mean([r for r, _ in blob]) + 0.5
                cx = np.mean([c for _, c in blob]) + 0.5
                objects.append(ObjectInstance(cat, (cx * cell_size, cy * cell_size), blob))
        return cls(seed, grid, cell_size, hue, objects)


@dataclass(frozen=True)
class SceneConfig:
    min_size_m: int = 8
    max_size_m: int = 16
    cell_size: float = CELL_SIZE
    min_obstacles: int = 3
    max_obstacles: int = 8
    max_interior_walls: int = 2
    extra_objects: int = 4


def _stabilize(occ: np.ndarray) -> np.ndarray | None:
    """Grow occupancy until free space is one 4-connected region around one navigable region."""
    occ = occ.copy()
    while True:
        nav = ~ndimage.binary_dilation(occ, SQUARE) & ~occ
        labels, n = ndimage.label(nav, CROSS)
        if n == 0:
            return None
        sizes = ndimage.sum(nav, labels, range(1, n + 1))
        keep = labels == (int(np.argmax(sizes)) + 1)
        reach = ndimage.binary_dilation(keep, SQUARE)
        new_occ = occ | (~occ & ~reach)
        if np.array_equal(new_occ, occ):
            free_labels, nf = ndimage.label(~occ, CROSS)
            if nf != 1:
                # stray free cells only diagonally attached: close them and retry
                sizes = ndimage.sum(~occ, free_labels, range(1, nf + 1))
                biggest = int(np.argmax(sizes)) + 1
                occ = occ | ((free_labels != biggest) & ~occ)
                continue
            return occ
        occ = new_occ


def _place_rect(occ, hue, rng, h, w, value_hue):
    rows, cols = occ.shape
    r0 = int(rng.integers(1, rows - h - 1))
    c0 = int(rng.integers(1, cols - w - 1))
    occ[r0:r0 + h, c0:c0 + w] = True
    hue[r0:r0 + h, c0:c0 + w] = value_hue


def _object_viewable(scene: Scene, idx: int, radius: float = 1.0) -> bool:
    from .geometry import line_of_sight

    obj = scene.objects[idx]
    cs = scene.cell_size
    r0, c0 = scene.cell_of(*obj.position)
    span = int(np.ceil(radius / cs)) + 1
    for r in range(max(0, r0 - span), min(scene.shape[0], r0 + span + 1)):
        for c in range(max(0, c0 - span), min(scene.shape[1], c0 + span + 1)):
            if not scene.navigable[r, c]:
                continue
            x, y = scene.cell_center((r, c))
            if np.hypot(x - obj.position[0], y - obj.position[1]) <= radius - cs and line_of_sight(
                scene, (x, y), obj.position, target_object=idx
            ):
                return True
    return False


def _generate(seed: int, attempt: int, cfg: SceneConfig) -> Scene | None:
    rng = np.random.default_rng([seed, attempt])
    cs = cfg.cell_size
    size = int(rng.integers(cfg.min_size_m, cfg.max_size_m + 1))
    n = int(round(size / cs))
    occ = np.zeros((n, n), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    block = 16
    coarse = rng.random((n // block + 1, n // block + 1))
    hue = np.kron(coarse, np.ones((block, block)))[:n, :n].copy()

    for _ in range(int(rng.integers(0, cfg.max_interior_walls + 1))):
        vertical = bool(rng.integers(2))
        pos = int(rng.integers(n // 4, 3 * n // 4))
        wall_hue = rng.random()
        line = np.zeros(n, dtype=bool)
        line[1:-1] = True
        for _ in range(int(rng.integers(1, 3))):
            gap = int(rng.integers(int(1.0 / cs), int(1.6 / cs) + 1))
            start = int(rng.integers(2, n - gap - 2))
            line[start:start + gap] = False
        if vertical:
            occ[line, pos:pos + 2] = True
            hue[line, pos:pos + 2] = wall_hue
        else:
            occ[pos:pos + 2, line] = True
            hue[pos:pos + 2, line] = wall_hue

    for _ in range(int(rng.integers(cfg.min_obstacles, cfg.max_obstacles + 1))):
        h = int(rng.integers(2, int(1.5 / cs) + 1))
        w = int(rng.integers(2, int(1.5 / cs) + 1))
        _place_rect(occ, hue, rng, h, w, rng.random())

    occ = _stabilize(occ)
    if occ is None:
        return None

    categories = list(range(NUM_CATEGORIES)) + [int(c) for c in rng.integers(0, NUM_CATEGORIES, cfg.extra_objects)]
    objects: list[ObjectInstance] = []
    taken = occ.copy()
    for cat in categories:
        for _ in range(200):
            r = int(rng.integers(2, n - 3))
            c = int(rng.integers(2, n - 3))
            if taken[r - 1:r + 3, c - 1:c + 3].any():
                continue
            blob = ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1))
            taken[r:r + 2, c:c + 2] = True
            objects.append(ObjectInstance(cat, ((c + 1) * cs, (r + 1) * cs), blob))
            break
        else:
            return None

    obj_occ = occ.copy()
    for obj in objects:
        for rc in obj.cells:
            obj_occ[rc] = True
    stable = _stabilize(obj_occ)
    if stable is None:
        return None
    scene = Scene(seed, stable & ~_object_mask(objects, stable.shape), cs, hue, objects)
    if scene.navigable.sum() < 0.25 * (n - 2) ** 2:
        return None
    for cat in range(NUM_CATEGORIES):
        if not any(_object_viewable(scene, i) for i, o in enumerate(objects) if o.category == cat):
            return None
    return scene


def _object_mask(objects, shape):
    mask = np.zeros(shape, dtype=bool)
    for obj in objects:
        for rc in obj.cells:
            mask[rc] = True
    return mask


def generate_scene(seed: int, cfg: SceneConfig | None = None) -> Scene:
    """Deterministic scene for ``seed``; retries internally until all invariants hold."""
    cfg = cfg or SceneConfig()
    for attempt in range(1000):
        scene = _generate(seed, attempt, cfg)
        if scene is not None:
            return scene
    raise RuntimeError(f"could not generate a valid scene for seed {seed}")


@lru_cache(maxsize=256)
def cached_scene(seed: int, cfg: SceneConfig = SceneConfig()) -> Scene:
    return generate_scene(seed, cfg)
