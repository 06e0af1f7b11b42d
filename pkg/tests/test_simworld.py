import heapq
import math

import numpy as np
import pytest
from scipy import ndimage

from navlab.simworld import (
    IMAGENAV,
    OBJECTNAV,
    Action,
    AgentState,
    EpisodeConfig,
    EpisodeSpec,
    OccupiedPositionError,
    Scene,
    StepRecord,
    TrajectoryRecord,
    cached_scene,
    distance_field,
    generate_scene,
    geodesic_distance,
    imagenav_success,
    measure,
    objectnav_success,
    oracle_demonstration,
    render_observation,
    rollout_oracle,
    sample_episodes,
    step,
)
from navlab.simworld.render import raycast_view
from navlab.simworld.scene import CROSS, NUM_CATEGORIES


def open_room(n=24, cell=0.125):
    rows = ["#" * n] + ["#" + "." * (n - 2) + "#" for _ in range(n - 2)] + ["#" * n]
    return Scene.from_ascii(rows, cell_size=cell)


def _episode(scene, start, goal, task=IMAGENAV, category=None, max_steps=200):
    geo = geodesic_distance(scene, start.position, goal.position)
    return EpisodeSpec("t", task, scene.seed, start, goal, max_steps, geo, category)


def _traj(states_d_theta, stop, task=IMAGENAV):
    start = AgentState(1.0, 1.0, 0.0)
    ep = EpisodeSpec("t", task, 0, start, AgentState(2.0, 1.0, 0.0), 200, 1.0)
    init = StepRecord(start, Action.STOP, 1.0, 0.0, False, False)
    steps = [StepRecord(start, Action.MOVE_FORWARD, d, th, False, False) for d, th in states_d_theta]
    return TrajectoryRecord(ep, init, steps, stop)


class TestScene:
    def test_seed_determinism(self):
        a, b = generate_scene(7), generate_scene(7)
        assert a.equals(b)
        assert np.array_equal(a.cell_rgb, b.cell_rgb)

    @pytest.mark.parametrize("seed", [0, 1, 2, 7, 11])
    def test_free_space_connected_and_bounded(self, seed):
        sc = generate_scene(seed)
        occ = sc.occupancy
        assert occ[0].all() and occ[-1].all() and occ[:, 0].all() and occ[:, -1].all()
        _, n = ndimage.label(~occ, CROSS)
        assert n == 1
        _, n_nav = ndimage.label(sc.navigable, CROSS)
        assert n_nav == 1

    @pytest.mark.parametrize("seed", [0, 3, 7])
    def test_all_categories_present(self, seed):
        sc = generate_scene(seed)
        assert len(sc.objects) >= NUM_CATEGORIES
        assert {o.category for o in sc.objects} == set(range(NUM_CATEGORIES))

    def test_sizes_in_range(self):
        for seed in range(5):
            w, h = generate_scene(seed).size_m
            assert 8 <= w <= 16 and w == h


class TestStep:
    def setup_method(self):
        self.scene = open_room()

    def test_forward_open_space(self):
        s, coll = step(self.scene, AgentState(1.0, 1.0, 0.0), Action.MOVE_FORWARD)
        assert not coll
        assert s.x == pytest.approx(1.25, abs=1e-12) and s.y == pytest.approx(1.0, abs=1e-12)

    def test_turns_wrap(self):
        s, _ = step(self.scene, AgentState(1.0, 1.0, 0.0), Action.TURN_LEFT)
        assert s.heading == pytest.approx(math.pi / 6)
        s, _ = step(self.scene, AgentState(1.0, 1.0, 0.0), Action.TURN_RIGHT)
        assert s.heading == pytest.approx(2 * math.pi - math.pi / 6)
        s = AgentState(1.0, 1.0, 0.0)
        for _ in range(12):
            s, _ = step(self.scene, s, Action.TURN_LEFT)
        assert min(s.heading, 2 * math.pi - s.heading) < 1e-9

    def test_forward_into_wall(self):
        start = AgentState(0.3, 1.0, math.pi)
        s, coll = step(self.scene, start, Action.MOVE_FORWARD)
        assert coll and s == start

    def test_stop_is_noop(self):
        start = AgentState(1.0, 1.0, 0.3)
        assert step(self.scene, start, Action.STOP) == (start, False)

    def test_collision_safety_random_walks(self):
        sc = cached_scene(3)
        rng = np.random.default_rng(0)
        ep = sample_episodes([3], 1, 0, EpisodeConfig())[0]
        s = ep.start
        for a in rng.integers(1, 4, size=3000):
            prev = s
            s, coll = step(sc, s, Action(int(a)))
            assert sc.is_navigable(s.x, s.y)
            assert math.dist(prev.position, s.position) <= 0.25 + 1e-12
            if coll:
                assert s == prev

    def test_trajectory_determinism(self):
        cfg = EpisodeConfig()
        ep = sample_episodes([5], 1, 3, cfg)[0]
        sc = cached_scene(5)
        actions = np.random.default_rng(1).integers(1, 4, size=100)

        def run():
            s, out = ep.start, []
            for a in actions:
                s, c = step(sc, s, Action(int(a)))
                out.append((s.x, s.y, s.heading, c, *measure(sc, s, ep, cfg)))
            return out

        assert run() == run()


class TestRender:
    def test_facing_uniform_wall(self):
        sc = open_room(40)
        img = render_observation(sc, AgentState(2.5, 2.5, 0.0), 32, 32)
        assert img.shape == (3, 32, 32) and img.dtype == np.float32
        assert np.all(img == img[:, :, :1])
        assert 0.0 <= img.min() and img.max() <= 1.0

    def test_deterministic(self):
        sc = cached_scene(2)
        ep = sample_episodes([2], 1, 0, EpisodeConfig())[0]
        a = render_observation(sc, ep.start)
        b = render_observation(sc, ep.start)
        assert np.array_equal(a, b)

    def test_rotation_by_one_column_shifts_image(self):
        sc = cached_scene(4)
        ep = sample_episodes([4], 1, 5, EpisodeConfig())[0]
        w, fov = 64, math.pi / 2
        s0 = ep.start
        s1 = AgentState(s0.x, s0.y, s0.heading + fov / w)  # rotate left by one column width
        _, d0, _, r0, c0, _ = raycast_view(sc, s0, w, fov)
        _, d1, _, r1, c1, _ = raycast_view(sc, s1, w, fov)
        # the rays are identical, just shifted one column to the right
        np.testing.assert_array_equal(r1[1:], r0[:-1])
        np.testing.assert_array_equal(c1[1:], c0[:-1])
        np.testing.assert_allclose(d1[1:], d0[:-1], atol=1e-9)
        # colors match up to the perpendicular-distance correction
        im0 = render_observation(sc, s0, w, w)
        im1 = render_observation(sc, s1, w, w)
        assert np.abs(im1[:, :, 1:] - im0[:, :, :-1]).mean() < 0.02


class TestGeodesic:
    def test_straight_corridor(self):
        rows = ["#" * 16, "#" + "." * 14 + "#", "#" + "." * 14 + "#", "#" + "." * 14 + "#", "#" * 16]
        sc = Scene.from_ascii(rows, cell_size=0.25)
        a, b = sc.cell_center((2, 2)), sc.cell_center((2, 12))
        assert geodesic_distance(sc, a, b) == pytest.approx(2.5, abs=1e-12)

    def test_same_point_zero(self):
        sc = cached_scene(1)
        ep = sample_episodes([1], 1, 0, EpisodeConfig())[0]
        assert geodesic_distance(sc, ep.start.position, ep.start.position) == 0.0

    def test_occupied_endpoint_raises(self):
        sc = open_room()
        with pytest.raises(OccupiedPositionError):
            geodesic_distance(sc, (0.05, 0.05), (1.0, 1.0))

    def test_matches_hand_dijkstra(self):
        sc = cached_scene(6)
        goal = tuple(np.argwhere(sc.navigable)[0])
        field = distance_field(sc, goal)
        # reference: textbook Dijkstra on the same 8-connected, no-corner-cutting graph
        ref = np.full(sc.shape, np.inf)
        ref[goal] = 0.0
        heap = [(0.0, goal)]
        nav = sc.navigable
        while heap:
            d, (r, c) = heapq.heappop(heap)
            if d > ref[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if not (dr or dc):
                        continue
                    r2, c2 = r + dr, c + dc
                    if not nav[r2, c2]:
                        continue
                    if dr and dc and not (nav[r + dr, c] and nav[r, c + dc]):
                        continue
                    nd = d + math.hypot(dr, dc) * sc.cell_size
                    if nd < ref[r2, c2]:
                        ref[r2, c2] = nd
                        heapq.heappush(heap, (nd, (r2, c2)))
        np.testing.assert_allclose(field, ref, atol=1e-9)

    def test_at_least_euclidean(self):
        cfg = EpisodeConfig()
        for ep in sample_episodes(list(range(5)), 40, 9, cfg):
            sc = cached_scene(ep.scene_seed)
            e = math.dist(ep.start.position, ep.goal.position)
            assert geodesic_distance(sc, ep.start.position, ep.goal.position) >= e - 1e-12


class TestSuccess:
    def test_imagenav_cases(self):
        assert imagenav_success(_traj([(0.8, math.radians(10))], True)) == (True, True)
        assert imagenav_success(_traj([(0.8, math.radians(40))], True)) == (True, False)
        assert imagenav_success(_traj([(0.5, 0.0)], False)) == (False, False)
        assert imagenav_success(_traj([(1.0, 0.0)], True)) == (False, False)

    def _objectnav_scene(self):
        rows = [
            "##############",
            "#............#",
            "#............#",
            "#......00....#",
            "#......00....#",
            "#............#",
            "#####.########",
            "#............#",
            "#............#",
            "##############",
        ]
        return Scene.from_ascii(rows, cell_size=0.25)

    def _stop_at(self, scene, x, y):
        start = AgentState(x, y, 0.0)
        ep = EpisodeSpec("t", OBJECTNAV, -1, start, start, 10, 0.0, 0)
        init = StepRecord(start, Action.STOP, 0.0, 0.0, False, False)
        return TrajectoryRecord(ep, init, [StepRecord(start, Action.STOP, 0.0, 0.0, False, False)], True)

    def test_objectnav_visible_close(self):
        sc = self._objectnav_scene()
        ox, oy = sc.objects[0].position
        assert objectnav_success(self._stop_at(sc, ox - 0.5, oy), sc, 0)

    def test_objectnav_behind_wall(self):
        sc = self._objectnav_scene()
        ox, oy = sc.objects[0].position
        # directly below the object, on the other side of the dividing wall, 0.75 m away
        assert not objectnav_success(self._stop_at(sc, ox, oy + 0.75 + 0.125), sc, 0)

    def test_objectnav_too_far(self):
        sc = self._objectnav_scene()
        ox, oy = sc.objects[0].position
        assert not objectnav_success(self._stop_at(sc, ox - 1.5, oy - 0.4), sc, 0)

    def test_measure_ranges(self):
        cfg = EpisodeConfig()
        for ep in sample_episodes([0, 1], 10, 2, cfg):
            sc = cached_scene(ep.scene_seed)
            d, th, _ = measure(sc, ep.start, ep, cfg)
            assert d >= 0 and 0 <= th <= math.pi


class TestOracle:
    def test_straight_ahead(self):
        sc = open_room(40)
        start = AgentState(1.0, 2.5, 0.0)
        ep = _episode(sc, start, AgentState(3.0, 2.5, 0.0))
        traj = oracle_demonstration(sc, ep, EpisodeConfig())
        assert traj.actions == [Action.MOVE_FORWARD] * 8 + [Action.STOP]

    def test_goal_behind_turns_first(self):
        sc = open_room(40)
        ep = _episode(sc, AgentState(3.0, 2.5, 0.0), AgentState(1.0, 2.5, math.pi))
        acts = oracle_demonstration(sc, ep, EpisodeConfig()).actions
        first_forward = acts.index(Action.MOVE_FORWARD)
        assert first_forward >= 1
        assert all(a in (Action.TURN_LEFT, Action.TURN_RIGHT) for a in acts[:first_forward])

    def test_imagenav_100_episodes(self):
        cfg = EpisodeConfig()
        ratios = []
        for ep in sample_episodes(list(range(20)), 100, 0, cfg):
            sc = cached_scene(ep.scene_seed)
            traj = oracle_demonstration(sc, ep, cfg)
            assert imagenav_success(traj)[0]
            ratios.append(traj.path_length() / ep.geodesic_start_to_goal)
        # measured max 1.008 on this set; spec bound 1.25
        assert max(ratios) <= 1.25

    def test_objectnav_episodes(self):
        cfg = EpisodeConfig(task=OBJECTNAV)
        for ep in sample_episodes(list(range(10)), 20, 1, cfg):
            sc = cached_scene(ep.scene_seed)
            traj = rollout_oracle(sc, ep, cfg)
            assert objectnav_success(traj, sc, ep.goal_category)


class TestEpisodes:
    def test_sampling_deterministic_and_valid(self):
        cfg = EpisodeConfig()
        a = sample_episodes([0, 1, 2], 12, 4, cfg)
        b = sample_episodes([0, 1, 2], 12, 4, cfg)
        assert a == b
        for ep in a:
            assert cfg.min_geodesic <= ep.geodesic_start_to_goal <= cfg.max_geodesic
            sc = cached_scene(ep.scene_seed)
            assert sc.cell_of(*ep.start.position) != sc.cell_of(*ep.goal.position)

    def test_roundtrip_dict(self):
        ep = sample_episodes([0], 1, 0, EpisodeConfig(task=OBJECTNAV))[0]
        assert EpisodeSpec.from_dict(ep.to_dict()) == ep
