import math

import numpy as np
import pytest

from navlab.rewardlab import (
    RewardConfig,
    StepInfo,
    accumulate,
    angle_potential,
    cycle_shaping_sum,
    distance_potential,
    hack_loop_trace,
    potential_reward,
    random_closed_walk,
    repeat_cycle,
    zer_reward,
)
from navlab.simworld import Action

F, L, R, S = Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP
TG = math.radians(25)

# (prev d, prev theta, cur d, cur theta, cur action, expected), values substituted by hand
ZER_TABLE = [
    (2.0, 1.0, 1.5, 1.0, F, 0.49),
    (0.7, 0.3, 0.5, 0.1, S, 10.39),
    (0.9, 1.5, 0.9, 1.0, L, 0.49),
    (3.0, 2.0, 3.0, 1.5, L, -0.01),
    (1.2, 0.5, 0.95, 0.5, F, 0.24),
    (0.95, 0.5, 1.2, 0.5, F, -0.26),
    (0.8, 0.2, 0.8, 0.7, R, -0.51),
    (1.5, 0.1, 1.5, 0.1, S, 4.99),
    (0.5, 1.0, 0.5, 1.0, S, 4.99),
    (2.0, 1.0, 2.0, 1.0, S, -0.01),
    (1.0, 0.5, 1.0, 0.5, S, -0.01),
    (0.5, TG, 0.5, TG, S, 4.99),
    (1.0, math.pi, 0.99, math.pi - math.pi / 6, F, math.pi / 6),
    (0.5, 0.0, 0.5, math.pi, L, -math.pi - 0.01),
    (4.0, 3.0, 3.75, 3.0, F, 0.24),
    (0.3, 0.4, 0.3, 0.1, S, 10.29),
    (1.1, 2.0, 0.9, 1.0, F, 1.19),
    (0.9, 1.0, 1.1, 2.0, F, -0.21),
    (0.0, 0.0, 0.0, 0.0, S, 9.99),
    (0.6, 0.3, 0.6, 0.8, S, 4.49),
]


@pytest.mark.parametrize("pd,pt,cd,ct,act,expected", ZER_TABLE)
def test_zer_table(pd, pt, cd, ct, act, expected):
    r, terms = zer_reward(StepInfo(pd, pt, F), StepInfo(cd, ct, act))
    assert abs(r - expected) < 1e-12
    assert terms.total == r


def test_table_has_twenty_cases():
    assert len(ZER_TABLE) == 20


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(slack=0.0)
    with pytest.raises(ValueError):
        RewardConfig(theta_g=4.0)
    cfg = RewardConfig.from_dict({"theta_g_deg": 25})
    assert cfg.theta_g == pytest.approx(0.43633, abs=1e-5)


def test_stepinfo_stop_flag_invariant():
    assert StepInfo(1.0, 0.0, S).is_terminal_stop
    with pytest.raises(ValueError):
        StepInfo(1.0, 0.0, F, is_terminal_stop=True)
    with pytest.raises(ValueError):
        StepInfo(1.0, 4.0, F)


def test_potential_examples():
    _, t = potential_reward(StepInfo(0.9, 1.5, F), StepInfo(0.9, 1.0, L))
    assert t.angle == pytest.approx(0.5, abs=1e-15)
    _, t = potential_reward(StepInfo(0.9, math.pi, F), StepInfo(1.1, math.pi, F))
    assert t.angle == pytest.approx(math.pi, abs=1e-15)
    _, back = potential_reward(StepInfo(1.1, math.pi, F), StepInfo(0.9, math.pi, F))
    assert t.angle + back.angle == 0.0


class TestHackLoop:
    def test_structure(self):
        loop = hack_loop_trace()
        assert len(loop) == 15
        assert loop[0] == loop[-1] or (loop[0].d, loop[0].theta) == (loop[-1].d, loop[-1].theta)
        assert not any(s.is_terminal_stop for s in loop)

    def test_zer_total_positive(self):
        audit = cycle_shaping_sum(hack_loop_trace(), zer_reward)
        assert abs(audit.total - (math.pi - 0.14)) < 1e-9
        assert abs(audit.angle_term_sum - math.pi) < 1e-9
        assert abs(audit.distance_term_sum) < 1e-12
        assert audit.hackable

    def test_potential_total_pure_slack(self):
        audit = cycle_shaping_sum(hack_loop_trace(), potential_reward)
        assert abs(audit.total + 0.14) < 1e-9
        assert abs(audit.angle_term_sum) < 1e-9
        assert not audit.hackable

    @pytest.mark.parametrize("n", [1, 2, 5, 20])
    def test_zer_linear_in_cycles(self, n):
        audit = cycle_shaping_sum(repeat_cycle(hack_loop_trace(), n), zer_reward)
        assert abs(audit.total - n * (math.pi - 0.14)) < 1e-9 * n
        pot = cycle_shaping_sum(repeat_cycle(hack_loop_trace(), n), potential_reward)
        assert abs(pot.total + n * 0.14) < 1e-9 * n


def test_random_closed_walks_potential_zero():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        walk = random_closed_walk(rng, int(rng.integers(2, 40)))
        audit = cycle_shaping_sum(walk, potential_reward)
        assert abs(audit.angle_term_sum) < 1e-9 and abs(audit.distance_term_sum) < 1e-9
        assert audit.total <= 1e-9
        assert abs(audit.total + audit.num_transitions * 0.01) < 1e-9


def test_potential_telescopes_on_open_trajectories():
    rng = np.random.default_rng(1)
    cfg = RewardConfig()
    for _ in range(200):
        walk = random_closed_walk(rng, 10)[:-1]
        audit = accumulate(walk, potential_reward, cfg)
        a0, aT = walk[0], walk[-1]
        assert audit.angle_term_sum == pytest.approx(angle_potential(aT, cfg) - angle_potential(a0, cfg), abs=1e-12)
        assert audit.distance_term_sum == pytest.approx(distance_potential(aT) - distance_potential(a0), abs=1e-12)


def test_rewards_agree_away_from_boundary():
    rng = np.random.default_rng(2)
    for _ in range(500):
        inside = bool(rng.integers(2))
        lo, hi = (0.0, 0.99) if inside else (1.01, 4.0)
        prev = StepInfo(rng.uniform(lo, hi), rng.uniform(0, math.pi), F)
        cur = StepInfo(rng.uniform(lo, hi), rng.uniform(0, math.pi), Action(int(rng.integers(4))))
        assert zer_reward(prev, cur)[0] == pytest.approx(potential_reward(prev, cur)[0], abs=1e-12)


def test_open_trajectory_rejected():
    with pytest.raises(ValueError):
        cycle_shaping_sum([StepInfo(1.0, 0.0), StepInfo(2.0, 0.0)], zer_reward)
    with pytest.raises(ValueError):
        cycle_shaping_sum([StepInfo(1.0, 0.0), StepInfo(1.0, 0.0, S)], zer_reward)
