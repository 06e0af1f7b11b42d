"""Navigation rewards and a shaping auditor for closed trajectories.

Two rewards share the same sparse terminal bonuses and slack penalty:

* ``zer_reward`` adds the change in distance plus, while inside the goal radius,
  the change in heading error. The angle term is gated on the *current* distance
  only, so it is not a difference of potentials and can be farmed by a loop that
  crosses the radius boundary.
* ``potential_reward`` uses the potentials ``phi_d = -d`` and
  ``phi_a = -theta * [d < r_g]``; its shaping telescopes and sums to zero on any
  closed loop.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

# action ids follow the simulator: 0 STOP, 1 MOVE_FORWARD, 2 TURN_LEFT, 3 TURN_RIGHT
STOP, MOVE_FORWARD, TURN_LEFT, TURN_RIGHT = 0, 1, 2, 3


@dataclass(frozen=True)
class RewardConfig:
    c_s: float = 5.0
    c_a: float = 5.0
    r_g: float = 1.0
    theta_g: float = math.radians(25.0)
    slack: float = 0.01

    def __post_init__(self):
        for name in ("c_s", "c_a", "r_g", "theta_g", "slack"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.theta_g < math.pi:
            raise ValueError("theta_g must be below pi")

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        """Accepts ``theta_g_deg`` (degrees, converted here once) or ``theta_g`` (radians)."""
        d = dict(d)
        if "theta_g_deg" in d:
            d["theta_g"] = math.radians(float(d.pop("theta_g_deg")))
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepInfo:
    """Measurements of one state plus the action that led to it."""

    d: float
    theta: float
    action: int = MOVE_FORWARD
    is_terminal_stop: bool | None = None

    def __post_init__(self):
        if int(self.action) not in (STOP, MOVE_FORWARD, TURN_LEFT, TURN_RIGHT):
            raise ValueError(f"unknown action {self.action!r}")
        stop = int(self.action) == STOP
        if self.is_terminal_stop is None:
            object.__setattr__(self, "is_terminal_stop", stop)
        elif self.is_terminal_stop != stop:
            raise ValueError("is_terminal_stop must match action == STOP")
        if self.d < 0:
            raise ValueError("d must be non-negative")
        if not 0.0 <= self.theta <= math.pi + 1e-12:
            raise ValueError("theta must lie in [0, pi]")


@dataclass(frozen=True)
class RewardTerms:
    sparse: float
    angle: float
    distance: float
    slack: float

    @property
    def total(self) -> float:
        return self.sparse + self.angle + self.distance + self.slack


def _sparse(cur: StepInfo, cfg: RewardConfig) -> float:
    if not cur.is_terminal_stop:
        return 0.0
    r = 0.0
    if cur.d < cfg.r_g:
        r += cfg.c_s
    if cur.theta < cfg.theta_g:
        r += cfg.c_a
    return r


def zer_reward(prev: StepInfo, cur: StepInfo, cfg: RewardConfig = RewardConfig()) -> tuple[float, RewardTerms]:
    angle = (prev.theta - cur.theta) if cur.d < cfg.r_g else 0.0
    terms = RewardTerms(_sparse(cur, cfg), angle, prev.d - cur.d, -cfg.slack)
    return terms.total, terms


def potential_reward(prev: StepInfo, cur: StepInfo, cfg: RewardConfig = RewardConfig()) -> tuple[float, RewardTerms]:
    terms = RewardTerms(
        _sparse(cur, cfg),
        angle_potential(cur, cfg) - angle_potential(prev, cfg),
        distance_potential(cur) - distance_potential(prev),
        -cfg.slack,
    )
    return terms.total, terms


def distance_potential(s: StepInfo) -> float:
    return -s.d


def angle_potential(s: StepInfo, cfg: RewardConfig = RewardConfig()) -> float:
    return -s.theta if s.d < cfg.r_g else 0.0


RewardFn = Callable[[StepInfo, StepInfo, RewardConfig], tuple[float, RewardTerms]]
REWARD_FUNCTIONS: dict[str, RewardFn] = {"zer": zer_reward, "potential": potential_reward}


def get_reward_fn(name: str) -> RewardFn:
    try:
        return REWARD_FUNCTIONS[name]
    except KeyError:
        raise ValueError(f"unknown reward {name!r}; expected one of {sorted(REWARD_FUNCTIONS)}") from None


@dataclass(frozen=True)
class ShapingAudit:
    angle_term_sum: float
    distance_term_sum: float
    slack_sum: float
    sparse_sum: float
    num_transitions: int
    hackable: bool

    @property
    def total(self) -> float:
        return self.angle_term_sum + self.distance_term_sum + self.slack_sum + self.sparse_sum

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


HACK_TOLERANCE = 1e-9


def accumulate(traj: Sequence[StepInfo], reward_fn: RewardFn, cfg: RewardConfig = RewardConfig()) -> ShapingAudit:
    """Component sums over consecutive transitions, with no closedness requirement."""
    sums = np.zeros(4)
    for prev, cur in zip(traj[:-1], traj[1:]):
        _, t = reward_fn(prev, cur, cfg)
        sums += (t.angle, t.distance, t.slack, t.sparse)
    hackable = bool(sums[0] > HACK_TOLERANCE or sums[1] > HACK_TOLERANCE)
    return ShapingAudit(float(sums[0]), float(sums[1]), float(sums[2]), float(sums[3]), len(traj) - 1, hackable)


def cycle_shaping_sum(traj: Sequence[StepInfo], reward_fn: RewardFn,
                      cfg: RewardConfig = RewardConfig()) -> ShapingAudit:
    """Audit a closed loop. Flags ``hackable`` when any shaping sum is positive."""
    if len(traj) < 2:
        raise ValueError("a cycle needs at least one transition")
    first, last = traj[0], traj[-1]
    if abs(first.d - last.d) > 1e-12 or abs(first.theta - last.theta) > 1e-12:
        raise ValueError("trajectory is not closed: first and last states differ")
    if any(s.is_terminal_stop for s in traj):
        raise ValueError("cycles must not contain STOP")
    return accumulate(traj, reward_fn, cfg)


def hack_loop_trace(cfg: RewardConfig = RewardConfig()) -> list[StepInfo]:
    """The 14-transition loop that farms the ZER angle term: 15 states, first == last."""
    turn = math.pi / 6
    d_out, d_in = cfg.r_g + 0.05, cfg.r_g - 0.2
    states = [StepInfo(d_out, math.pi, MOVE_FORWARD)]
    states.append(StepInfo(d_in, math.pi, MOVE_FORWARD))
    for k in range(1, 7):
        states.append(StepInfo(d_in, max(0.0, math.pi - k * turn), TURN_LEFT))
    states.append(StepInfo(d_out, 0.0, MOVE_FORWARD))
    for k in range(1, 7):
        states.append(StepInfo(d_out, min(math.pi, k * turn), TURN_RIGHT))
    # close exactly: the last turn lands on pi up to rounding
    states[-1] = StepInfo(d_out, math.pi, TURN_RIGHT)
    return states


def repeat_cycle(cycle: Sequence[StepInfo], n: int) -> list[StepInfo]:
    out = list(cycle)
    for _ in range(n - 1):
        out.extend(cycle[1:])
    return out


def random_closed_walk(rng: np.random.Generator, num_steps: int, cfg: RewardConfig = RewardConfig(),
                       max_d: float = 3.0) -> list[StepInfo]:
    """Random states straddling the goal radius, closed by returning to the first one."""
    actions = (MOVE_FORWARD, TURN_LEFT, TURN_RIGHT)
    states = [StepInfo(float(rng.uniform(0, max_d)), float(rng.uniform(0, math.pi)),
                       actions[int(rng.integers(3))]) for _ in range(num_steps)]
    states.append(StepInfo(states[0].d, states[0].theta, actions[int(rng.integers(3))]))
    return states


def trajectory_step_infos(traj) -> list[StepInfo]:
    """StepInfos of a simworld TrajectoryRecord, initial state first."""
    out = [StepInfo(traj.initial.d, min(traj.initial.theta, math.pi), MOVE_FORWARD)]
    for s in traj.steps:
        out.append(StepInfo(s.d, min(s.theta, math.pi), s.action))
    return out
