"""Rewards, potential-based shaping, and hack-loop auditing."""
from .rewards import (
    HACK_TOLERANCE,
    REWARD_FUNCTIONS,
    RewardConfig,
    RewardTerms,
    ShapingAudit,
    StepInfo,
    accumulate,
    angle_potential,
    cycle_shaping_sum,
    distance_potential,
    get_reward_fn,
    hack_loop_trace,
    potential_reward,
    random_closed_walk,
    repeat_cycle,
    trajectory_step_infos,
    zer_reward,
)
