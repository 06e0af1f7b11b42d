"""Procedural 2-D navigation world."""
from .episodes import (
    IMAGENAV,
    OBJECTNAV,
    EpisodeConfig,
    EpisodeSpec,
    StepRecord,
    TrajectoryRecord,
    imagenav_success,
    measure,
    new_trajectory,
    objectnav_success,
    sample_episodes,
    task_success,
)
from .geodesic import OccupiedPositionError, distance_field, geodesic_distance, shortest_path_cells
from .geometry import FORWARD_STEP, NUM_ACTIONS, TURN_ANGLE, Action, AgentState, angle_diff, line_of_sight, step
from .oracle import OracleAgent, UnreachableGoalError, oracle_demonstration, rollout_oracle
from .render import column_angles, raycast_view, render_observation
from .scene import CATEGORY_NAMES, NUM_CATEGORIES, ObjectInstance, Scene, SceneConfig, cached_scene, generate_scene
from .demos import DEMO_VERSION, DemoFormatError, generate_demos, read_demos, replay_demo, write_demos
from .env import EnvConfig, NavEnv, VectorNavEnv, stack_obs, vector_observation
