"""Versioned JSON-lines storage for oracle demonstrations.

Only actions and agent states are stored; observations are regenerated on replay.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from .episodes import EpisodeConfig, EpisodeSpec, TrajectoryRecord, new_trajectory
from .geometry import Action, AgentState, step
from .oracle import oracle_demonstration
from .scene import Scene, SceneConfig, cached_scene

DEMO_FORMAT = "navlab-demos"
DEMO_VERSION = 1


class DemoFormatError(ValueError):
    pass


def scene_digest(scene: Scene) -> str:
    h = hashlib.sha256()
    h.update(scene.occupancy.tobytes())
    h.update(repr(scene.objects).encode())
    return h.hexdigest()[:16]


def generate_demos(episodes: list[EpisodeSpec], cfg: EpisodeConfig) -> list[TrajectoryRecord]:
    return [oracle_demonstration(cached_scene(ep.scene_seed, cfg.scene), ep, cfg) for ep in episodes]


def write_demos(path, trajs: list[TrajectoryRecord], cfg: EpisodeConfig) -> None:
    header = {
        "format": DEMO_FORMAT,
        "version": DEMO_VERSION,
        "num_episodes": len(trajs),
        "scene_config": asdict(cfg.scene),
        "task": cfg.task,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for t in trajs:
            rec = demo_record(t, cfg)
            rec["episode"] = t.episode.to_dict()
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def demo_record(traj: TrajectoryRecord, cfg: EpisodeConfig) -> dict:
    """In-memory record, as returned by :func:`read_demos`."""
    scene = cached_scene(traj.episode.scene_seed, cfg.scene)
    return {
        "episode": traj.episode,
        "scene_digest": scene_digest(scene),
        "actions": [int(s.action) for s in traj.steps],
        "states": [[s.state.x, s.state.y, s.state.heading] for s in traj.steps],
    }


def read_demos(path) -> tuple[dict, list[dict]]:
    """Returns (header, records); validates the format tag and version."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DemoFormatError("empty demonstration file")
    header = json.loads(lines[0])
    if header.get("format") != DEMO_FORMAT:
        raise DemoFormatError(f"not a demonstration file: format={header.get('format')!r}")
    if header.get("version") != DEMO_VERSION:
        raise DemoFormatError(f"unsupported demo version {header.get('version')} (expected {DEMO_VERSION})")
    records = [json.loads(line) for line in lines[1:] if line.strip()]
    if len(records) != header["num_episodes"]:
        raise DemoFormatError("record count does not match header")
    for r in records:
        r["episode"] = EpisodeSpec.from_dict(r["episode"])
        if len(r["actions"]) != len(r["states"]):
            raise DemoFormatError(f"episode {r['episode'].episode_id}: actions/states length mismatch")
    return header, records


def replay_demo(record: dict, cfg: EpisodeConfig) -> list[AgentState]:
    """States visited before each action, starting with the episode start.

    Raises DemoFormatError if the scene or the simulated states disagree with the file.
    """
    ep: EpisodeSpec = record["episode"]
    scene = cached_scene(ep.scene_seed, cfg.scene)
    if record.get("scene_digest") != scene_digest(scene):
        raise DemoFormatError(f"episode {ep.episode_id}: scene differs from the one used to record the demo")
    state = ep.start
    before = []
    for a, (x, y, h) in zip(record["actions"], record["states"]):
        before.append(state)
        state, _ = step(scene, state, Action(a))
        if abs(state.x - x) > 1e-9 or abs(state.y - y) > 1e-9 or abs(state.heading - h) > 1e-9:
            raise DemoFormatError(f"episode {ep.episode_id}: replay diverged from stored states")
    return before


def scene_config_from_header(header: dict) -> SceneConfig:
    return SceneConfig(**header["scene_config"])


__all__ = ["DEMO_FORMAT", "DEMO_VERSION", "DemoFormatError", "demo_record", "generate_demos", "read_demos", "replay_demo",
           "scene_digest", "write_demos", "new_trajectory"]
