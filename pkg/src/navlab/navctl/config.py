"""Run configuration: strict YAML schema, presets, flag and environment overrides."""
from __future__ import annotations

import dataclasses
import json
import os
import re
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..navpolicy import AUGMENT_PRESETS, AugmentConfig, PolicyConfig
from ..rewardlab import REWARD_FUNCTIONS, RewardConfig
from ..simworld import EnvConfig, EpisodeConfig
from ..trainers import PpoConfig
from ..trainers.bc import BcConfig
from ..vitenc import VIT_PRESETS

SEED_ENV_VAR = "NAVCTL_SEED"
PRESET_NAMES = ("imagenav-desk", "imagenav-paper", "objectnav-desk", "vector-sanity")


class ConfigError(ValueError):
    """Invalid or unknown configuration (CLI exit code 1)."""


@dataclass
class EnvSection:
    image_size: int = 64
    max_steps: int = 200
    goal_radius: float = 1.0
    min_geodesic: float = 1.5
    max_geodesic: float = 5.0
    theta_mode: str = "heading"
    fov_deg: float = 90.0


@dataclass
class PolicySection:
    lstm_hidden: int = 512
    approx_output_size: int = 2048
    share_encoder_with_goal: bool = True
    vector_embed_dim: int = 128


@dataclass
class PpoSection:
    num_envs: int = 8
    rollout_length: int = 64
    ppo_epochs: int = 2
    minibatches: int = 2
    clip_epsilon: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 2.5e-4
    weight_decay: float = 1e-6
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    total_steps: int = 5_000_000
    eval_interval: int = 100  # updates
    eval_episodes: int = 100
    checkpoint_interval: int = 100  # updates
    target_success_rate: float | None = None  # stop early once validation SR reaches this


@dataclass
class BcSection:
    encoder_lr: float = 1e-4
    head_lr: float = 1e-3
    weight_decay: float = 1e-6
    batch_episodes: int = 8
    epochs: int = 10
    max_grad_norm: float = 1.0
    val_fraction: float = 0.1


@dataclass
class MaeSection:
    epochs: int = 50
    num_frames: int = 2000
    val_frames: int = 200
    batch_size: int = 64
    mask_ratio: float = 0.75
    learning_rate: float = 1.5e-4
    weight_decay: float = 0.05
    normalize_pixels: bool = True
    decoder_depth: int = 2


@dataclass
class DataSection:
    train_scenes: list = field(default_factory=lambda: [0, 200])  # half-open seed range
    val_scenes: list = field(default_factory=lambda: [10_000, 10_020])
    num_train_episodes: int = 4000
    num_val_episodes: int = 100
    num_demos: int = 500


@dataclass
class RewardSection:
    c_s: float = 5.0
    c_a: float = 5.0
    r_g: float = 1.0
    theta_g_deg: float = 25.0
    slack: float = 0.01


@dataclass
class RunConfig:
    task: str = "imagenav"
    reward: str = "potential"
    obs_mode: str = "image"
    encoder: str = "tiny-desk"
    augmentation: str = "imagenav"
    seed: int = 0
    output_dir: str = "runs/default"
    pretrained_encoder: str | None = None
    demos: str | None = None
    checkpoint: str | None = None
    env: EnvSection = field(default_factory=EnvSection)
    policy: PolicySection = field(default_factory=PolicySection)
    ppo: PpoSection = field(default_factory=PpoSection)
    bc: BcSection = field(default_factory=BcSection)
    mae: MaeSection = field(default_factory=MaeSection)
    data: DataSection = field(default_factory=DataSection)
    rewards: RewardSection = field(default_factory=RewardSection)

    # ---- validation and derived objects --------------------------------------
    def validate(self) -> "RunConfig":
        if self.task not in ("imagenav", "objectnav"):
            raise ConfigError(f"task must be imagenav or objectnav, got {self.task!r}")
        if self.reward not in REWARD_FUNCTIONS:
            raise ConfigError(f"reward must be one of {sorted(REWARD_FUNCTIONS)}, got {self.reward!r}")
        if self.obs_mode not in ("image", "vector"):
            raise ConfigError(f"obs_mode must be image or vector, got {self.obs_mode!r}")
        if self.encoder not in VIT_PRESETS:
            raise ConfigError(f"unknown encoder preset {self.encoder!r}; known: {sorted(VIT_PRESETS)}")
        if self.augmentation not in AUGMENT_PRESETS:
            raise ConfigError(f"unknown augmentation preset {self.augmentation!r}; known: {sorted(AUGMENT_PRESETS)}")
        if self.env.theta_mode not in ("heading", "bearing"):
            raise ConfigError("env.theta_mode must be heading or bearing")
        for name in ("train_scenes", "val_scenes"):
            r = getattr(self.data, name)
            if len(r) != 2 or not r[0] < r[1]:
                raise ConfigError(f"data.{name} must be a [start, stop) seed range")
        if self.obs_mode == "image" and VIT_PRESETS[self.encoder].image_size != self.env.image_size:
            raise ConfigError("env.image_size must match the encoder preset's image size")
        try:
            self.ppo_config()
            self.reward_config()
            AugmentConfig(**dataclasses.asdict(self.augment_config()))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def episode_config(self) -> EpisodeConfig:
        e = self.env
        import math

        return EpisodeConfig(task=self.task, max_steps=e.max_steps, min_geodesic=e.min_geodesic,
                             max_geodesic=e.max_geodesic, goal_radius=e.goal_radius, theta_mode=e.theta_mode,
                             fov=math.radians(e.fov_deg))

    def reward_config(self) -> RewardConfig:
        return RewardConfig.from_dict(dataclasses.asdict(self.rewards))

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.episode_config(), self.obs_mode, self.env.image_size, self.reward, self.reward_config())

    def policy_config(self) -> PolicyConfig:
        p = self.policy
        return PolicyConfig(encoder=VIT_PRESETS[self.encoder], approx_output_size=p.approx_output_size,
                            lstm_hidden=p.lstm_hidden, goal_mode="category" if self.task == "objectnav" else "image",
                            share_encoder_with_goal=p.share_encoder_with_goal, obs_mode=self.obs_mode,
                            vector_embed_dim=p.vector_embed_dim)

    def ppo_config(self) -> PpoConfig:
        fields = {f.name for f in dataclasses.fields(PpoConfig)}
        return PpoConfig(**{k: v for k, v in dataclasses.asdict(self.ppo).items() if k in fields})

    def bc_config(self) -> BcConfig:
        fields = {f.name for f in dataclasses.fields(BcConfig)}
        return BcConfig(**{k: v for k, v in dataclasses.asdict(self.bc).items() if k in fields})

    def augment_config(self) -> AugmentConfig:
        return AUGMENT_PRESETS[self.augmentation]

    def train_scene_seeds(self) -> list[int]:
        return list(range(*self.data.train_scenes))

    def val_scene_seeds(self) -> list[int]:
        return list(range(*self.data.val_scenes))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path or 'config'}")
    hints = _hints(cls)
    kwargs = {}
    for name, value in data.items():
        where = f"{path}.{name}" if path else name
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, value, where)
        else:
            kwargs[name] = _coerce(tp, value, where)
    return cls(**kwargs)


_FLOAT_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", typing.Union)):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if tp is float:
        if isinstance(value, str) and _FLOAT_RE.fullmatch(value.strip()):
            return float(value)  # YAML 1.1 reads "1e-4" as a string
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list")
        return list(value)
    return value


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data or {}, "").validate()


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def preset_dict(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; known: {list(PRESET_NAMES)}")
    text = resources.files(__package__).joinpath("presets", f"{name}.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text) or {}


def load_config_dict(path: str | Path | None) -> dict:
    """File contents; a top-level ``preset:`` key is expanded first and the file overrides it."""
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a mapping")
    if "preset" in data:
        data = _merge(preset_dict(data.pop("preset")), data)
    return data


def parse_override(text: str) -> dict:
    """``a.b=value`` with YAML-typed value -> nested dict."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw) if raw else None
    node: dict = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur[p] = {}
        cur = cur[p]
    cur[parts[-1]] = value
    return node


def resolve_config(path=None, preset: str | None = None, overrides: list[dict] | None = None,
                   environ: dict | None = None) -> RunConfig:
    """Precedence (lowest to highest): defaults, preset, file, flag overrides, ``NAVCTL_SEED``."""
    data: dict = preset_dict(preset) if preset else {}
    data = _merge(data, load_config_dict(path))
    for o in overrides or []:
        data = _merge(data, o)
    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV_VAR):
        try:
            data["seed"] = int(environ[SEED_ENV_VAR])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    return config_from_dict(data)
