"""Experiment orchestration shared by the CLI and the acceptance suite."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import torch

from ..evalkit import AlwaysStopAgent, EvalReport, OracleEvalAgent, PolicyAgent, RandomAgent, evaluate
from ..navpolicy import NavPolicy, load_pretrained_encoder
from ..neuralcore import AdamW, AdamWConfig, CheckpointError, load_checkpoint, load_into_module, save_checkpoint
from ..simworld import NavEnv, VectorNavEnv, generate_demos, read_demos, sample_episodes, write_demos
from ..trainers import RolloutCollector, make_ppo_optimizer, ppo_update
from ..trainers.bc import bc_epoch, bc_evaluate, build_demo_dataset, make_bc_optimizer
from ..trainers.mae import build_frame_dataset, mae_evaluate, mae_pretrain_epoch, save_mae
from ..trainers.metrics import MetricsLogger
from ..vitenc import MaskedAutoencoder
from .config import RunConfig

VAL_EPISODE_SEED = 2024  # fixed so every training seed is scored on the same held-out set
RESOLVED_CONFIG = "config.resolved.json"


def prepare_run_dir(cfg: RunConfig, out_dir=None) -> Path:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / RESOLVED_CONFIG).write_text(cfg.to_json(), encoding="utf-8")
    return out


def train_episodes(cfg: RunConfig):
    return sample_episodes(cfg.train_scene_seeds(), cfg.data.num_train_episodes, cfg.seed, cfg.episode_config(), "train")


def val_episodes(cfg: RunConfig, n: int | None = None):
    return sample_episodes(cfg.val_scene_seeds(), n or cfg.data.num_val_episodes, VAL_EPISODE_SEED,
                           cfg.episode_config(), "val")


def _set_threads():
    torch.set_num_threads(1)


# ---- checkpoints ---------------------------------------------------------------

def save_training_checkpoint(path, policy: NavPolicy, optimizer: AdamW, header: dict) -> None:
    tensors = dict(policy.state_dict())
    for name, slot in optimizer.state.items():
        for k, v in slot.items():
            tensors[f"optim/{name}/{k}"] = v
    h = {"kind": "policy", "policy_config": policy.cfg.to_dict(), "optimizer_steps": optimizer.step_count}
    h.update(header)
    save_checkpoint(path, tensors, h)


def load_policy_checkpoint(path, expected_config=None) -> tuple[NavPolicy, dict, dict]:
    """Returns (policy, header, optimizer tensors). Raises CheckpointError on incompatibility."""
    from ..navpolicy import PolicyConfig

    tensors, header = load_checkpoint(path)
    if header.get("kind") != "policy":
        raise CheckpointError(f"{path} is not a policy checkpoint")
    pcfg = PolicyConfig.from_dict(header["policy_config"])
    if expected_config is not None and pcfg != expected_config:
        raise CheckpointError("checkpoint policy config differs from the run config")
    policy = NavPolicy(pcfg)
    load_into_module(policy, {k: v for k, v in tensors.items() if not k.startswith("optim/")})
    optim = {k[len("optim/"):]: v for k, v in tensors.items() if k.startswith("optim/")}
    return policy, header, optim


def _restore_optimizer(optimizer: AdamW, optim_tensors: dict, steps: int) -> None:
    state: dict = {}
    for key, v in optim_tensors.items():
        name, slot = key.rsplit("/", 1)
        state.setdefault(name, {})[slot] = v.clone()
    optimizer.load_state_dict({"step_count": steps, "state": state})


# ---- PPO -------------------------------------------------------------------------

def evaluate_policy(policy: NavPolicy, cfg: RunConfig, episodes, seed: int) -> EvalReport:
    return evaluate(PolicyAgent(policy, cfg.augment_config()), episodes, cfg.env_config(), seed)


def train_ppo(cfg: RunConfig, out_dir=None, resume=None, max_updates: int | None = None,
              log_wall_clock: bool = True) -> dict:
    _set_threads()
    out = prepare_run_dir(cfg, out_dir)
    torch.manual_seed(cfg.seed)
    pcfg = cfg.policy_config()
    ppo = cfg.ppo_config()
    start_update = 0
    env_steps = 0
    best_sr = -1.0
    if resume:
        policy, header, optim_t = load_policy_checkpoint(resume, pcfg)
        optimizer = make_ppo_optimizer(policy, ppo)
        _restore_optimizer(optimizer, optim_t, int(header.get("optimizer_steps", 0)))
        start_update = int(header.get("update", 0))
        env_steps = int(header.get("env_steps", 0))
        best_sr = float(header.get("best_success_rate", -1.0))
    else:
        policy = NavPolicy(pcfg)
        if cfg.pretrained_encoder:
            load_pretrained_encoder(policy, cfg.pretrained_encoder)
        optimizer = make_ppo_optimizer(policy, ppo)
    episodes = train_episodes(cfg)
    val = val_episodes(cfg, cfg.ppo.eval_episodes)
    venv = VectorNavEnv.from_episodes(episodes, ppo.num_envs, cfg.env_config(), cfg.seed + start_update)
    augment = cfg.augment_config()
    collector = RolloutCollector(venv, policy, augment, cfg.seed + start_update)
    gen = torch.Generator().manual_seed(cfg.seed + start_update)
    logger = MetricsLogger(out / "metrics.jsonl", cfg.seed, log_wall_clock)
    steps_per_update = ppo.num_envs * ppo.rollout_length
    total_updates = math.ceil(cfg.ppo.total_steps / steps_per_update)
    if max_updates is not None:
        total_updates = min(total_updates, start_update + max_updates)
    summary = {"stopped_early": False}
    update = start_update
    for update in range(start_update + 1, total_updates + 1):
        buf = collector.collect(ppo.rollout_length)
        stats = ppo_update(buf, policy, optimizer, ppo, gen)
        env_steps += steps_per_update
        finished = collector.pop_finished()
        rec = {"update": update, "env_steps": env_steps, **stats, "episodes": len(finished)}
        if finished:
            rec["train_success_rate"] = float(np.mean([f["success"] for f in finished]))
        header = {"update": update, "env_steps": env_steps, "seed": cfg.seed}
        if update % cfg.ppo.eval_interval == 0 or update == total_updates:
            report = evaluate_policy(policy, cfg, val, cfg.seed)
            rec.update(val_success_rate=report.success_rate, val_spl=report.spl)
            metric = report.success_rate if cfg.task == "imagenav" else report.spl
            if metric > best_sr:
                best_sr = metric
                save_training_checkpoint(out / "best.ckpt", policy, optimizer, {**header, "best_success_rate": best_sr})
            target = cfg.ppo.target_success_rate
            if target is not None and report.success_rate >= target:
                summary["stopped_early"] = True
        if update % cfg.ppo.checkpoint_interval == 0 or update == total_updates or summary["stopped_early"]:
            save_training_checkpoint(out / "last.ckpt", policy, optimizer, {**header, "best_success_rate": best_sr})
        logger.log(rec)
        if summary["stopped_early"]:
            break
    summary.update(updates=update, env_steps=env_steps, best_metric=best_sr, run_dir=str(out))
    return summary


# ---- BC --------------------------------------------------------------------------

def gen_demos(cfg: RunConfig, out_path, num: int | None = None) -> Path:
    episodes = sample_episodes(cfg.train_scene_seeds(), num or cfg.data.num_demos, cfg.seed, cfg.episode_config(), "demo")
    trajs = generate_demos(episodes, cfg.episode_config())
    write_demos(out_path, trajs, cfg.episode_config())
    return Path(out_path)


def train_bc(cfg: RunConfig, demos_path, out_dir=None, log_wall_clock: bool = True) -> dict:
    _set_threads()
    out = prepare_run_dir(cfg, out_dir)
    torch.manual_seed(cfg.seed)
    _, records = read_demos(demos_path)
    env = NavEnv(records_episodes(records), cfg.env_config(), cfg.seed)
    data = build_demo_dataset(records, env)
    n_val = max(1, int(round(cfg.bc.val_fraction * len(data))))
    train, val = data[:-n_val], data[-n_val:]
    policy = NavPolicy(cfg.policy_config())
    if cfg.pretrained_encoder:
        load_pretrained_encoder(policy, cfg.pretrained_encoder)
    bc = cfg.bc_config()
    optimizer = make_bc_optimizer(policy, bc)
    rng = np.random.default_rng(cfg.seed)
    logger = MetricsLogger(out / "metrics.jsonl", cfg.seed, log_wall_clock)
    augment = cfg.augment_config()
    rec = {}
    for epoch in range(1, bc.epochs + 1):
        stats = bc_epoch(train, policy, optimizer, bc, rng, augment)
        held = bc_evaluate(val, policy, augment=augment if augment.apply_at_eval else None, seed=cfg.seed)
        rec = logger.log({"epoch": epoch, "train_loss": stats["loss"], "train_accuracy": stats["action_accuracy"],
                          "val_loss": held["loss"], "val_accuracy": held["action_accuracy"]})
    save_training_checkpoint(out / "last.ckpt", policy, optimizer, {"epoch": bc.epochs, "seed": cfg.seed})
    return {"val_accuracy": rec.get("val_accuracy"), "train_accuracy": rec.get("train_accuracy"), "run_dir": str(out)}


def records_episodes(records):
    return [r["episode"] for r in records]


# ---- MAE -------------------------------------------------------------------------

def pretrain_mae(cfg: RunConfig, out_dir=None, log_wall_clock: bool = True) -> dict:
    _set_threads()
    out = prepare_run_dir(cfg, out_dir)
    torch.manual_seed(cfg.seed)
    m = cfg.mae
    vit = cfg.policy_config().encoder
    frames = build_frame_dataset(cfg.train_scene_seeds(), m.num_frames, cfg.seed, vit.image_size, cfg.episode_config())
    held = build_frame_dataset(cfg.val_scene_seeds(), m.val_frames, VAL_EPISODE_SEED, vit.image_size, cfg.episode_config())
    model = MaskedAutoencoder(vit, decoder_depth=m.decoder_depth, normalize_pixels=m.normalize_pixels)
    optimizer = AdamW.for_module(model, AdamWConfig(learning_rate=m.learning_rate, beta2=0.95, weight_decay=m.weight_decay))
    rng = np.random.default_rng(cfg.seed)
    logger = MetricsLogger(out / "metrics.jsonl", cfg.seed, log_wall_clock)
    initial = mae_evaluate(held, model, m.mask_ratio, seed=0)
    logger.log({"epoch": 0, "val_loss": initial})
    val_loss = initial
    for epoch in range(1, m.epochs + 1):
        train_loss = mae_pretrain_epoch(frames, model, m.mask_ratio, optimizer, m.batch_size, rng)
        val_loss = mae_evaluate(held, model, m.mask_ratio, seed=0)
        logger.log({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
    save_mae(out / "mae.ckpt", model, {"seed": cfg.seed, "epochs": m.epochs})
    return {"initial_val_loss": initial, "final_val_loss": val_loss, "run_dir": str(out)}


# ---- evaluation --------------------------------------------------------------------

BASELINE_AGENTS = {"oracle": OracleEvalAgent, "random": RandomAgent, "stop": AlwaysStopAgent}


def run_eval(cfg: RunConfig, out_dir=None, checkpoint=None, agent: str | None = None, svg: bool = False,
             num_episodes: int | None = None) -> EvalReport:
    from ..evalkit import render_topdown
    from ..simworld import cached_scene

    _set_threads()
    out = prepare_run_dir(cfg, out_dir)
    episodes = val_episodes(cfg, num_episodes)
    if checkpoint:
        policy, header, _ = load_policy_checkpoint(checkpoint)
        if policy.cfg.obs_mode != cfg.obs_mode or policy.cfg.goal_mode != cfg.policy_config().goal_mode:
            raise CheckpointError("checkpoint observation/goal mode does not match the run config")
        ev_agent = PolicyAgent(policy, cfg.augment_config())
        name = str(checkpoint)
    else:
        name = agent or "oracle"
        if name not in BASELINE_AGENTS:
            raise ValueError(f"unknown agent {name!r}")
        ev_agent = BASELINE_AGENTS[name]()
    report, trajs = evaluate(ev_agent, episodes, cfg.env_config(), cfg.seed, keep_trajectories=True)
    report.metadata = {"agent": Path(name).name if checkpoint else name}
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    if svg:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        for t in trajs:
            scene = cached_scene(t.episode.scene_seed, cfg.episode_config().scene)
            (plots / f"{t.episode.episode_id}.svg").write_text(render_topdown(t, scene, cfg.env.goal_radius))
    return report


def analyze_failures(report_path, out_dir=None) -> dict:
    report = EvalReport.from_dict(json.loads(Path(report_path).read_text()))
    counts = report.failure_counts()
    failures = {k: v for k, v in counts.items() if k != "Success"}
    n_fail = sum(failures.values())
    summary = {
        "num_episodes": report.num_episodes,
        "num_failures": n_fail,
        "counts": failures,
        "fractions": {k: v / n_fail for k, v in failures.items()} if n_fail else {},
    }
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "failures.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


__all__ = ["analyze_failures", "gen_demos", "pretrain_mae", "run_eval", "train_bc", "train_ppo"]
