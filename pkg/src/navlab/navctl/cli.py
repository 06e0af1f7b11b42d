"""``navctl`` command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 incompatible checkpoint,
3 reward audit found a farmable loop.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..neuralcore import CheckpointError
from .config import ConfigError, parse_override, resolve_config

log = logging.getLogger("navctl")

EXIT_OK, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_HACKABLE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--preset", help="named preset shipped with the package")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. ppo.learning_rate=1e-4 (repeatable)")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--output-dir", help="run directory (overrides output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="navctl", description="Navigation experiments: data, training, evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-demos", help="write oracle demonstrations (JSONL)")
    _add_config_args(p)
    p.add_argument("--num", type=int, help="number of demos (default data.num_demos)")
    p.add_argument("--out", help="output file (default <output_dir>/demos.jsonl)")

    p = sub.add_parser("pretrain-mae", help="masked-autoencoder pretraining of the encoder")
    _add_config_args(p)

    p = sub.add_parser("train-ppo", help="train a policy with PPO")
    _add_config_args(p)
    p.add_argument("--resume", help="training checkpoint to resume from")
    p.add_argument("--max-updates", type=int, help="stop after this many updates (for smoke runs)")

    p = sub.add_parser("train-bc", help="behavior cloning from demonstrations")
    _add_config_args(p)
    p.add_argument("--demos", help="demo JSONL (default: config demos)")

    p = sub.add_parser("eval", help="evaluate a checkpoint or a baseline agent")
    _add_config_args(p)
    p.add_argument("--checkpoint", help="policy checkpoint (default: config checkpoint)")
    p.add_argument("--agent", choices=["oracle", "random", "stop"], help="baseline agent when no checkpoint")
    p.add_argument("--episodes", type=int, help="number of held-out episodes (default data.num_val_episodes)")
    p.add_argument("--svg", action="store_true", help="also write a top-down SVG per episode")

    p = sub.add_parser("analyze-failures", help="failure-category breakdown of an eval report")
    p.add_argument("report", help="report.json written by eval")
    p.add_argument("--output-dir", help="also write failures.json here")

    p = sub.add_parser("reward-audit", help="sum reward components over a closed loop")
    p.add_argument("--reward", choices=["zer", "potential"], default="potential")
    p.add_argument("--loop", default="builtin-hack",
                   help="'builtin-hack' or a JSON file with a list of {d, theta, action} steps")
    p.add_argument("--cycles", type=int, default=1, help="repeat the loop this many times")
    p.add_argument("--config", help="YAML run config supplying the rewards section")
    p.add_argument("--output-dir", help="also write audit.json and the resolved config here")

    p = sub.add_parser("plot", help="top-down SVG of evaluation trajectories")
    _add_config_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--agent", choices=["oracle", "random", "stop"])
    p.add_argument("--episodes", type=int, default=5)
    return parser


def _resolve(args):
    overrides = [parse_override(s) for s in args.overrides]
    if args.seed is not None:
        overrides.append({"seed": args.seed})
    if getattr(args, "output_dir", None):
        overrides.append({"output_dir": args.output_dir})
    return resolve_config(args.config, args.preset, overrides)


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_loop(spec: str, reward_cfg):
    from ..rewardlab import StepInfo, hack_loop_trace

    if spec == "builtin-hack":
        return hack_loop_trace(reward_cfg)
    raw = json.loads(Path(spec).read_text())
    steps = raw["steps"] if isinstance(raw, dict) else raw
    try:
        return [StepInfo(float(s["d"]), float(s["theta"]), int(s.get("action", 1)),
                         bool(s.get("is_terminal_stop", False))) for s in steps]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad loop file {spec}: {exc}") from exc


def cmd_reward_audit(args) -> int:
    from ..rewardlab import cycle_shaping_sum, get_reward_fn, repeat_cycle

    if args.config:
        cfg = resolve_config(args.config)
        reward_cfg = cfg.reward_config()
    else:
        from ..rewardlab import RewardConfig

        cfg, reward_cfg = None, RewardConfig()
    loop = _load_loop(args.loop, reward_cfg)
    if args.cycles > 1:
        loop = repeat_cycle(loop, args.cycles)
    try:
        audit = cycle_shaping_sum(loop, get_reward_fn(args.reward), reward_cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = {"reward": args.reward, "loop": args.loop, "cycles": args.cycles, **audit.to_dict()}
    if args.output_dir:
        out = Path(args.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if cfg is not None:
            (out / "config.resolved.json").write_text(cfg.to_json())
        (out / "audit.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    _print(result)
    return EXIT_HACKABLE if audit.hackable else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        return _dispatch(args)
    except ConfigError as exc:
        print(f"navctl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"navctl: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


def _dispatch(args) -> int:
    from . import runs

    if args.command == "reward-audit":
        return cmd_reward_audit(args)
    if args.command == "analyze-failures":
        try:
            summary = runs.analyze_failures(args.report, args.output_dir)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read report {args.report}: {exc}") from exc
        _print(summary)
        return EXIT_OK
    cfg = _resolve(args)
    if args.command == "gen-demos":
        out = runs.prepare_run_dir(cfg)
        path = runs.gen_demos(cfg, args.out or out / "demos.jsonl", args.num)
        log.info("wrote %s", path)
    elif args.command == "pretrain-mae":
        _print(runs.pretrain_mae(cfg))
    elif args.command == "train-ppo":
        _print(runs.train_ppo(cfg, resume=args.resume, max_updates=args.max_updates))
    elif args.command == "train-bc":
        demos = args.demos or cfg.demos
        if not demos:
            raise ConfigError("train-bc needs --demos or a demos path in the config")
        _print(runs.train_bc(cfg, demos))
    elif args.command in ("eval", "plot"):
        ckpt = args.checkpoint or cfg.checkpoint
        svg = True if args.command == "plot" else args.svg
        report = runs.run_eval(cfg, checkpoint=ckpt, agent=args.agent, svg=svg, num_episodes=args.episodes)
        _print({"num_episodes": report.num_episodes, "success_rate": report.success_rate, "spl": report.spl,
                "angle_success_rate": report.angle_success_rate, "failure_counts": report.failure_counts()})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
