"""Command-line front end.

Subcommands::

    riskskills train      multi-trial risk-sensitive training
    riskskills er-train   multi-trial expected-return baseline training
    riskskills eval       frozen-checkpoint evaluation table
    riskskills gradcheck  gradient verification suite
    riskskills heatmap    dribble-power field over striker positions

Exit codes: 0 success, 2 invalid configuration or inputs, 3 IO failure
(missing or unreadable files), 4 verification-check failure.

Every artifact-producing subcommand writes a ``manifest.json`` next to its
outputs binding them to the config hash and per-file digests.  Trial seeds
derive from the root seed as ``SeedSequence((root, trial))``, so trials are
independent streams and the whole run replays byte-identically from
(config, seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import gradcheck as gradcheck_mod
from .config import (EnvSection, RunConfig, build_env, build_episode, build_policy,
                     build_train_config, canonical_text, config_hash, load_config,
                     parse_config)
from .core import (ConfigurationError, RewardMode, ValidationError,
                   success_probability_estimate)
from .er import ErConfig, train_er
from .figures import save_curve_figure, save_heatmap_figure, save_outcome_figure
from .learner import evaluate, train, write_curve
from .manifest import RunManifest, write_manifest
from .offense import heatmap_region_means, metrics_collect, rap_mean_field
from .policy import load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHECK = 4

EVAL_SCHEMA_VERSION = 1
HEATMAP_SCHEMA_VERSION = 1

EVAL_COLUMNS = ("episodes", "goals", "captures", "out_of_time", "goal_rate",
                "success_rate", "avg_reward", "avg_episode_length")


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def trial_seed(root: int, trial: int) -> int:
    """Derived per-trial seed; distinct trials get independent streams."""
    return int(np.random.SeedSequence((root, trial)).generate_state(1, np.uint64)[0])


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        cfg = parse_config("")
    scenario = getattr(args, "scenario", None)
    if scenario:
        cfg = dataclasses.replace(cfg, env=EnvSection(scenario=scenario))
    return cfg


# ---------------------------------------------------------------------------
# train / er-train


def cmd_train(args, mode: RewardMode) -> int:
    cfg = _load_run_config(args)
    tag = mode.value
    out = args.out or os.path.join("runs", "train" if tag == "pg" else "er-train")
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest(command="train" if tag == "pg" else "er-train",
                           config_sha256=config_hash(cfg), root_seed=args.seed)
    seeds = []
    summaries = []
    for trial in range(args.trials):
        seed = trial_seed(args.seed, trial)
        seeds.append(seed)
        env = build_env(cfg)
        policy = build_policy(cfg, env)
        train_cfg = build_train_config(cfg, mode, seed, episodes=args.episodes)
        if mode is RewardMode.EXPECTED_RETURN:
            er_cfg = ErConfig(episode=train_cfg.episode, episodes=train_cfg.episodes,
                              batch_size=train_cfg.batch_size, schedule=train_cfg.schedule,
                              advantage=train_cfg.advantage, critic_step=train_cfg.critic_step,
                              seed=seed, early_stop=train_cfg.early_stop)
            result = train_er(env, policy, er_cfg)
        else:
            result = train(env, policy, train_cfg)
        trial_dir = os.path.join(out, f"trial{trial}")
        os.makedirs(trial_dir, exist_ok=True)
        curve_path = os.path.join(trial_dir, "curve.tsv")
        ckpt_path = os.path.join(trial_dir, "checkpoint.json")
        png_path = os.path.join(trial_dir, "curve.png")
        write_curve(curve_path, result.curve, mode)
        save_checkpoint(result.policy, ckpt_path, seed_lineage=(args.seed, trial))
        save_curve_figure(result.curve, png_path, mode=tag)
        for path in (curve_path, ckpt_path, png_path):
            manifest.add_artifact(out, path)
        tail = result.curve[-1] if result.curve else None
        summaries.append((trial, result.episodes_run,
                          tail.success_prob if tail else 0.0,
                          tail.mean_return if tail else 0.0))
        for warning in result.warnings:
            print(f"trial {trial} warning: {warning}", file=sys.stderr)
    manifest.extra = {
        "mode": tag,
        "scenario": cfg.env.scenario,
        "trials": args.trials,
        "trial_seeds": seeds,
        "created": _utc_now(),
        "config_canonical": canonical_text(cfg),
    }
    manifest_path = write_manifest(manifest, out)
    print(f"{manifest.command}: scenario={cfg.env.scenario} trials={args.trials} "
          f"root_seed={args.seed}")
    for trial, episodes, success, mean_return in summaries:
        print(f"  trial {trial}: episodes={episodes} "
              f"final_success={success:.3f} final_return={mean_return:.4f}")
    print(f"  artifacts: {manifest_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _format_eval_rows(values: dict) -> str:
    header = EVAL_COLUMNS
    cells = []
    for name in header:
        v = values[name]
        cells.append(f"{v:.4f}" if isinstance(v, float) else str(v))
    widths = [max(len(h), len(c)) for h, c in zip(header, cells)]
    line1 = "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()
    line2 = "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    return line1 + "\n" + line2 + "\n"


def _eval_tsv(values: dict, mode: str) -> str:
    lines = [f"# schema_version: {EVAL_SCHEMA_VERSION}", f"# mode: {mode}",
             "\t".join(EVAL_COLUMNS)]
    row = []
    for name in EVAL_COLUMNS:
        v = values[name]
        row.append(repr(v) if isinstance(v, float) else str(v))
    lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    env = build_env(cfg)
    policy, _lineage = load_checkpoint(args.checkpoint, env)
    episode = build_episode(cfg, RewardMode.PROBABILISTIC_GOAL)
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0)))
    trajectories = evaluate(env, policy, episode, args.episodes, rng, greedy=args.greedy)
    metrics = metrics_collect(trajectories)
    success = success_probability_estimate(trajectories)
    values = {
        "episodes": metrics.episodes,
        "goals": metrics.goals,
        "captures": metrics.captures,
        "out_of_time": metrics.out_of_time,
        "goal_rate": metrics.goals / metrics.episodes,
        "success_rate": success,
        "avg_reward": metrics.avg_reward,
        "avg_episode_length": metrics.avg_episode_length,
    }
    table = _format_eval_rows(values)
    print(table, end="")
    out = args.out or os.path.join("runs", "eval")
    os.makedirs(out, exist_ok=True)
    tsv_path = os.path.join(out, "eval.tsv")
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write(_eval_tsv(values, "greedy" if args.greedy else "sampling"))
    png_path = os.path.join(out, "eval.png")
    save_outcome_figure(("goal", "capture", "out_of_time"),
                        (metrics.goals, metrics.captures, metrics.out_of_time), png_path)
    manifest = RunManifest(command="eval", config_sha256=config_hash(cfg),
                           root_seed=args.seed)
    for path in (tsv_path, png_path):
        manifest.add_artifact(out, path)
    manifest.extra = {
        "mode": "greedy" if args.greedy else "sampling",
        "scenario": cfg.env.scenario,
        "checkpoint": os.path.abspath(args.checkpoint),
        "created": _utc_now(),
        "config_canonical": canonical_text(cfg),
    }
    write_manifest(manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(args) -> int:
    report = gradcheck_mod.run_gradient_checks(seed=args.seed,
                                               n_samples=args.samples)
    print(report.format(), end="")
    if not report.passed:
        print("gradient checks FAILED", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


# ---------------------------------------------------------------------------
# heatmap


def _heatmap_tsv(rows) -> str:
    lines = [f"# schema_version: {HEATMAP_SCHEMA_VERSION}",
             "\t".join(("x", "y", "rap_mean", "rap_mean_clamped"))]
    for x, y, mean, clamped in rows:
        lines.append("\t".join(repr(float(v)) for v in (x, y, mean, clamped)))
    return "\n".join(lines) + "\n"


def cmd_heatmap(args) -> int:
    cfg = _load_run_config(args)
    env = build_env(cfg)
    policy, _lineage = load_checkpoint(args.checkpoint, env)
    rows = rap_mean_field(policy, env, resolution=args.resolution, w_value=args.w)
    out = args.out or os.path.join("runs", "heatmap")
    os.makedirs(out, exist_ok=True)
    tsv_path = os.path.join(out, "heatmap.tsv")
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write(_heatmap_tsv(rows))
    png_path = os.path.join(out, "heatmap.png")
    save_heatmap_figure(rows, png_path)
    manifest = RunManifest(command="heatmap", config_sha256=config_hash(cfg),
                           root_seed=args.seed)
    for path in (tsv_path, png_path):
        manifest.add_artifact(out, path)
    manifest.extra = {
        "scenario": cfg.env.scenario,
        "checkpoint": os.path.abspath(args.checkpoint),
        "resolution": args.resolution,
        "w": args.w,
        "created": _utc_now(),
        "config_canonical": canonical_text(cfg),
    }
    write_manifest(manifest, out)
    print(f"heatmap: {len(rows)} rows at resolution {args.resolution} -> {tsv_path}")
    if args.resolution >= 3:
        near_half, near_goal = heatmap_region_means(rows)
        print(f"  mean clamped power, halfway region: {near_half:.2f}")
        print(f"  mean clamped power, goal region:    {near_goal:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskskills",
        description="Risk-sensitive skill training in a miniature soccer offense.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI config path")
    common.add_argument("--seed", type=int, default=0, help="root seed")
    common.add_argument("--out", default=None, help="artifact directory")

    for name, mode in (("train", RewardMode.PROBABILISTIC_GOAL),
                       ("er-train", RewardMode.EXPECTED_RETURN)):
        p = sub.add_parser(name, parents=[common],
                           help=f"{'risk-sensitive' if mode.value == 'pg' else 'expected-return'} training")
        p.add_argument("--trials", type=int, default=3)
        p.add_argument("--episodes", type=int, default=None,
                       help="episode budget per trial (default from config)")
        p.add_argument("--scenario", choices=("winning", "losing"), default=None)
        p.set_defaults(func=lambda a, m=mode: cmd_train(a, m))

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--scenario", choices=("winning", "losing"), default=None)
    p.add_argument("--greedy", action="store_true",
                   help="argmax skill and mean power instead of sampling")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common], help="gradient verification suite")
    p.add_argument("--samples", type=int, default=100_000,
                   help="Monte Carlo trajectories per parameter setting")
    p.set_defaults(func=cmd_gradcheck, seed=gradcheck_mod.DEFAULT_SEED)

    p = sub.add_parser("heatmap", parents=[common], help="dribble-power field")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--resolution", type=int, default=12)
    p.add_argument("--w", type=float, default=0.0,
                   help="accumulated-reward coordinate to probe")
    p.add_argument("--scenario", choices=("winning", "losing"), default=None)
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
