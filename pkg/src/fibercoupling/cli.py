"""Command-line interface: train, eval, couple, sweep, characterize-deadzone, serve."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value

from .config import RunConfig, apply_overrides, load_run_config
from .testbed import characterize_deadzone


def _base_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or []:
        key, _, raw = item.partition("=")
        if not _:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        overrides[key] = json.loads(raw)
    return apply_overrides(config, overrides) if overrides else config


def cmd_train(args) -> int:
    from .harness.train import train

    config = _base_config(args)
    overrides = {}
    if args.algo is not None:
        overrides["agent.algo"] = args.algo
    if args.goal is not None:
        overrides["env.p_goal"] = args.goal
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    if args.noise_factor is not None:
        overrides["noise.noise_factor"] = args.noise_factor
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    config = apply_overrides(config, overrides)
    result = train(config)
    summary = {"out_dir": result.out_dir, "steps": result.steps}
    if result.final_eval is not None:
        summary["goal_probability"] = result.final_eval.goal_probability
        summary["mean_normalized_return"] = result.final_eval.mean_normalized_return
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    from .harness.evaluate import evaluate
    from .harness.train import load_checkpoint, rebuild_env_from_checkpoint

    config, agent, _ = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    env = rebuild_env_from_checkpoint(config, rng, shift_k=args.shift_k,
                                      shift_rng=np.random.default_rng(args.seed + 1))
    report = evaluate(agent, env, args.episodes, rng)
    print(json.dumps({
        "episodes": report.episodes,
        "goal_probability": report.goal_probability,
        "fail_probability": report.fail_probability,
        "timeout_probability": report.timeout_probability,
        "mean_end_power": report.mean_end_power,
        "mean_normalized_return": report.mean_normalized_return,
        "std_normalized_return": report.std_normalized_return,
        "mean_steps_to_goal": _jsonable(report.mean_steps_to_goal),
        "shift_k": args.shift_k,
    }))
    return 0


def cmd_couple(args) -> int:
    from .harness.evaluate import couple_to_goal, summarize_attempts
    from .harness.metrics import wilson_interval
    from .harness.train import load_checkpoint, rebuild_env_from_checkpoint

    config, agent, _ = load_checkpoint(args.checkpoint)
    rows = []
    for trial in range(args.trials):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, trial]))
        env = rebuild_env_from_checkpoint(config, rng)
        result = couple_to_goal(agent, env, args.max_episodes, rng,
                                seconds_per_step=config.seconds_per_step)
        first = result.episodes[0]
        rows.append({
            "mode": "agent", "start_power": first["start_power"],
            "end_power": result.episodes[-1]["end_power"],
            "steps": result.total_steps, "elapsed_s": result.total_seconds,
            "goal_reached": result.success,
            "first_episode_success": result.first_episode_success,
            "steps_to_goal": result.steps_to_goal if result.steps_to_goal else "",
        })
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    first_successes = sum(r["first_episode_success"] for r in rows)
    lo, hi = wilson_interval(first_successes, len(rows))
    summary = summarize_attempts([{**r, "steps": r["steps_to_goal"] or 0} for r in rows])
    summary.update({"first_episode_success": first_successes / len(rows),
                    "wilson_low": lo, "wilson_high": hi})
    print(json.dumps({k: _jsonable(v) for k, v in summary.items()}))
    return 0


def cmd_sweep(args) -> int:
    from .harness.sweep import load_grid_file, run_sweep

    base_overrides, grid, seeds = load_grid_file(args.grid)
    config = apply_overrides(_base_config(args), base_overrides)
    run_sweep(config, grid, seeds, args.out, workers=args.workers)
    return 0


def cmd_characterize(args) -> int:
    config = _base_config(args)
    model = config.testbed.build()
    noise = config.noise.build()
    if args.noise_factor is not None:
        noise = type(noise)(args.noise_factor, noise.medians, noise.log_sigma, noise.mode)
    rng = np.random.default_rng(args.seed)
    counts = characterize_deadzone(model, noise, rng, trials=args.trials)
    out = args.out or "deadzone.csv"
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "trial", "deadzone_steps"])
        for trial in range(counts.shape[0]):
            for axis in range(counts.shape[1]):
                writer.writerow([axis, trial, counts[trial, axis]])
    print(json.dumps({"out": out, "per_axis_median": np.median(counts, axis=0).tolist()}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .bridge.server import create_app

    config = _base_config(args)
    overrides = {}
    if args.noise_factor is not None:
        overrides["noise.noise_factor"] = args.noise_factor
    if args.goal is not None:
        overrides["env.p_goal"] = args.goal
    if overrides:
        config = apply_overrides(config, overrides)
    app = create_app(config, seed=args.seed, baseline_csv=args.baseline_csv)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibercoupling",
        description="Simulated fiber-coupling testbed, RL training harness, and human-play server.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run-config file")
        p.add_argument("--set", action="append", metavar="KEY=JSON",
                       help="dotted config override, e.g. env.p_goal=0.85")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="run one training session")
    common(p)
    p.add_argument("--algo", choices=["sac", "tqc", "crossq", "td3", "ddpg", "random"])
    p.add_argument("--goal", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--shift-k", type=int, default=0, choices=range(5))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("couple", help="repeated coupling attempts from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV of per-attempt rows")
    p.set_defaults(fn=cmd_couple)

    p = sub.add_parser("sweep", help="cartesian sweep over config overrides")
    common(p)
    p.add_argument("--grid", required=True, help="JSON grid file")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("characterize-deadzone",
                       help="probe per-axis dead zones, write CSV")
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_characterize)

    p = sub.add_parser("serve", help="human-play bridge server")
    common(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--noise-factor", type=float)
    p.add_argument("--goal", type=float)
    p.add_argument("--baseline-csv", default="baseline.csv")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
