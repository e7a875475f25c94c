#!/usr/bin/env python3
"""Run the full acceptance training matrix and summarize it for the test suite.

Executes, in priority order, every training run the heavy acceptance criteria
need, then the shifted-surface evaluations.  Runs are skipped when their
output directory already holds a finished run, so the script can resume after
interruption.  Results land under results/acceptance/ with a rolling
matrix_summary.json that tests consume.

Usage: python scripts/run_acceptance_matrix.py [--out results/acceptance] [--only PREFIX]
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from fibercoupling.agents import AgentConfig, RandomAgent  # noqa: E402
from fibercoupling.config import RunConfig, apply_overrides, run_config_to_dict  # noqa: E402
from fibercoupling.harness.evaluate import evaluate  # noqa: E402
from fibercoupling.harness.train import build_env, load_checkpoint, \
    rebuild_env_from_checkpoint, train  # noqa: E402

SEEDS = (0, 1, 2, 3, 4)
SHIFT_SEEDS = (0, 1, 2)
STEPS_FULL = 100_000
STEPS_SHIFT = 60_000


def run_specs() -> list[dict]:
    """(name, overrides) for every training run, highest priority first."""
    specs = []
    for seed in SEEDS:
        specs.append({"name": f"learning_sac_s{seed}", "criterion": "learning",
                      "overrides": {"agent.algo": "sac", "env.p_goal": 0.8,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    for seed in SEEDS:
        specs.append({"name": f"learning_crossq_s{seed}", "criterion": "learning",
                      "overrides": {"agent.algo": "crossq", "env.p_goal": 0.8,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    for seed in SEEDS:
        specs.append({"name": f"learning_tqc_s{seed}", "criterion": "learning",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.8,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    # Direct goal-0.9 runs serve both the noise-factor baseline and the
    # curriculum comparison; noise factor 3 and the staircase complete them.
    for seed in SEEDS:
        specs.append({"name": f"direct09_tqc_s{seed}", "criterion": "noise0+curriculum",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.9,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    for seed in SEEDS:
        specs.append({"name": f"noise3_tqc_s{seed}", "criterion": "noise3",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.9,
                                    "noise.noise_factor": 3.0,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    for seed in SEEDS:
        specs.append({"name": f"stair_tqc_s{seed}", "criterion": "curriculum",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.85,
                                    "curriculum.enabled": True,
                                    "curriculum.mode": "staircase",
                                    "curriculum.p_start_goal": 0.85,
                                    "curriculum.p_final_goal": 0.9,
                                    "total_steps": STEPS_FULL, "seed": seed}})
    for seed in SHIFT_SEEDS:
        specs.append({"name": f"shift_noabs_tqc_s{seed}", "criterion": "shift",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.85,
                                    "total_steps": STEPS_SHIFT, "seed": seed}})
    for seed in SHIFT_SEEDS:
        specs.append({"name": f"shift_abs_tqc_s{seed}", "criterion": "shift",
                      "overrides": {"agent.algo": "tqc", "env.p_goal": 0.85,
                                    "env.include_abs_positions": True,
                                    "total_steps": STEPS_SHIFT, "seed": seed}})
    return specs


def final_eval_row(out_dir: str) -> dict | None:
    path = os.path.join(out_dir, "evals.csv")
    if not os.path.exists(path):
        return None
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows[-1] if rows else None


def run_finished(out_dir: str, total_steps: int) -> bool:
    row = final_eval_row(out_dir)
    return (row is not None and int(row["step"]) >= total_steps
            and os.path.exists(os.path.join(out_dir, "checkpoint_final.json.gz")))


def write_summary(out_root: str, summary: dict) -> None:
    path = os.path.join(out_root, "matrix_summary.json")
    with open(path + ".tmp", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    os.replace(path + ".tmp", path)


def random_baseline(out_root: str, summary: dict) -> None:
    """Goal probability of the uniform-random policy at goal 0.8, noiseless."""
    if "random_baseline" in summary:
        return
    config = apply_overrides(RunConfig(), {"env.p_goal": 0.8})
    probs = []
    for seed in SEEDS:
        rng = np.random.default_rng(np.random.SeedSequence([777, seed]))
        env = build_env(config, rng, reset_method="A")
        agent = RandomAgent(env.config.observation_size, 4, AgentConfig(algo="random"))
        report = evaluate(agent, env, 100, rng)
        probs.append(report.goal_probability)
    summary["random_baseline"] = {"goal_probability_per_seed": probs,
                                  "goal_probability_mean": float(np.mean(probs))}
    write_summary(out_root, summary)


def shift_evaluations(out_root: str, summary: dict) -> None:
    """Evaluate the shift-robustness checkpoints under k = 0..4 shifted means."""
    table = summary.setdefault("shift_eval", {})
    for kind in ("noabs", "abs"):
        for seed in SHIFT_SEEDS:
            name = f"shift_{kind}_tqc_s{seed}"
            ckpt = os.path.join(out_root, name, "checkpoint_final.json.gz")
            if name in table or not os.path.exists(ckpt):
                continue
            config, agent, _ = load_checkpoint(ckpt)
            probs = {}
            for k in range(5):
                reports = []
                for draw in range(3):  # average over shift draws
                    rng = np.random.default_rng(np.random.SeedSequence([seed, k, draw]))
                    env = rebuild_env_from_checkpoint(
                        config, rng, shift_k=k,
                        shift_rng=np.random.default_rng(
                            np.random.SeedSequence([999, seed, k, draw])))
                    reports.append(evaluate(agent, env, 100, rng).goal_probability)
                probs[str(k)] = float(np.mean(reports))
            table[name] = probs
            write_summary(out_root, summary)
            print(f"shift eval {name}: {probs}", flush=True)


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results/acceptance")
    parser.add_argument("--only", default=None,
                        help="run only specs whose name starts with this prefix")
    args = parser.parse_args()
    out_root = args.out
    os.makedirs(out_root, exist_ok=True)
    summary_path = os.path.join(out_root, "matrix_summary.json")
    summary = {}
    if os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            summary = json.load(fh)
    summary.setdefault("runs", {})

    random_baseline(out_root, summary)

    for spec in run_specs():
        if args.only and not spec["name"].startswith(args.only):
            continue
        name = spec["name"]
        out_dir = os.path.join(out_root, name)
        total = spec["overrides"]["total_steps"]
        if not run_finished(out_dir, total):
            config = apply_overrides(RunConfig(), {**spec["overrides"],
                                                   "out_dir": out_dir,
                                                   "loss_log_every": 100})
            print(f"[{time.strftime('%H:%M:%S')}] training {name} "
                  f"({json.dumps(spec['overrides'])})", flush=True)
            t0 = time.time()
            train(config)
            print(f"[{time.strftime('%H:%M:%S')}] {name} done in "
                  f"{(time.time() - t0) / 60:.1f} min", flush=True)
        row = final_eval_row(out_dir)
        summary["runs"][name] = {
            "criterion": spec["criterion"],
            "overrides": spec["overrides"],
            "final_step": int(row["step"]),
            "goal_probability": float(row["goal_probability"]),
            "mean_normalized_return": float(row["mean_normalized_return"]),
            "mean_end_power": float(row["mean_end_power"]),
            "goal_power": float(row["goal_power"]),
        }
        write_summary(out_root, summary)

    if not args.only or args.only.startswith("shift"):
        shift_evaluations(out_root, summary)
    print("matrix complete")
    return 0


if __name__ == "__main__":
    sys.exit(main())
