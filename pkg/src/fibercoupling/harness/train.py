"""Sequential training loop with periodic evaluation and checkpoints."""

from __future__ import annotations

import gzip
import json
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from ..agents import ReplayBuffer, Transition, make_agent
from ..agents.base import BaseAgent
from ..config import RunConfig, config_hash, run_config_from_dict, run_config_to_dict
from ..curriculum import goal_at, on_goal_change
from ..env import TERMINAL_FAIL, TERMINAL_GOAL, CouplingEnv, ResetError, shifted_model
from .evaluate import EvalReport, evaluate
from .metrics import CsvWriter

logger = logging.getLogger(__name__)

EPISODE_COLUMNS = ["episode", "start_power", "end_power", "length", "return",
                   "normalized_return", "terminal_kind", "goal_power", "seed"]
LOSS_COLUMNS = ["step", "critic_loss", "actor_loss", "alpha", "mean_q"]
EVAL_COLUMNS = ["step", "goal_power", "goal_probability", "fail_probability",
                "timeout_probability", "mean_end_power", "mean_normalized_return",
                "std_normalized_return", "mean_steps_to_goal", "episodes"]


@dataclass
class TrainResult:
    out_dir: str
    steps: int
    final_eval: EvalReport | None
    checkpoint_path: str


def build_env(config: RunConfig, rng: np.random.Generator, shifts=None,
              reset_method: str | None = None) -> CouplingEnv:
    model = config.testbed.build(shifts)
    noise = config.noise.build()
    env_cfg = run_config_from_dict(run_config_to_dict(config)).env  # private copy
    if reset_method is not None:
        env_cfg.reset_method = reset_method
    return CouplingEnv(env_cfg, config.reward, model, noise, rng)


def save_checkpoint(path: str, config: RunConfig, agent: BaseAgent, global_step: int,
                    rng_states: dict | None = None) -> None:
    payload = {
        "format_version": 1,
        "global_step": global_step,
        "run_config": run_config_to_dict(config),
        "agent": agent.state_dict(),
        "rng_states": rng_states or {},
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str):
    """Returns (run_config, agent, payload) with the agent fully restored."""
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        payload = json.load(fh)
    config = run_config_from_dict(payload["run_config"])
    state = payload["agent"]
    agent = make_agent(state["obs_dim"], state["act_dim"], config.agent,
                       np.random.default_rng(0))
    if config.agent.algo != "random":
        agent.load_state_dict(state)
    return config, agent, payload


def rebuild_env_from_checkpoint(config: RunConfig, rng: np.random.Generator,
                                shift_k: int = 0, shift_rng: np.random.Generator | None = None,
                                reset_method: str | None = "A") -> CouplingEnv:
    """Evaluation environment for a checkpoint, optionally with k shifted means."""
    shifts = None
    if shift_k:
        base = config.testbed.build()
        shifts = shifted_model(base, shift_k, shift_rng if shift_rng is not None else rng).shifts
    return build_env(config, rng, shifts=shifts, reset_method=reset_method)


def train(config: RunConfig) -> TrainResult:
    """Run one seeded training session; artifacts land in config.out_dir.

    Layout: episodes.csv / losses.csv / evals.csv, manifest.json, and
    checkpoint_final.json.gz (plus per-eval checkpoints when keep_all_checkpoints).
    """
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    rng_env, rng_init, rng_action, rng_update, ss_eval = (
        np.random.default_rng(seeds[0]), np.random.default_rng(seeds[1]),
        np.random.default_rng(seeds[2]), np.random.default_rng(seeds[3]), seeds[4])

    env = build_env(config, rng_env)
    obs_dim = env.config.observation_size
    agent = make_agent(obs_dim, 4, config.agent, rng_init)
    buffer = ReplayBuffer(config.agent.buffer_size, obs_dim, 4, dtype=config.agent.np_dtype)
    schedule = config.curriculum.build()

    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"config_hash": config_hash(config), "config": run_config_to_dict(config),
                   "created_unix": time.time()}, fh, indent=2)

    episodes_csv = CsvWriter(os.path.join(out, "episodes.csv"), EPISODE_COLUMNS)
    losses_csv = CsvWriter(os.path.join(out, "losses.csv"), LOSS_COLUMNS)
    evals_csv = CsvWriter(os.path.join(out, "evals.csv"), EVAL_COLUMNS)

    final_ckpt = os.path.join(out, "checkpoint_final.json.gz")
    if config.total_steps == 0:
        save_checkpoint(final_ckpt, config, agent, 0)
        for csv in (episodes_csv, losses_csv, evals_csv):
            csv.close()
        return TrainResult(out, 0, None, final_ckpt)

    def run_eval(step: int) -> EvalReport:
        rng_eval = np.random.default_rng(ss_eval.spawn(1)[0])
        eval_env = build_env(config, rng_eval, reset_method="A")
        eval_env.set_goal(env.p_goal)
        report = evaluate(agent, eval_env, config.eval_episodes, rng_eval)
        evals_csv.write({
            "step": step, "goal_power": env.p_goal,
            "goal_probability": report.goal_probability,
            "fail_probability": report.fail_probability,
            "timeout_probability": report.timeout_probability,
            "mean_end_power": report.mean_end_power,
            "mean_normalized_return": report.mean_normalized_return,
            "std_normalized_return": report.std_normalized_return,
            "mean_steps_to_goal": report.mean_steps_to_goal,
            "episodes": report.episodes,
        })
        if config.keep_all_checkpoints:
            save_checkpoint(os.path.join(out, f"checkpoint_{step:08d}.json.gz"),
                            config, agent, step, rng_states())
        else:
            save_checkpoint(os.path.join(out, "checkpoint_latest.json.gz"),
                            config, agent, step, rng_states())
        return report

    def rng_states() -> dict:
        return {name: rng.bit_generator.state
                for name, rng in (("env", rng_env), ("action", rng_action),
                                  ("update", rng_update))}

    global_step = 0
    episode = 0
    report = None
    t_start = time.perf_counter()
    try:
        while global_step < config.total_steps:
            if schedule is not None:
                target_goal = goal_at(schedule, global_step)
                if target_goal != env.p_goal:
                    on_goal_change(env, buffer, target_goal, schedule)
            episode += 1
            obs = env.reset()
            start_power = env.start_power
            outcome = None
            while global_step < config.total_steps:
                if global_step < config.agent.learning_starts and config.agent.algo != "random":
                    action = rng_action.uniform(-1.0, 1.0, size=4)
                else:
                    action = agent.act(obs, deterministic=False, rng=rng_action)
                outcome = env.step(action)
                terminal = outcome.terminal_kind in (TERMINAL_GOAL, TERMINAL_FAIL)
                buffer.push(Transition(obs, action, outcome.reward,
                                       outcome.observation, terminal))
                obs = outcome.observation
                global_step += 1
                if global_step > config.agent.learning_starts:
                    losses = agent.update(buffer, rng_update)
                    if losses is not None and global_step % config.loss_log_every == 0:
                        losses_csv.write({"step": global_step, **losses})
                if config.eval_enabled and global_step % config.eval_interval == 0:
                    report = run_eval(global_step)
                if outcome.done:
                    break
            episodes_csv.write({
                "episode": episode, "start_power": start_power,
                "end_power": outcome.info["end_power"],
                "length": outcome.info["episode_step"],
                "return": outcome.info["episode_return"],
                "normalized_return": outcome.info["episode_return"] / env.return_normalizer,
                "terminal_kind": outcome.terminal_kind, "goal_power": env.p_goal,
                "seed": config.seed,
            })
            if global_step % 10_000 < env.config.max_episode_steps:
                rate = global_step / (time.perf_counter() - t_start)
                logger.info("%s: step %d (%.0f steps/s)", out, global_step, rate)
        if config.eval_enabled and (report is None
                                    or global_step % config.eval_interval != 0):
            report = run_eval(global_step)
    except ResetError:
        save_checkpoint(os.path.join(out, "checkpoint_failed.json.gz"), config, agent,
                        global_step, rng_states())
        raise
    finally:
        for csv in (episodes_csv, losses_csv, evals_csv):
            csv.close()

    save_checkpoint(final_ckpt, config, agent, global_step, rng_states())
    latest = os.path.join(out, "checkpoint_latest.json.gz")
    if os.path.exists(latest):
        os.remove(latest)
    return TrainResult(out, global_step, report, final_ckpt)
