"""Evaluation protocols: periodic testing and the repeated coupling task."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env import TERMINAL_FAIL, TERMINAL_GOAL, TERMINAL_TIMEOUT, CouplingEnv


@dataclass
class EvalReport:
    episodes: int
    goal_probability: float
    fail_probability: float
    timeout_probability: float
    mean_end_power: float
    mean_normalized_return: float
    std_normalized_return: float
    steps_to_goal: list = field(default_factory=list)

    def __post_init__(self):
        total = self.goal_probability + self.fail_probability + self.timeout_probability
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"outcome probabilities must sum to 1, got {total}")

    @property
    def mean_steps_to_goal(self) -> float:
        return float(np.mean(self.steps_to_goal)) if self.steps_to_goal else float("nan")


def run_episode(agent, env: CouplingEnv, rng: np.random.Generator,
                deterministic: bool = True) -> dict:
    obs = env.reset()
    start_power = env.start_power
    reset_moves = env.last_reset_moves
    outcome = None
    while True:
        action = agent.act(obs, deterministic=deterministic, rng=rng)
        outcome = env.step(action)
        obs = outcome.observation
        if outcome.done:
            break
    return {
        "start_power": start_power,
        "end_power": outcome.info["end_power"],
        "length": outcome.info["episode_step"],
        "return": outcome.info["episode_return"],
        "normalized_return": outcome.info["episode_return"] / env.return_normalizer,
        "terminal_kind": outcome.terminal_kind,
        "reset_moves": reset_moves,
    }


def evaluate(agent, env: CouplingEnv, episodes: int, rng: np.random.Generator) -> EvalReport:
    """Fresh resets, deterministic policy; aggregates outcome statistics."""
    kinds = {TERMINAL_GOAL: 0, TERMINAL_FAIL: 0, TERMINAL_TIMEOUT: 0}
    end_powers = []
    normalized = []
    steps_to_goal = []
    for _ in range(episodes):
        ep = run_episode(agent, env, rng)
        kinds[ep["terminal_kind"]] += 1
        end_powers.append(ep["end_power"])
        normalized.append(ep["normalized_return"])
        if ep["terminal_kind"] == TERMINAL_GOAL:
            steps_to_goal.append(ep["length"])
    return EvalReport(
        episodes=episodes,
        goal_probability=kinds[TERMINAL_GOAL] / episodes,
        fail_probability=kinds[TERMINAL_FAIL] / episodes,
        timeout_probability=kinds[TERMINAL_TIMEOUT] / episodes,
        mean_end_power=float(np.mean(end_powers)),
        mean_normalized_return=float(np.mean(normalized)),
        std_normalized_return=float(np.std(normalized)),
        steps_to_goal=steps_to_goal,
    )


@dataclass
class CoupleResult:
    success: bool
    first_episode_success: bool
    total_steps: int
    total_seconds: float
    steps_to_goal: int | None
    episodes: list


def couple_to_goal(agent, env: CouplingEnv, max_attempt_episodes: int,
                   rng: np.random.Generator, seconds_per_step: float = 1.0) -> CoupleResult:
    """Repeat episodes until the goal is reached or the attempt cap is hit.

    Reset motor moves count toward steps and simulated time, mirroring a
    stopwatch that keeps running across resets.  `steps_to_goal` is the number
    of environment steps in the final (successful) episode.
    """
    episodes = []
    total_steps = 0
    for i in range(max_attempt_episodes):
        ep = run_episode(agent, env, rng)
        episodes.append(ep)
        total_steps += ep["length"] + ep["reset_moves"]
        if ep["terminal_kind"] == TERMINAL_GOAL:
            return CoupleResult(
                success=True,
                first_episode_success=(i == 0),
                total_steps=total_steps,
                total_seconds=total_steps * seconds_per_step,
                steps_to_goal=ep["length"],
                episodes=episodes,
            )
    return CoupleResult(False, False, total_steps, total_steps * seconds_per_step,
                        None, episodes)


def summarize_attempts(rows: list[dict]) -> dict:
    """Start/end power means, first-episode goal probability, mean steps to goal.

    Works on both human-play baseline rows and agent coupling rows (shared
    schema: start_power, end_power, steps, goal_reached).
    """
    if not rows:
        raise ValueError("no attempts to summarize")
    goals = [r for r in rows if r["goal_reached"]]
    return {
        "attempts": len(rows),
        "mean_start_power": float(np.mean([r["start_power"] for r in rows])),
        "mean_end_power": float(np.mean([r["end_power"] for r in rows])),
        "p_goal": len(goals) / len(rows),
        "mean_steps_to_goal": (float(np.mean([r["steps"] for r in goals]))
                               if goals else float("nan")),
    }
