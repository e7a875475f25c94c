"""Session logic for human-play attempts, independent of the transport.

One session owns one environment.  An attempt spans reset to goal (or an
explicit end); every motor move advances the simulated clock by the same
seconds-per-step used for agent timing, so human and agent rows compare
directly.  Finished attempts append to the baseline CSV.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from pydantic import ValidationError

from ..config import RunConfig
from ..env import CouplingEnv, shifted_model
from ..harness.train import build_env
from .protocol import ClientCommand, ErrorMessage, LeaderboardEntry, LeaderboardMessage, \
    StateMessage

BASELINE_COLUMNS = ["mode", "name", "start_power", "end_power", "steps", "elapsed_s",
                    "goal_reached"]


@dataclass
class Attempt:
    index: int
    mode: str
    start_power: float
    steps: int = 0
    elapsed_s: float = 0.0
    goal_reached: bool = False
    end_power: float = 0.0
    closed: bool = False
    powers: list = field(default_factory=list)


class Session:
    """Single-controller session over one environment instance."""

    def __init__(self, config: RunConfig, seed: int = 0, baseline_csv: str | None = None):
        self.config = config
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        self.env: CouplingEnv = build_env(config, np.random.default_rng(seed))
        self.seconds_per_step = config.seconds_per_step
        self.baseline_csv = baseline_csv
        self.player_name = "anonymous"
        self.best_power = 0.0
        self.attempts: list[Attempt] = []
        self.attempt: Attempt | None = None
        self._start_attempt("auto")

    # -- attempt bookkeeping ------------------------------------------------

    def _start_attempt(self, mode: str) -> None:
        if mode == "perturb":
            # Hand-mirror misalignment analogue: shift 1..4 means by one sigma.
            k = int(self.rng.integers(1, 5))
            self.env.model = shifted_model(self.env.model, k, self.rng)
        self.env.reset()
        self.attempt = Attempt(index=len(self.attempts) + 1, mode=mode,
                               start_power=self.env.start_power)
        self.attempt.powers.append(self.env.current_power)
        self.best_power = max(self.best_power, self.env.current_power)

    def _close_attempt(self) -> None:
        attempt = self.attempt
        if attempt is None or attempt.closed:
            return
        attempt.closed = True
        attempt.end_power = self.env.current_power
        self.attempts.append(attempt)
        self.record_baseline(attempt)

    def record_baseline(self, attempt: Attempt) -> None:
        """Append one attempt row; schema matches the agent coupling logs."""
        if not self.baseline_csv:
            return
        exists = os.path.exists(self.baseline_csv)
        os.makedirs(os.path.dirname(self.baseline_csv) or ".", exist_ok=True)
        with open(self.baseline_csv, "a", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=BASELINE_COLUMNS)
            if not exists:
                writer.writeheader()
            writer.writerow({
                "mode": attempt.mode, "name": self.player_name,
                "start_power": attempt.start_power, "end_power": attempt.end_power,
                "steps": attempt.steps, "elapsed_s": attempt.elapsed_s,
                "goal_reached": int(attempt.goal_reached),
            })

    # -- message handling -----------------------------------------------------

    def _state(self, trace=None, clamped=False, role="controller") -> dict:
        attempt = self.attempt
        return StateMessage(
            power=self.env.current_power,
            trace=list(trace) if trace is not None else [],
            step_count=attempt.steps,
            elapsed_s=attempt.elapsed_s,
            goal_reached=attempt.goal_reached,
            best_power=self.best_power,
            goal_power=self.env.p_goal,
            attempt=attempt.index,
            start_power=attempt.start_power,
            clamped=clamped,
            role=role,
        ).model_dump()

    def _leaderboard(self) -> dict:
        entries = [LeaderboardEntry(name=self.player_name, elapsed_s=a.elapsed_s,
                                    steps=a.steps)
                   for a in self.attempts if a.goal_reached]
        entries.sort(key=lambda e: e.elapsed_s)
        return LeaderboardMessage(entries=entries[:10]).model_dump()

    def handle_message(self, raw: dict, role: str = "controller") -> list[dict]:
        """Apply one client message; returns the ordered replies."""
        try:
            command = ClientCommand.model_validate(raw)
        except ValidationError as err:
            return [ErrorMessage(code="bad_message", detail=str(err.errors()[0]["msg"])
                                 ).model_dump()]
        if role != "controller" and command.cmd != "hello":
            return [ErrorMessage(code="read_only",
                                 detail="another client controls this session").model_dump()]

        if command.cmd == "hello":
            if command.name and role == "controller":
                self.player_name = command.name
            return [self._state(role=role), self._leaderboard()]

        if command.cmd == "reset":
            if not self.attempt.closed:
                self._close_attempt()
            self._start_attempt(command.mode or "auto")
            return [self._state()]

        if command.cmd == "end_attempt":
            self._close_attempt()
            return [self._state(), self._leaderboard()]

        # move
        if command.steps is None:
            return [ErrorMessage(code="bad_message",
                                 detail="move requires a 4-vector of steps").model_dump()]
        if self.attempt.closed:
            return [ErrorMessage(code="attempt_over",
                                 detail="reset before moving again").model_dump()]
        a_max = self.env.config.a_max
        steps = np.asarray(command.steps, dtype=np.int64)
        clamped = bool(np.any(np.abs(steps) > a_max))
        steps = np.clip(steps, -a_max, a_max)
        trace = self.env.raw_move(steps)
        self.attempt.steps += 1
        self.attempt.elapsed_s += self.seconds_per_step
        self.attempt.powers.append(self.env.current_power)
        self.best_power = max(self.best_power, self.env.current_power)
        replies = []
        if self.env.current_power > self.env.p_goal:
            self.attempt.goal_reached = True
            self._close_attempt()
            replies.append(self._state(trace=trace.powers, clamped=clamped))
            replies.append(self._leaderboard())
        else:
            replies.append(self._state(trace=trace.powers, clamped=clamped))
        return replies


def summarize_baseline_csv(path: str, mode: str | None = None) -> dict:
    """Table-style attempt summary: mean start/end power, p[goal], mean steps."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    if mode is not None:
        rows = [r for r in rows if r["mode"] == mode]
    if not rows:
        raise ValueError(f"no attempts in {path} for mode={mode!r}")
    goal_rows = [r for r in rows if r["goal_reached"] == "1"]
    return {
        "attempts": len(rows),
        "mean_start_power": float(np.mean([float(r["start_power"]) for r in rows])),
        "mean_end_power": float(np.mean([float(r["end_power"]) for r in rows])),
        "p_goal": len(goal_rows) / len(rows),
        "mean_steps_to_goal": (float(np.mean([int(r["steps"]) for r in goal_rows]))
                               if goal_rows else float("nan")),
    }
