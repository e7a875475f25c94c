"""Episodic POMDP environment over the virtual testbed.

Actions are relative motor moves in [-1, 1]^4 scaled to integer steps.
Observations carry a history of (previous power, action, in-motion power
statistics) tuples plus the current power.  Episodes terminate on goal
(power strictly above the goal), fail (strictly below the fail threshold),
or timeout; resets follow a three-case relative-motion procedure.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .testbed import (
    N_AXES,
    ActuatorBank,
    MotionTrace,
    NoiseModel,
    TestbedModel,
    apply_action,
    coupling_power,
)

logger = logging.getLogger(__name__)

RESET_METHODS = ("A", "B", "C")

TERMINAL_GOAL = "goal"
TERMINAL_FAIL = "fail"
TERMINAL_TIMEOUT = "timeout"
TERMINAL_RUNNING = "running"


class ResetError(RuntimeError):
    """Raised when the reset procedure exhausts its motor-move budget."""


class EpisodeOverError(RuntimeError):
    """Raised when stepping an environment whose episode already terminated."""


@dataclass
class RewardParams:
    """Amplitudes, mixing weights, and shape exponents of the piecewise reward."""

    a_step: float = 10.0
    a_fail: float = 100.0
    a_goal: float = 100.0
    alpha_step: float = 0.9
    alpha_fail: float = 0.5
    alpha_goal: float = 0.5
    beta_step: float = 5.0
    beta_fail_time: float = 5.0
    beta_fail_power: float = 5.0
    beta_goal_time: float = 5.0
    beta_goal_power: float = 1.0

    def __post_init__(self):
        if self.a_fail < self.a_step or self.a_goal < self.a_step:
            raise ValueError("fail and goal amplitudes must be >= the step amplitude")
        for name in ("alpha_step", "alpha_fail", "alpha_goal"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")


@dataclass
class EnvConfig:
    """Environment thresholds, action scaling, episode, and observation options."""

    p_min: float = 0.2
    p_fail: float = 0.05
    p_goal: float = 0.9
    a_max: int = 6000
    max_episode_steps: int = 30          # T
    history_length: int = 4              # n
    reset_method: str = "A"
    neutral_positions: tuple | None = None   # defaults to the model means
    case3_threshold: float = 0.09
    case3_every: int = 10
    include_p_ave: bool = True
    include_p_max_x_max: bool = True
    include_abs_positions: bool = False
    trace_samples: int = 10              # m, constant per move
    pre_episode_random_steps: int = 3
    reset_step_budget: int = 2000
    hillclimb_step: int | None = None    # defaults to a_max // 2
    reset_method_c_width: int = 42_000

    def __post_init__(self):
        if not 0.0 < self.p_fail < self.p_min < self.p_goal:
            raise ValueError("thresholds must satisfy 0 < p_fail < p_min < p_goal")
        if self.p_goal < self.p_min + 0.1:
            # the case-1 reset draws its target power from [p_min + 0.1, p_goal]
            raise ValueError("p_goal must be at least p_min + 0.1")
        if self.max_episode_steps < 1 or self.history_length < 1 or self.a_max < 1:
            raise ValueError("max_episode_steps, history_length, and a_max must be >= 1")
        if self.reset_method not in RESET_METHODS:
            raise ValueError(f"reset_method must be one of {RESET_METHODS}")

    @property
    def tuple_width(self) -> int:
        return 1 + N_AXES + int(self.include_p_ave) + 2 * int(self.include_p_max_x_max)

    @property
    def observation_size(self) -> int:
        size = self.tuple_width * (self.history_length + 1) + 1
        if self.include_abs_positions:
            size += N_AXES
        return size


def reward(p: float, t: int, horizon: int, p_fail: float, p_goal: float, p_min: float,
           params: RewardParams) -> float:
    """Piecewise reward: fail below p_fail, goal above p_goal, shaped step between."""
    if p < p_fail:
        return -params.a_fail * (
            (1.0 - params.alpha_fail) * math.exp(-params.beta_fail_time * t / horizon)
            + params.alpha_fail * math.exp(-params.beta_fail_power * p / p_fail)
        )
    if p > p_goal:
        return params.a_goal * (
            (1.0 - params.alpha_goal) * math.exp(-params.beta_goal_time * t / horizon)
            + params.alpha_goal * math.exp(params.beta_goal_power * p / p_goal)
        )
    return params.a_step / horizon * (
        (1.0 - params.alpha_step) * math.exp(params.beta_step * (p - p_goal))
        + params.alpha_step * (p - p_min)
    )


def max_return(p_max_possible: float, p_goal: float, horizon: int, params: RewardParams) -> float:
    """Return normalizer: goal reward for reaching the best power at t = 1."""
    if p_max_possible <= p_goal:
        raise ValueError("p_max_possible must exceed p_goal for the normalizer to exist")
    return params.a_goal * (
        (1.0 - params.alpha_goal) * math.exp(-params.beta_goal_time * 1.0 / horizon)
        + params.alpha_goal * math.exp(params.beta_goal_power * p_max_possible / p_goal)
    )


def scale_action(action, a_max: int) -> np.ndarray:
    """Scale [-1, 1] actions to integer steps, rounding half away from zero."""
    a = np.asarray(action, dtype=np.float64)
    if np.any(np.abs(a) > 1.0):
        logger.warning("action components outside [-1, 1] clamped: %s", a)
        a = np.clip(a, -1.0, 1.0)
    scaled = a * a_max
    return (np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)).astype(np.int64)


def trace_stats(trace: MotionTrace) -> tuple[float, float, float]:
    """(average power, max power, relative argmax position) over one move."""
    powers = trace.powers
    m_plus_1 = len(powers)
    idx = int(np.argmax(powers))
    return float(powers.mean()), float(powers[idx]), idx / m_plus_1


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    terminal_kind: str
    info: dict = field(default_factory=dict)

    @property
    def done(self) -> bool:
        return self.terminal_kind != TERMINAL_RUNNING


class CouplingEnv:
    """Sequential single-instance environment; reset() before each episode."""

    def __init__(self, config: EnvConfig, reward_params: RewardParams,
                 model: TestbedModel, noise: NoiseModel, rng: np.random.Generator,
                 p_max_possible: float | None = None):
        self.config = config
        self.reward_params = reward_params
        self.model = model
        self.noise = noise
        self.rng = rng
        self.p_max_possible = model.amplitude if p_max_possible is None else p_max_possible

        if config.neutral_positions is None:
            self.neutral_positions = np.array(model.means, dtype=np.int64)
        else:
            self.neutral_positions = np.asarray(config.neutral_positions, dtype=np.int64)
        self.bank = ActuatorBank.at(self.neutral_positions, model)

        self._episode_index = 0
        self._t = 0
        self._running = False
        self._history: deque = deque(maxlen=config.history_length + 1)
        self._current_power = coupling_power(self.bank.positions, model)
        self._last_move = np.zeros(N_AXES, dtype=np.int64)
        self._episode_return = 0.0
        self._start_power = 0.0
        self.last_reset_moves = 0

    # -- small helpers ----------------------------------------------------

    @property
    def p_goal(self) -> float:
        return self.config.p_goal

    def set_goal(self, p_goal: float) -> None:
        """Change the goal power.  Only legal between episodes."""
        if self._running:
            raise RuntimeError("goal power must not change during an episode")
        self.config.p_goal = p_goal

    @property
    def return_normalizer(self) -> float:
        return max_return(self.p_max_possible, self.config.p_goal,
                          self.config.max_episode_steps, self.reward_params)

    @property
    def current_power(self) -> float:
        return self._current_power

    @property
    def episode_step(self) -> int:
        return self._t

    @property
    def start_power(self) -> float:
        return self._start_power

    def _move(self, steps: np.ndarray) -> MotionTrace:
        trace = apply_action(self.bank, steps, self.noise, self.model, self.rng,
                             samples=self.config.trace_samples)
        self._last_move = np.asarray(steps, dtype=np.int64)
        self._current_power = trace.end_power
        return trace

    def raw_move(self, steps) -> MotionTrace:
        """Move by raw integer steps outside episode semantics (human play)."""
        return self._move(np.asarray(steps, dtype=np.int64))

    def _random_move(self) -> MotionTrace:
        steps = self.rng.integers(-self.config.a_max, self.config.a_max + 1, size=N_AXES)
        return self._move(steps)

    # -- observation ------------------------------------------------------

    def _padded_history(self, p0: float) -> None:
        self._history.clear()
        pad = (p0, np.zeros(N_AXES), p0, p0, 0.0)
        for _ in range(self.config.history_length + 1):
            self._history.append(pad)

    def _observation(self) -> np.ndarray:
        cfg = self.config
        parts = []
        for p_prev, action, p_ave, p_max, x_max in self._history:
            parts.append(p_prev)
            parts.extend(action)
            if cfg.include_p_ave:
                parts.append(p_ave)
            if cfg.include_p_max_x_max:
                parts.append(p_max)
                parts.append(x_max)
        parts.append(self._current_power)
        if cfg.include_abs_positions:
            lo, hi = self.bank.limits[:, 0], self.bank.limits[:, 1]
            parts.extend((self.bank.positions - lo) / (hi - lo))
        return np.asarray(parts, dtype=np.float64)

    # -- reset ------------------------------------------------------------

    def reset(self) -> np.ndarray:
        """Run the configured reset method and start a new episode."""
        self._episode_index += 1
        self.last_reset_moves = 0
        if self.config.reset_method == "C":
            self._reset_method_c()
        else:
            self._reset_relative()
        self._t = 0
        self._running = True
        self._episode_return = 0.0
        self._start_power = self._current_power
        self._padded_history(self._current_power)
        return self._observation()

    def _reset_method_c(self) -> None:
        half = self.config.reset_method_c_width // 2
        positions = self.rng.integers(self.neutral_positions - half,
                                      self.neutral_positions + half + 1)
        self.bank.teleport(positions)
        self._current_power = coupling_power(self.bank.positions, self.model)
        self._last_move = np.zeros(N_AXES, dtype=np.int64)

    def _budget_move(self, steps, budget: list) -> None:
        if budget[0] <= 0:
            raise ResetError("reset step budget exhausted")
        budget[0] -= 1
        self.last_reset_moves += 1
        self._move(np.asarray(steps, dtype=np.int64))

    def _reset_relative(self) -> None:
        cfg = self.config
        budget = [cfg.reset_step_budget]
        force_case3 = cfg.case3_every > 0 and self._episode_index % cfg.case3_every == 0
        try:
            self._run_reset_cases(budget, force_case3 or cfg.reset_method == "B")
        except ResetError:
            # Escalate to one fresh pass through case 3 before giving up.
            budget = [cfg.reset_step_budget]
            self._run_reset_cases(budget, True)

    def _run_reset_cases(self, budget: list, start_at_case3: bool) -> None:
        cfg = self.config
        go_neutral_first = start_at_case3
        while True:
            p = self._current_power
            if go_neutral_first or p < cfg.case3_threshold:
                self._case3(budget)
                go_neutral_first = False
            elif p >= cfg.p_min:
                self._case1(budget)
            else:
                self._case2(budget)
            # The procedure ends once the start power sits in the target band;
            # the closing random steps may eject it, in which case we loop.
            if cfg.p_min <= self._current_power <= cfg.p_goal:
                for _ in range(cfg.pre_episode_random_steps):
                    self._budget_move(self.rng.integers(-cfg.a_max, cfg.a_max + 1, size=N_AXES),
                                      budget)
                if cfg.p_min <= self._current_power <= cfg.p_goal:
                    return

    def _case1(self, budget: list) -> None:
        """From high power, random-step down below a randomly chosen target."""
        cfg = self.config
        target = self.rng.uniform(cfg.p_min + 0.1, cfg.p_goal)
        while self._current_power >= target:
            self._budget_move(self.rng.integers(-cfg.a_max, cfg.a_max + 1, size=N_AXES), budget)
            if self._current_power < cfg.case3_threshold:
                return  # case switch handled by the caller

    def _case2(self, budget: list) -> None:
        """Reverse the last action, then hill-climb axis by axis until p >= p_min."""
        cfg = self.config
        step = cfg.hillclimb_step if cfg.hillclimb_step is not None else cfg.a_max // 2
        if np.any(self._last_move != 0):
            self._budget_move(-self._last_move, budget)
        directions = np.where(self.rng.random(N_AXES) < 0.5, -1, 1)
        while cfg.case3_threshold < self._current_power < cfg.p_min:
            for axis in self.rng.permutation(N_AXES):
                before = self._current_power
                move = np.zeros(N_AXES, dtype=np.int64)
                move[axis] = directions[axis] * step
                self._budget_move(move, budget)
                if self._current_power < before:
                    directions[axis] = -directions[axis]
                if not cfg.case3_threshold < self._current_power < cfg.p_min:
                    break

    def _case3(self, budget: list) -> None:
        """Move to the neutral positions, then random-step until above 0.09."""
        cfg = self.config
        self._budget_move(self.neutral_positions - self.bank.positions, budget)
        # The neutral-positions macro move is not an "action": case 2 must not
        # reverse it, or a shifted surface makes the reset ping-pong forever.
        self._last_move = np.zeros(N_AXES, dtype=np.int64)
        while self._current_power < cfg.case3_threshold:
            self._budget_move(self.rng.integers(-cfg.a_max, cfg.a_max + 1, size=N_AXES), budget)

    # -- step -------------------------------------------------------------

    def step(self, action) -> StepOutcome:
        if not self._running:
            raise EpisodeOverError("episode is over; call reset() first")
        cfg = self.config
        steps = scale_action(action, cfg.a_max)
        p_prev = self._current_power
        trace = self._move(steps)
        self._t += 1

        p_ave, p_max, x_max = trace_stats(trace)
        self._history.append((p_prev, np.clip(np.asarray(action, dtype=np.float64), -1, 1),
                              p_ave, p_max, x_max))

        p = trace.end_power
        r = reward(p, self._t, cfg.max_episode_steps, cfg.p_fail, cfg.p_goal, cfg.p_min,
                   self.reward_params)
        self._episode_return += r

        if p > cfg.p_goal:
            kind = TERMINAL_GOAL
        elif p < cfg.p_fail:
            kind = TERMINAL_FAIL
        elif self._t >= cfg.max_episode_steps:
            kind = TERMINAL_TIMEOUT
        else:
            kind = TERMINAL_RUNNING
        if kind != TERMINAL_RUNNING:
            self._running = False

        info = {"end_power": p, "episode_step": self._t, "episode_return": self._episode_return,
                "trace_clipped": trace.clipped}
        return StepOutcome(self._observation(), r, kind, info)


def shifted_model(model: TestbedModel, k: int, rng: np.random.Generator) -> TestbedModel:
    """Shift k distinct axis means by one sigma, sign chosen uniformly."""
    if not 0 <= k <= N_AXES:
        raise ValueError("k must be in 0..4")
    shifts = np.zeros(N_AXES, dtype=np.int64)
    axes = rng.choice(N_AXES, size=k, replace=False)
    signs = np.where(rng.random(k) < 0.5, -1, 1)
    shifts[axes] = np.round(signs * model.sigmas[axes]).astype(np.int64)
    return model.with_shifts(shifts)


def shifted_env(env: CouplingEnv, k: int, rng: np.random.Generator) -> CouplingEnv:
    """Fresh environment identical to `env` but with k shifted Gaussian means."""
    model = shifted_model(env.model, k, rng)
    return CouplingEnv(replace(env.config), env.reward_params, model, env.noise,
                       env.rng, p_max_possible=env.p_max_possible)
