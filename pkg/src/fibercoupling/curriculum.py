"""Goal-power schedules: constant, linear ramp, or a staircase of breakpoints."""

from __future__ import annotations

from dataclasses import dataclass, field

MODES = ("constant", "linear", "staircase")
BUFFER_POLICIES = ("keep", "delete")

# Experiment staircase: 0.85 -> 0.875 -> 0.89 -> 0.9 at these training steps.
DEFAULT_STAIRCASE = ((38_000, 0.875), (63_500, 0.89), (98_000, 0.9))


@dataclass(frozen=True)
class CurriculumSchedule:
    mode: str = "constant"
    p_start_goal: float = 0.85
    p_final_goal: float = 0.9
    ramp_steps: int = 100_000
    breakpoints: tuple = DEFAULT_STAIRCASE
    buffer_policy: str = "keep"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.buffer_policy not in BUFFER_POLICIES:
            raise ValueError(f"buffer_policy must be one of {BUFFER_POLICIES}")
        bps = tuple((int(s), float(g)) for s, g in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if self.mode == "staircase":
            goals = [self.p_start_goal] + [g for _, g in bps] + [self.p_final_goal]
            steps = [s for s, _ in bps]
            if sorted(steps) != list(steps):
                raise ValueError("breakpoint steps must be increasing")
            if sorted(goals) != goals:
                raise ValueError("goal power must be non-decreasing over the schedule")
        if self.mode == "linear" and self.p_final_goal < self.p_start_goal:
            raise ValueError("goal power must be non-decreasing over the schedule")


def uniform_staircase(p_start: float, p_final: float, ramp_steps: int,
                      stair_every: int = 10_000) -> CurriculumSchedule:
    """Equal-height stairs every `stair_every` steps, reaching p_final at ramp end."""
    n_stairs = max(1, ramp_steps // stair_every)
    bps = tuple((i * stair_every, p_start + (p_final - p_start) * i / n_stairs)
                for i in range(1, n_stairs + 1))
    return CurriculumSchedule("staircase", p_start, p_final, ramp_steps, bps)


def goal_at(schedule: CurriculumSchedule, training_step: int) -> float:
    """Goal power as a right-continuous, non-decreasing function of the step."""
    if training_step < 0:
        raise ValueError("training_step must be >= 0")
    if schedule.mode == "constant":
        return schedule.p_final_goal
    if schedule.mode == "linear":
        if training_step >= schedule.ramp_steps:
            return schedule.p_final_goal
        frac = training_step / schedule.ramp_steps
        return schedule.p_start_goal + frac * (schedule.p_final_goal - schedule.p_start_goal)
    goal = schedule.p_start_goal
    for step, value in schedule.breakpoints:
        if training_step >= step:
            goal = value
    return goal


def on_goal_change(env, buffer, new_goal: float, schedule: CurriculumSchedule) -> None:
    """Apply a goal switch between episodes: env threshold, optional buffer wipe.

    The env recomputes its return normalizer from the new goal on demand, so
    both move atomically before the next reset.
    """
    env.set_goal(new_goal)
    if schedule.buffer_policy == "delete" and buffer is not None:
        buffer.clear()
