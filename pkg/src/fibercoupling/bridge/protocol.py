"""Wire protocol for the human-play bridge: line-delimited JSON messages."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class ClientCommand(BaseModel):
    cmd: Literal["hello", "reset", "move", "end_attempt"]
    mode: Literal["auto", "perturb"] | None = None
    steps: list[int] | None = Field(default=None, min_length=4, max_length=4)
    name: str | None = None


class StateMessage(BaseModel):
    type: Literal["state"] = "state"
    power: float
    trace: list[float] = Field(default_factory=list)
    step_count: int
    elapsed_s: float
    goal_reached: bool
    best_power: float
    goal_power: float
    attempt: int
    start_power: float
    clamped: bool = False
    role: Literal["controller", "observer"] = "controller"


class ErrorMessage(BaseModel):
    type: Literal["error"] = "error"
    code: str
    detail: str


class LeaderboardEntry(BaseModel):
    name: str
    elapsed_s: float
    steps: int


class LeaderboardMessage(BaseModel):
    type: Literal["leaderboard"] = "leaderboard"
    entries: list[LeaderboardEntry]
