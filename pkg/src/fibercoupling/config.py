"""Run configuration: JSON files, dotted-key overrides, deterministic hashing.

A run config nests the testbed surface, the action-noise model, environment
and reward parameters, the agent, and an optional goal curriculum.  Unknown
keys are rejected everywhere so sweep grids fail before any run starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields

import numpy as np

from .agents.base import AgentConfig
from .curriculum import DEFAULT_STAIRCASE, CurriculumSchedule
from .env import EnvConfig, RewardParams
from .testbed import (
    DEFAULT_AMPLITUDE,
    DEFAULT_DEADZONE_LOG_SIGMA,
    DEFAULT_DEADZONE_MEDIANS,
    DEFAULT_LIMIT_SIGMAS,
    DEFAULT_MEANS,
    DEFAULT_SIGMAS,
    NoiseModel,
    TestbedModel,
)

CONFIG_FORMAT_VERSION = 1


@dataclass
class TestbedConfig:
    amplitude: float = DEFAULT_AMPLITUDE
    means: tuple = DEFAULT_MEANS
    sigmas: tuple = DEFAULT_SIGMAS
    limit_sigmas: float = DEFAULT_LIMIT_SIGMAS

    def build(self, shifts=None) -> TestbedModel:
        model = TestbedModel(self.amplitude, np.asarray(self.means), np.asarray(self.sigmas))
        return model.with_shifts(shifts) if shifts is not None else model


@dataclass
class NoiseConfig:
    noise_factor: float = 0.0
    deadzone_medians: tuple = DEFAULT_DEADZONE_MEDIANS
    deadzone_log_sigma: float = DEFAULT_DEADZONE_LOG_SIGMA
    mode: str = "every-action"

    def build(self) -> NoiseModel:
        return NoiseModel(self.noise_factor, np.asarray(self.deadzone_medians),
                          self.deadzone_log_sigma, self.mode)


@dataclass
class CurriculumConfig:
    enabled: bool = False
    mode: str = "staircase"
    p_start_goal: float = 0.85
    p_final_goal: float = 0.9
    ramp_steps: int = 100_000
    breakpoints: tuple = DEFAULT_STAIRCASE
    buffer_policy: str = "keep"

    def build(self) -> CurriculumSchedule | None:
        if not self.enabled:
            return None
        return CurriculumSchedule(self.mode, self.p_start_goal, self.p_final_goal,
                                  self.ramp_steps, self.breakpoints, self.buffer_policy)


@dataclass
class RunConfig:
    testbed: TestbedConfig = field(default_factory=TestbedConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardParams = field(default_factory=RewardParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    total_steps: int = 100_000
    eval_interval: int = 10_000
    eval_episodes: int = 100
    eval_enabled: bool = True
    seed: int = 0
    out_dir: str = "runs/run"
    loss_log_every: int = 1
    seconds_per_step: float = 1.0
    keep_all_checkpoints: bool = False


_SECTION_TYPES = {
    "testbed": TestbedConfig,
    "noise": NoiseConfig,
    "env": EnvConfig,
    "reward": RewardParams,
    "agent": AgentConfig,
    "curriculum": CurriculumConfig,
}


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise KeyError(f"unknown {path} keys: {sorted(unknown)}")
    coerced = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        coerced[f.name] = value
    return cls(**coerced)


def run_config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    version = data.pop("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ValueError(f"unsupported config format_version {version}")
    top_known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - top_known
    if unknown:
        raise KeyError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTION_TYPES.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    for f in fields(RunConfig):
        if f.name in data and f.name not in _SECTION_TYPES:
            kwargs[f.name] = data[f.name]
    return RunConfig(**kwargs)


def run_config_to_dict(config: RunConfig) -> dict:
    def _plain(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: _plain(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, tuple):
            return [_plain(v) for v in obj]
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        return obj

    out = {"format_version": CONFIG_FORMAT_VERSION}
    out.update({f.name: _plain(getattr(config, f.name)) for f in fields(RunConfig)})
    return out


def load_run_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return run_config_from_dict(json.load(fh))


def save_run_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run_config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Apply {"section.key" or "key": value} overrides, strictly validated."""
    data = run_config_to_dict(config)
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise KeyError(f"unknown config path: {dotted}")
            node = node[part]
        if parts[-1] not in node:
            raise KeyError(f"unknown config path: {dotted}")
        node[parts[-1]] = value
    return run_config_from_dict(data)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(run_config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
