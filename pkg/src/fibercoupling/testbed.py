"""Virtual optics testbed: Gaussian coupling surface plus imprecise steppers.

The coupled power is a product of four axis Gaussians over motor positions.
Motor moves lose steps to a per-axis dead zone; the loss is either drawn on
every action or only when an axis reverses direction (hysteresis-style gap
that is consumed by subsequent motion).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_AXES = 4

# Fitted surface defaults: amplitude and per-axis (mean, sigma) in motor steps.
DEFAULT_AMPLITUDE = 0.92
DEFAULT_MEANS = (5470785, 5573194, 5461786, 5178016)
DEFAULT_SIGMAS = (11994, 19145, 12769, 17885)

# Synthetic dead-zone distributions: four distinct log-scale spreads.  These
# are stand-ins, not measured data; override them via the config file.
DEFAULT_DEADZONE_MEDIANS = (1500.0, 300.0, 800.0, 2500.0)
DEFAULT_DEADZONE_LOG_SIGMA = 0.6

# Travel limits default to means +/- this many sigmas per axis.
DEFAULT_LIMIT_SIGMAS = 10.0


class DeadzoneCharacterizationError(RuntimeError):
    """Raised when the probe cannot re-reach high coupling within budget."""


def _vec4(values, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.shape != (N_AXES,):
        raise ValueError(f"expected a 4-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class TestbedModel:
    """Immutable map from four motor positions to coupling efficiency."""

    amplitude: float = DEFAULT_AMPLITUDE
    means: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_MEANS, dtype=np.int64))
    sigmas: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_SIGMAS, dtype=np.float64))
    shifts: np.ndarray = field(default_factory=lambda: np.zeros(N_AXES, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "means", _vec4(self.means, np.int64))
        object.__setattr__(self, "sigmas", _vec4(self.sigmas, np.float64))
        object.__setattr__(self, "shifts", _vec4(self.shifts, np.int64))
        if not 0.0 < self.amplitude <= 1.0:
            raise ValueError(f"amplitude must be in (0, 1], got {self.amplitude}")
        if not np.all(self.sigmas > 0):
            raise ValueError("all sigmas must be > 0")

    @property
    def centers(self) -> np.ndarray:
        """Effective optimum per axis (mean + shift), float."""
        return (self.means + self.shifts).astype(np.float64)

    def with_shifts(self, shifts) -> "TestbedModel":
        return TestbedModel(self.amplitude, self.means, self.sigmas, shifts)

    def default_limits(self, nsigmas: float = DEFAULT_LIMIT_SIGMAS) -> np.ndarray:
        lo = np.floor(self.means - nsigmas * self.sigmas).astype(np.int64)
        hi = np.ceil(self.means + nsigmas * self.sigmas).astype(np.int64)
        return np.stack([lo, hi], axis=1)


def coupling_power(positions, model: TestbedModel):
    """Coupling efficiency at `positions` ((4,) or (n, 4)). Deterministic.

    Returns a float for a single position, an (n,) array for a batch.
    """
    pos = np.asarray(positions, dtype=np.float64)
    z = (pos - model.centers) / model.sigmas
    power = model.amplitude * np.exp(-0.5 * np.sum(z * z, axis=-1))
    if pos.ndim == 1:
        return float(power)
    return power


@dataclass
class ActuatorBank:
    """Mutable motor state: positions, travel limits, and dead-zone state.

    `last_direction` is the sign of the most recent nonzero effective move.
    `drive_direction`/`pending_gap` track the hysteresis gap used by the
    reversal-only noise mode (the gap is consumed by intended motion before
    the mirror actually moves).
    """

    positions: np.ndarray
    limits: np.ndarray
    last_direction: np.ndarray = field(default_factory=lambda: np.zeros(N_AXES, dtype=np.int64))
    drive_direction: np.ndarray = field(default_factory=lambda: np.zeros(N_AXES, dtype=np.int64))
    pending_gap: np.ndarray = field(default_factory=lambda: np.zeros(N_AXES, dtype=np.float64))

    def __post_init__(self):
        self.positions = _vec4(self.positions, np.int64)
        self.limits = np.asarray(self.limits, dtype=np.int64)
        if self.limits.shape != (N_AXES, 2):
            raise ValueError(f"limits must be (4, 2), got {self.limits.shape}")
        self.positions = np.clip(self.positions, self.limits[:, 0], self.limits[:, 1])

    @classmethod
    def at(cls, positions, model: TestbedModel, nsigmas: float = DEFAULT_LIMIT_SIGMAS) -> "ActuatorBank":
        return cls(positions=np.asarray(positions, dtype=np.int64), limits=model.default_limits(nsigmas))

    def teleport(self, positions) -> None:
        """Set positions exactly (testbed-only reset helper); clears gap state."""
        self.positions = np.clip(_vec4(positions, np.int64), self.limits[:, 0], self.limits[:, 1])
        self.last_direction[:] = 0
        self.drive_direction[:] = 0
        self.pending_gap[:] = 0.0


MODE_EVERY_ACTION = "every-action"
MODE_REVERSAL_ONLY = "reversal-only"


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Dead-zone action noise: per-axis log-normal step losses scaled by a factor."""

    noise_factor: float = 0.0
    medians: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_DEADZONE_MEDIANS))
    log_sigma: float = DEFAULT_DEADZONE_LOG_SIGMA
    mode: str = MODE_EVERY_ACTION

    def __post_init__(self):
        object.__setattr__(self, "medians", _vec4(self.medians, np.float64))
        if self.noise_factor < 0:
            raise ValueError("noise_factor must be >= 0")
        if not np.all(self.medians > 0):
            raise ValueError("dead-zone medians must be > 0")
        if self.mode not in (MODE_EVERY_ACTION, MODE_REVERSAL_ONLY):
            raise ValueError(f"unknown noise mode {self.mode!r}")

    def sample_deadzone(self, rng: np.random.Generator, axes: np.ndarray) -> np.ndarray:
        """Draw dead-zone step counts (>= 0) for the selected axis indices."""
        return rng.lognormal(mean=np.log(self.medians[axes]), sigma=self.log_sigma)

    def as_reversal_only(self) -> "NoiseModel":
        return NoiseModel(self.noise_factor, self.medians, self.log_sigma, MODE_REVERSAL_ONLY)


@dataclass(frozen=True)
class MotionTrace:
    """Powers sampled at evenly spaced points along one simultaneous move."""

    powers: np.ndarray
    clipped: bool = False

    @property
    def sample_count(self) -> int:
        return len(self.powers) - 1

    @property
    def start_power(self) -> float:
        return float(self.powers[0])

    @property
    def end_power(self) -> float:
        return float(self.powers[-1])


def _effective_move(bank: ActuatorBank, intended: np.ndarray, noise: NoiseModel,
                    rng: np.random.Generator) -> np.ndarray:
    """Per-axis effective steps after dead-zone losses; updates gap state."""
    signs = np.sign(intended)
    magnitudes = np.abs(intended).astype(np.float64)
    scale = noise.noise_factor

    if scale == 0.0:
        effective = intended.copy()
    elif noise.mode == MODE_EVERY_ACTION:
        d = noise.sample_deadzone(rng, np.arange(N_AXES))
        effective = (signs * np.floor(np.maximum(0.0, magnitudes - scale * d))).astype(np.int64)
    else:
        # Hysteresis gap: re-drawn on direction reversal, consumed by motion.
        moving = signs != 0
        reversal = moving & (bank.drive_direction != 0) & (signs != bank.drive_direction)
        axes = np.flatnonzero(reversal)
        if axes.size:
            bank.pending_gap[axes] = scale * noise.sample_deadzone(rng, axes)
        consumed = np.minimum(bank.pending_gap, magnitudes)
        bank.pending_gap -= np.where(moving, consumed, 0.0)
        effective = (signs * np.floor(magnitudes - np.where(moving, consumed, 0.0))).astype(np.int64)
        bank.drive_direction = np.where(moving, signs.astype(np.int64), bank.drive_direction)
    return effective


def apply_action(bank: ActuatorBank, intended, noise: NoiseModel, model: TestbedModel,
                 rng: np.random.Generator, samples: int = 10) -> MotionTrace:
    """Move all four axes simultaneously and record powers along the path.

    The intended integer move per axis is reduced by the dead-zone loss,
    positions are clipped to the travel limits (silently, but flagged in the
    trace), and `samples`+1 powers are sampled on the straight line from the
    old to the new positions.  Mutates `bank` in place and returns the trace.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    intended = _vec4(intended, np.int64)
    start = bank.positions.copy()

    effective = _effective_move(bank, intended, noise, rng)
    target = start + effective
    new_positions = np.clip(target, bank.limits[:, 0], bank.limits[:, 1])
    clipped = bool(np.any(new_positions != target))

    moved = new_positions != start
    bank.last_direction = np.where(moved, np.sign(new_positions - start).astype(np.int64),
                                   bank.last_direction)
    bank.positions = new_positions

    fractions = np.linspace(0.0, 1.0, samples + 1)[:, None]
    path = start[None, :] + fractions * (new_positions - start)[None, :]
    powers = coupling_power(path, model)
    # Endpoint power must be exact at the final integer positions.
    powers[-1] = coupling_power(new_positions, model)
    return MotionTrace(powers=powers, clipped=clipped)


def characterize_deadzone(model: TestbedModel, noise: NoiseModel, rng: np.random.Generator,
                          trials: int, power_tolerance: float = 0.005,
                          probe_step: int = 250, return_power_frac: float = 0.6,
                          out_sigmas: float = 6.0, step_budget: int = 400_000) -> np.ndarray:
    """Measure per-axis dead zones by the long-move / return / reverse probe.

    For each trial and axis: start at the optimum, drive the axis far out,
    walk back until the power recovers past `return_power_frac` of the
    amplitude, then reverse in `probe_step` increments and count the steps
    issued before the power changes by more than `power_tolerance`.

    The probe always uses reversal-only gap accounting: the measurement is of
    the direction-reversal gap, and per-increment redraws would make small
    probes stall forever.  Returns counts shaped (trials, 4).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    probe_noise = noise.as_reversal_only()
    counts = np.zeros((trials, N_AXES), dtype=np.int64)

    for trial in range(trials):
        for axis in range(N_AXES):
            bank = ActuatorBank.at(model.centers.astype(np.int64), model)
            move = np.zeros(N_AXES, dtype=np.int64)
            budget = step_budget

            far = int(out_sigmas * model.sigmas[axis])
            move[axis] = far
            apply_action(bank, move, probe_noise, model, rng, samples=1)
            budget -= far

            # Walk back toward the peak until coupling is high again.
            chunk = max(probe_step, int(model.sigmas[axis] / 8))
            move[axis] = -chunk
            while coupling_power(bank.positions, model) < return_power_frac * model.amplitude:
                apply_action(bank, move, probe_noise, model, rng, samples=1)
                budget -= chunk
                if budget <= 0:
                    raise DeadzoneCharacterizationError(
                        f"axis {axis}: high coupling not re-reached within step budget")

            p_ref = coupling_power(bank.positions, model)
            move[axis] = probe_step
            steps = 0
            while abs(coupling_power(bank.positions, model) - p_ref) <= power_tolerance:
                apply_action(bank, move, probe_noise, model, rng, samples=1)
                steps += probe_step
                if steps > budget:
                    raise DeadzoneCharacterizationError(
                        f"axis {axis}: power did not move within step budget")
            counts[trial, axis] = steps
    return counts
