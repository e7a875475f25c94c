"""Metrics plumbing: deterministic CSV logs and exponentially weighted smoothing."""

from __future__ import annotations

import math
import os

import numpy as np


def format_value(value) -> str:
    """Shortest round-trip representation; floats via repr for byte stability."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


class CsvWriter:
    """Append-only CSV with a fixed column set, flushed per row."""

    def __init__(self, path: str, columns: list[str]):
        self.path = path
        self.columns = columns
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(",".join(columns) + "\n")
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._fh.write(",".join(format_value(row[c]) for c in self.columns) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def smooth(series, span: float):
    """Exponentially weighted moving mean and (debiased) standard deviation.

    Matches the usual adjusted EW semantics: weights (1 - a)^k with
    a = 2 / (span + 1); the first std is undefined and reported as NaN.
    Returns (mean, std) arrays; the raw series is never modified.
    """
    if span <= 0:
        raise ValueError("span must be > 0")
    x = np.asarray(series, dtype=np.float64)
    alpha = 2.0 / (span + 1.0)
    decay = 1.0 - alpha
    n = len(x)
    means = np.empty(n)
    stds = np.empty(n)
    # Weighted Welford recursion: exact zeros on constant input, no
    # second-moment cancellation.
    s_w = s_w2 = mean = m2 = 0.0
    for i in range(n):
        s_w_new = 1.0 + decay * s_w
        s_w2 = 1.0 + decay * decay * s_w2
        delta = x[i] - mean
        new_mean = mean + delta / s_w_new
        m2 = decay * m2 + delta * (x[i] - new_mean)
        mean = new_mean
        s_w = s_w_new
        means[i] = mean
        denom = s_w * s_w - s_w2
        if denom <= 0.0:
            stds[i] = math.nan
        else:
            var = (m2 / s_w) * (s_w * s_w / denom)
            stds[i] = math.sqrt(max(var, 0.0))
    return means, stds


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be > 0")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)
