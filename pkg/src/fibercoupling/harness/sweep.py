"""Cartesian-product sweep runner over run-config overrides."""

from __future__ import annotations

import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

from ..config import RunConfig, apply_overrides, config_hash, run_config_from_dict, \
    run_config_to_dict

logger = logging.getLogger(__name__)


def expand_grid(grid: dict) -> list[dict]:
    """All combinations of {dotted key: [values]}; empty grid yields one cell."""
    if not grid:
        return [{}]
    keys = sorted(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cells.append(dict(zip(keys, values)))
    return cells


def load_grid_file(path: str) -> tuple[dict, dict, list]:
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    base = spec.get("base", {})
    grid = spec.get("grid", {})
    seeds = spec.get("seeds", [0])
    return base, grid, seeds


def _run_cell(config_dict: dict) -> str:
    from .train import train

    config = run_config_from_dict(config_dict)
    result = train(config)
    return result.out_dir


def run_sweep(base: RunConfig, grid: dict, seeds: list, out_dir: str,
              workers: int = 1) -> list[str]:
    """Validate every cell, then run them all; returns the run directories.

    Invalid override keys raise before any training starts.
    """
    cells = expand_grid(grid)
    configs = []
    manifest = []
    for index, (cell, seed) in enumerate(itertools.product(cells, seeds)):
        overrides = dict(cell)
        overrides["seed"] = seed
        overrides["out_dir"] = os.path.join(out_dir, f"cell_{index:04d}")
        cfg = apply_overrides(base, overrides)
        configs.append(run_config_to_dict(cfg))
        manifest.append({"cell": f"cell_{index:04d}", "overrides": cell, "seed": seed,
                         "out_dir": overrides["out_dir"], "config_hash": config_hash(cfg)})

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "sweep_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)

    if workers <= 1:
        return [_run_cell(cfg) for cfg in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, configs))
