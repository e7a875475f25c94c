from .evaluate import CoupleResult, EvalReport, couple_to_goal, evaluate, summarize_attempts
from .metrics import CsvWriter, smooth, wilson_interval
from .train import TrainResult, load_checkpoint, rebuild_env_from_checkpoint, train
from .sweep import expand_grid, run_sweep

__all__ = [
    "CoupleResult",
    "CsvWriter",
    "EvalReport",
    "TrainResult",
    "couple_to_goal",
    "evaluate",
    "expand_grid",
    "load_checkpoint",
    "rebuild_env_from_checkpoint",
    "run_sweep",
    "smooth",
    "summarize_attempts",
    "train",
    "wilson_interval",
]
