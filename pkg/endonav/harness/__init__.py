"""
The experimental protocol: training, trajectory collection, evaluation and the
statistical comparison of runs.
"""

from .evaluation import (
    Aggregate,
    EpisodeRecord,
    EvalMetrics,
    aggregate,
    collect,
    evaluate,
    path_ratio,
    read_records,
    run_episode,
)
from .statistics import TTest, paired_t_test
from .summary import format_table, load_run, plot_curves, summarize
from .training import TrainConfig, resolve_trees, train

__all__ = [
    "Aggregate",
    "EpisodeRecord",
    "EvalMetrics",
    "TTest",
    "TrainConfig",
    "aggregate",
    "collect",
    "evaluate",
    "format_table",
    "load_run",
    "paired_t_test",
    "path_ratio",
    "plot_curves",
    "read_records",
    "resolve_trees",
    "run_episode",
    "summarize",
    "train",
]
