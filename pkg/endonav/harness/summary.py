"""
Comparison of finished runs: metric tables, paired significance tests and learning
curves.
"""

import csv
import itertools
import typing
from dataclasses import dataclass
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .._fs import read_json
from ..env import parse_tasks
from ..exceptions import DegenerateSampleError, IncompatibleRunsError
from .evaluation import EpisodeRecord, EvalMetrics, aggregate, read_records
from .statistics import paired_t_test

TABLE_COLUMNS = ["agent", "kind", "task", "SR", "SR_std", "PT", "PT_std", "PR", "PR_std"]
SIGNIFICANCE_COLUMNS = [
    "run_a",
    "run_b",
    "task",
    "metric",
    "n",
    "t",
    "p",
    "significant",
    "status",
    "pairing",
]
ALPHA = 0.05


@dataclass
class RunResult:
    path: Path
    label: str
    kind: str
    tasks: typing.List[str]
    step: int
    records: typing.List[EpisodeRecord]


def _evaluation_files(path: Path):
    files = []
    for file in (path / "evaluations").glob("step_*.csv"):
        try:
            files.append((int(file.stem.split("_", 1)[1]), file))
        except ValueError:
            continue
    return sorted(files)


def load_run(path, label: str = None) -> RunResult:
    """
    Load the last evaluation of a run directory.
    """
    path = Path(path)
    try:
        config = read_json(path / "config.json")
    except FileNotFoundError:
        raise IncompatibleRunsError(
            f"'{path}' is not a run directory.", [str(path)]
        ) from None
    evaluations = _evaluation_files(path)
    if not evaluations:
        raise IncompatibleRunsError(f"Run '{path}' holds no evaluations.", [str(path)])
    step, file = evaluations[-1]
    train = config.get("train", {})
    return RunResult(
        path,
        label or path.name,
        train.get("agent", "unknown"),
        sorted(str(t) for t in parse_tasks(train.get("tasks", ["A1"]))),
        step,
        read_records(file),
    )


def check_compatible(runs: typing.Sequence[RunResult]):
    paths = [str(r.path) for r in runs]
    if any(r.tasks != runs[0].tasks for r in runs):
        raise IncompatibleRunsError(
            "Runs were trained on different task sets: "
            + "; ".join(f"{r.label}: {','.join(r.tasks)}" for r in runs),
            paths,
        )
    keys = {r.label: {rec.key for rec in r.records} for r in runs}
    first = keys[runs[0].label]
    if any(k != first for k in keys.values()):
        raise IncompatibleRunsError(
            "Runs were evaluated on different episodes and cannot be paired.", paths
        )


def _table_row(run, task, records):
    agg = aggregate(records)
    return {
        "agent": run.label,
        "kind": run.kind,
        "task": task,
        "SR": agg.success_rate,
        "SR_std": agg.sr_std,
        "PT": agg.proc_time_mean,
        "PT_std": agg.proc_time_std,
        "PR": agg.path_ratio_mean,
        "PR_std": agg.path_ratio_std,
    }


def _test(a, b, task, metric, x, y):
    row = {
        "run_a": a.label,
        "run_b": b.label,
        "task": task,
        "metric": metric,
        "n": len(x),
        "pairing": "episode",
    }
    try:
        result = paired_t_test(x, y)
    except DegenerateSampleError:
        row.update(t=float("nan"), p=float("nan"), significant=False, status="degenerate")
    else:
        row.update(t=result.t, p=result.p, significant=result.p < ALPHA, status="ok")
    return row


def significance(a: RunResult, b: RunResult, task: str):
    """
    Paired tests of run ``a`` against run ``b`` on episodes sharing task, tree and
    seed. Procedure times are only paired where both runs succeeded.
    """
    mine = {r.key: r for r in a.records if task == "all" or r.task == task}
    theirs = {r.key: r for r in b.records if task == "all" or r.task == task}
    keys = sorted(mine)
    pairs = [(mine[k], theirs[k]) for k in keys]
    both = [(x, y) for x, y in pairs if x.success and y.success]
    return [
        _test(
            a,
            b,
            task,
            "success",
            [float(x.success) for x, _ in pairs],
            [float(y.success) for _, y in pairs],
        ),
        _test(
            a,
            b,
            task,
            "procedure_time",
            [x.procedure_time for x, _ in both],
            [y.procedure_time for _, y in both],
        ),
        _test(
            a,
            b,
            task,
            "path_ratio",
            [x.path_ratio for x, _ in pairs],
            [y.path_ratio for _, y in pairs],
        ),
    ]


@dataclass
class Summary:
    table: typing.List[dict]
    significance: typing.List[dict]


def _write_csv(rows, columns, path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _labels(runs):
    paths = [Path(r) for r in runs]
    names = [p.name for p in paths]
    return [n if names.count(n) == 1 else f"{n}_{i}" for i, n in enumerate(names)]


def summarize(runs: typing.Sequence, out=None) -> Summary:
    """
    Compare runs evaluated on the same episodes. With ``out``, writes
    ``summary.csv``, ``significance.csv`` and ``curves.svg`` there.
    """
    results = [load_run(r, label) for r, label in zip(runs, _labels(runs))]
    if not results:
        raise IncompatibleRunsError("Nothing to summarize.", [])
    check_compatible(results)
    tasks = results[0].tasks + ["all"]
    table = []
    for run in results:
        for task in tasks:
            records = [r for r in run.records if task == "all" or r.task == task]
            table.append(_table_row(run, task, records))
    tests = []
    for a, b in itertools.combinations(results, 2):
        for task in tasks:
            tests.extend(significance(a, b, task))
    summary = Summary(table, tests)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(table, TABLE_COLUMNS, out / "summary.csv")
        _write_csv(tests, SIGNIFICANCE_COLUMNS, out / "significance.csv")
        plot_curves(runs, out / "curves.svg")
    return summary


def read_curves(run) -> typing.Dict[str, typing.Tuple[np.ndarray, np.ndarray]]:
    """
    Success rate per evaluation step for every task of a run.
    """
    with open(Path(run) / "metrics_tasks.csv", "r", newline="") as f:
        rows = list(csv.DictReader(f))
    curves = {}
    for task in sorted({row["task"] for row in rows}):
        points = [
            (int(r["step"]), float(r["success_rate"])) for r in rows if r["task"] == task
        ]
        curves[task] = tuple(np.array(v) for v in zip(*points))
    return curves


def plot_curves(runs: typing.Sequence, path) -> Path:
    """
    One success-rate panel per task with one line per run, as a standalone SVG.
    """
    curves = {label: read_curves(run) for run, label in zip(runs, _labels(runs))}
    tasks = sorted({task for c in curves.values() for task in c})
    with matplotlib.rc_context({"svg.hashsalt": "endonav", "svg.fonttype": "none"}):
        fig = Figure(figsize=(3.2 * max(1, len(tasks)), 3.0))
        axes = fig.subplots(1, max(1, len(tasks)), squeeze=False)[0]
        for ax, task in zip(axes, tasks):
            for label, c in curves.items():
                if task in c:
                    ax.plot(*c[task], marker="o", markersize=3, label=label)
            ax.set_title(task)
            ax.set_xlabel("exploration steps")
            ax.set_ylim(-5, 105)
        axes[0].set_ylabel("success rate (%)")
        if tasks:
            axes[0].legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    return Path(path)


def format_table(metrics: EvalMetrics) -> str:
    """
    Per-task table with success rate, procedure time and path ratio columns.
    """
    lines = [f"{'task':<6} {'SR (%)':>16} {'PT (s)':>16} {'PR (%)':>16}"]
    rows = list(metrics.per_task().items()) + [("all", metrics.overall)]
    for task, agg in rows:
        cells = [
            f"{mean:6.1f} ± {std:5.1f}"
            for mean, std in (
                (agg.success_rate, agg.sr_std),
                (agg.proc_time_mean, agg.proc_time_std),
                (agg.path_ratio_mean, agg.path_ratio_std),
            )
        ]
        lines.append(f"{task:<6} " + " ".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)
