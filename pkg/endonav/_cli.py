import sys
from pathlib import Path

import click

from . import _mpi
from ._fs import log, write_json
from .agents import load_agent
from .anatomy import cohort_summary, generate_cohort
from .config import resolve_config
from .env import parse_task, parse_tasks
from .exceptions import EndonavError
from .geometry import save_tree
from .harness import (
    collect as collect_trajectories,
    evaluate,
    format_table,
    plot_curves,
    resolve_trees,
    summarize,
    train,
)

_NoArgsIsHelp = getattr(click.exceptions, "NoArgsIsHelpError", ())


class _EndonavGroup(click.Group):
    """
    Maps failures onto exit codes: 1 for usage errors, 2 for runtime failures.
    """

    def main(
        self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **kw
    ):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **kw)
            code = rv if isinstance(rv, int) else 0
        except _NoArgsIsHelp as e:
            e.show()
            code = 0
        except click.exceptions.Exit as e:
            code = e.exit_code
        except click.UsageError as e:
            e.show()
            code = 1
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        except click.ClickException as e:
            e.show()
            code = 2
        except (EndonavError, OSError) as e:
            log(f"{type(e).__name__}: {e}", level="error", category="cli")
            click.echo(f"Error: {e}", err=True)
            code = 2
        if standalone_mode:
            sys.exit(code)
        return code


def _echo(message):
    if _mpi.main_node:
        click.echo(message)


def _common(default_out):
    def decorator(f):
        f = click.option(
            "--set",
            "overrides",
            multiple=True,
            metavar="KEY=VALUE",
            help="Override a config key, e.g. train.budget=10000. Repeatable.",
        )(f)
        f = click.option(
            "--out",
            type=click.Path(path_type=Path),
            default=default_out,
            show_default=True,
            help="Output location.",
        )(f)
        f = click.option(
            "--config",
            "config_file",
            type=click.Path(exists=True, dir_okay=False, path_type=Path),
            default=None,
            help="JSON or TOML config file.",
        )(f)
        f = click.option(
            "--seed", type=int, default=None, help="Random seed; overrides train.seed."
        )(f)
        return f

    return decorator


_tasks = click.option(
    "--tasks", default="all", show_default=True, help="Comma separated task ids."
)
_workers = click.option(
    "--workers",
    type=click.IntRange(min=1),
    default=None,
    help="Threads running evaluation episodes; overrides train.workers.",
)


def _config(config_file, overrides, seed=None, workers=None, **values):
    values = {k: v for k, v in values.items() if v is not None}
    if seed is not None:
        values["train.seed"] = seed
    if workers is not None:
        values["train.workers"] = workers
    return resolve_config(config_file, overrides, values)


@click.group(cls=_EndonavGroup)
def endonav():
    """
    Multi-task endovascular navigation: simulation, training and evaluation.
    """


@endonav.command("gen-vessels", help="Generate a cohort of synthetic vessel trees.")
@click.option("--count", type=click.IntRange(min=1), default=10, show_default=True)
@_common("trees")
def gen_vessels(count, seed, config_file, out, overrides):
    config = _config(config_file, overrides)
    seed = config.train.seed if seed is None else seed
    cohort = generate_cohort(config.anatomy, seed, count)
    if _mpi.main_node:
        out.mkdir(parents=True, exist_ok=True)
        files = []
        for i, (_, tree) in enumerate(cohort):
            file = out / f"tree_{i:03d}.json"
            save_tree(tree, file)
            files.append(file.name)
        summary = cohort_summary(cohort)
        for entry, file in zip(summary["trees"], files):
            entry["file"] = file
        write_json({"seed": seed, "count": count, **summary}, out / "cohort.json")
    _echo(f"Wrote {count} trees to '{out}'.")


@endonav.command("train-sac", help="Train single-task SAC on one task.")
@click.option("--task", default="A1", show_default=True, help="Task id.")
@_workers
@_common(None)
def train_sac(task, workers, seed, config_file, out, overrides):
    task = parse_task(task)
    config = _config(
        config_file,
        overrides,
        seed,
        workers,
        **{"train.agent": "sac", "train.tasks": [str(task)]},
    )
    out = out or Path("runs") / f"sac_{task}"
    train(out, config, echo=True)
    _echo(f"Run written to '{out}'.")


@endonav.command(help="Record deterministic episodes of a trained agent.")
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@click.option("--task", default="A1", show_default=True, help="Task id.")
@click.option("--episodes", type=click.IntRange(min=0), default=250, show_default=True)
@_common(None)
def collect(checkpoint, task, episodes, seed, config_file, out, overrides):
    task = parse_task(task)
    config = _config(config_file, overrides, seed)
    agent = load_agent(checkpoint)
    trees = resolve_trees(config.train, config.anatomy)
    out = out or Path("trajectories") / f"{task}.jsonl"
    if _mpi.main_node:
        collect_trajectories(
            agent,
            task,
            episodes,
            out,
            trees=trees,
            seed=config.train.seed,
            env_config=config.env,
        )
    _echo(f"Recorded {episodes} episodes of {task} to '{out}'.")


@endonav.command("train-multi", help="Train one agent on several tasks at once.")
@click.option("--agent", default="tdmpc", show_default=True, help="Agent kind.")
@_tasks
@click.option(
    "--prefill",
    multiple=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Trajectory log to pre-fill the replay buffer with. Repeatable.",
)
@click.argument("logs", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@_workers
@_common(None)
def train_multi(agent, tasks, prefill, logs, workers, seed, config_file, out, overrides):
    tasks = [str(t) for t in parse_tasks(tasks)]
    values = {"train.agent": agent, "train.tasks": tasks}
    if prefill or logs:
        values["train.prefill"] = [*prefill, *logs]
    config = _config(config_file, overrides, seed, workers, **values)
    out = out or Path("runs") / f"{agent}_multi"
    train(out, config, echo=True)
    _echo(f"Run written to '{out}'.")


@endonav.command("eval", help="Evaluate a checkpoint and print the metric table.")
@click.option(
    "--checkpoint",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    required=True,
)
@_tasks
@click.option("--episodes", type=click.IntRange(min=1), default=None)
@_workers
@_common("evaluation.csv")
def eval_(checkpoint, tasks, episodes, workers, seed, config_file, out, overrides):
    config = _config(config_file, overrides, None, workers)
    agent = load_agent(checkpoint)
    metrics = evaluate(
        agent,
        parse_tasks(tasks),
        resolve_trees(config.train, config.anatomy),
        episodes or config.train.eval_episodes,
        seed=config.train.eval_seed if seed is None else seed,
        env_config=config.env,
        workers=config.train.workers,
    )
    if _mpi.main_node:
        metrics.write(out)
    _echo(format_table(metrics))


_runs_marker = click.option(
    "--runs", "runs_flag", is_flag=True, help="Optional marker before the run list."
)


@endonav.command(help="Compare runs with paired t-tests.")
@click.argument("runs", nargs=-1, type=click.Path(exists=True, file_okay=False))
@_runs_marker
@_common("summary")
def stats(runs, runs_flag, seed, config_file, out, overrides):
    if not runs:
        raise click.UsageError("Pass at least one run directory.")
    summary = summarize(runs, out if _mpi.main_node else None)
    for row in summary.table:
        _echo(
            f"{row['agent']:<16} {row['task']:<4}"
            f" SR {row['SR']:6.1f} ± {row['SR_std']:5.1f}"
            f"  PT {row['PT']:6.2f} ± {row['PT_std']:5.2f}"
            f"  PR {row['PR']:6.1f} ± {row['PR_std']:5.1f}"
        )
    for row in summary.significance:
        if row["task"] == "all":
            _echo(
                f"{row['run_a']} vs {row['run_b']} {row['metric']}:"
                f" p = {row['p']:.4f} ({row['status']})"
            )


@endonav.command(help="Plot success-rate learning curves of runs as SVG.")
@click.argument("runs", nargs=-1, type=click.Path(exists=True, file_okay=False))
@_runs_marker
@_common("curves.svg")
def plot(runs, runs_flag, seed, config_file, out, overrides):
    if not runs:
        raise click.UsageError("Pass at least one run directory.")
    if _mpi.main_node:
        plot_curves(runs, out)
    _echo(f"Wrote '{out}'.")


def main(argv=None) -> int:
    """
    Run the command line with ``argv`` and return the exit code.
    """
    return endonav.main(argv, prog_name="endonav", standalone_mode=False)
