"""
The training loop: exploration, replay updates and periodic evaluation snapshots.
"""

import csv
import typing
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from .. import _mpi
from .._fs import log, log_to, write_json
from ..agents import ReplayBuffer, Transition, make_agent
from ..anatomy import AnatomyParams, generate_synthetic_tree
from ..device import DeviceAction
from ..env import NavigationEnv, parse_tasks, sample_task
from ..exceptions import ConfigValueError, EmptyBufferError
from ..geometry import AUGMENT_RANGE, augment_scale, load_tree
from .evaluation import AGGREGATE_FIELDS, evaluate

if typing.TYPE_CHECKING:
    from ..config import RunConfig


@dataclass
class TrainConfig:
    agent: str = "sac"
    #: Exploration steps.
    budget: int = 200_000
    eval_every: int = 10_000
    eval_episodes: int = 50
    tasks: typing.List[str] = field(default_factory=lambda: ["A1"])
    #: Tree files to train on; when empty, synthetic trees from ``tree_seeds``.
    tree_files: typing.List[str] = field(default_factory=list)
    tree_seeds: typing.List[int] = field(default_factory=lambda: [0])
    augment: bool = False
    seed: int = 0
    eval_seed: int = 0
    warmup: int = 1000
    update_every: int = 1
    log_every: int = 1000
    #: Trajectory logs loaded into the replay buffer before training.
    prefill: typing.List[str] = field(default_factory=list)
    workers: int = 1

    def validate(self):
        for key in ("budget", "eval_every", "eval_episodes", "update_every", "log_every"):
            if getattr(self, key) <= 0:
                raise ConfigValueError(f"train.{key} must be positive.", f"train.{key}")
        if self.budget % self.eval_every:
            raise ConfigValueError(
                f"Evaluation cadence {self.eval_every} does not divide the budget"
                f" {self.budget}.",
                "train.eval_every",
            )
        if self.warmup < 0:
            raise ConfigValueError("train.warmup cannot be negative.", "train.warmup")
        parse_tasks(self.tasks)
        return self


def resolve_trees(train: TrainConfig, anatomy: AnatomyParams = None):
    """
    Named training trees: the configured files, or one synthetic tree per seed.
    """
    if train.tree_files:
        return [(Path(p).stem, load_tree(p)) for p in train.tree_files]
    anatomy = anatomy or AnatomyParams()
    return [
        (f"synthetic_{s}", generate_synthetic_tree(anatomy, s)) for s in train.tree_seeds
    ]


class _CsvLog:
    """
    Append-only CSV file owned by the main node.
    """

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = list(columns)
        if _mpi.main_node:
            with open(self.path, "w", newline="") as f:
                csv.writer(f, lineterminator="\n").writerow(self.columns)

    def append(self, row: typing.Mapping):
        if _mpi.main_node:
            with open(self.path, "a", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow([row.get(c, "") for c in self.columns])


class _Episode:
    def __init__(self, env, instance, obs, history, episode):
        self.env = env
        self.instance = instance
        self.obs = obs
        self.history = deque([obs], maxlen=history)
        self.memory = {}
        self.id = episode


def _start_episode(index, tasks, trees, config, buffer, agent, rng):
    tree_id, tree = trees[(index // len(tasks)) % len(trees)]
    task = tasks[index % len(tasks)]
    if config.train.augment:
        sx, sy = rng.uniform(*AUGMENT_RANGE, size=2)
        tree = augment_scale(tree, sx, sy)
        tree_id = f"{tree_id}@{sx:.4f}x{sy:.4f}"
    env = NavigationEnv(tree, config.env)
    instance = sample_task(task, tree, rng, tree_id=tree_id, config=config.env)
    obs = env.reset(instance)
    return _Episode(env, instance, obs, agent.config.history, buffer.new_episode_id())


def _metrics_row(step, task, agg):
    row = {"step": step, "task": task}
    row.update({k: getattr(agg, k) for k in AGGREGATE_FIELDS})
    return row


def train(run_dir, config: "RunConfig", *, echo: bool = False) -> Path:
    """
    Train the configured agent and write the run directory: ``config.json``,
    ``log.txt``, ``losses.csv``, ``metrics.csv``, ``metrics_tasks.csv``, ``best.json``,
    ``evaluations/step_<N>.csv`` and ``checkpoints/step_<N>``.
    """
    tc = config.train.validate()
    out = Path(run_dir)
    if _mpi.main_node:
        out.mkdir(parents=True, exist_ok=True)
        write_json(config.to_dict(), out / "config.json")
    _mpi.barrier()
    with log_to(out / "log.txt"):
        return _train(out, config, tc, echo)


def _train(out, config, tc, echo):
    tasks = parse_tasks(tc.tasks)
    trees = resolve_trees(tc, config.anatomy)
    agent = make_agent(tc.agent, config.agent_config(tc.agent), seed=tc.seed)
    buffer = ReplayBuffer(config.buffer.capacity)
    if tc.prefill:
        count = buffer.prefill(tc.prefill)
        log(f"Pre-filled the replay buffer with {count} transitions", category="train")
    rng = np.random.default_rng([tc.seed, 21])
    metrics = _CsvLog(out / "metrics.csv", ["step", "task", *AGGREGATE_FIELDS])
    per_task = _CsvLog(out / "metrics_tasks.csv", ["step", "task", *AGGREGATE_FIELDS])
    losses, loss_log = {}, None
    best = None
    episode, started = None, 0
    for step in range(1, tc.budget + 1):
        if episode is None:
            episode = _start_episode(started, tasks, trees, config, buffer, agent, rng)
            started += 1
        if step <= tc.warmup:
            proposal = rng.uniform(-1.0, 1.0, size=2)
        else:
            proposal = agent.act(np.array(episode.history), rng, memory=episode.memory)
        action = DeviceAction.from_normalized(proposal, config.env.device)
        t = episode.env.step_index
        result = episode.env.step(action)
        buffer.push(
            Transition(
                episode.obs,
                action.normalized(),
                result.reward,
                result.observation,
                result.terminated,
                result.truncated,
                episode.id,
                t,
            )
        )
        episode.obs = result.observation
        episode.history.append(result.observation)
        if result.done:
            episode = None
        if step > tc.warmup and step % tc.update_every == 0:
            try:
                batch = buffer.sample(agent.batch_sequences, agent.sequence_length, rng)
            except EmptyBufferError:
                pass
            else:
                for key, value in agent.update(batch, rng).items():
                    losses.setdefault(key, []).append(value)
        if step % tc.log_every == 0 and losses:
            if loss_log is None:
                loss_log = _CsvLog(out / "losses.csv", ["step", *sorted(losses)])
            loss_log.append({"step": step, **{k: np.mean(v) for k, v in losses.items()}})
            losses = {}
        if step % tc.eval_every == 0:
            overall, best = _snapshot(
                out, step, agent, tasks, trees, config, metrics, per_task, best
            )
            if echo and _mpi.main_node:
                click.echo(
                    f"step {step}: success {overall.success_rate:.1f}%"
                    f" (best {best['success_rate']:.1f}% at step {best['step']})"
                )
    log(f"Training finished after {tc.budget} steps", category="train")
    return out


def _snapshot(out, step, agent, tasks, trees, config, metrics, per_task, best):
    tc = config.train
    result = evaluate(
        agent,
        tasks,
        trees,
        tc.eval_episodes,
        seed=tc.eval_seed,
        env_config=config.env,
        workers=tc.workers,
    )
    overall = result.overall
    label = "all" if len(tasks) > 1 else str(tasks[0])
    checkpoint = out / "checkpoints" / f"step_{step}"
    if _mpi.main_node:
        result.write(out / "evaluations" / f"step_{step}.csv")
        metrics.append(_metrics_row(step, label, overall))
        for task, agg in result.per_task().items():
            per_task.append(_metrics_row(step, task, agg))
        agent.save(checkpoint, step=step)
    rate = overall.success_rate
    log(f"Evaluation at step {step}: {rate:.1f}% success", category="eval")
    if best is None or overall.success_rate > best["success_rate"]:
        best = {
            "step": step,
            "success_rate": overall.success_rate,
            "checkpoint": str(checkpoint.relative_to(out)),
        }
        if _mpi.main_node:
            write_json(best, out / "best.json")
    return overall, best
