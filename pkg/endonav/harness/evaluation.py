"""
Deterministic evaluation episodes, trajectory collection and their aggregates.
"""

import collections
import csv
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .. import _mpi
from ..agents import Agent
from ..device import DeviceAction
from ..env import EnvConfig, NavigationEnv, TaskId, TrajectoryWriter, sample_task
from ..geometry import VesselTree

#: Named trees, ``(tree id, tree)``.
Trees = typing.Sequence[typing.Tuple[str, VesselTree]]


@dataclass
class EpisodeRecord:
    episode: int
    task: str
    tree: str
    seed: int
    success: bool
    steps: int
    #: Seconds to reach the target; ``nan`` for failed episodes.
    procedure_time: float
    initial_pathlength: float
    remaining_pathlength: float
    path_ratio: float

    @classmethod
    def from_row(cls, row: typing.Mapping[str, str]) -> "EpisodeRecord":
        return cls(
            int(row["episode"]),
            row["task"],
            row["tree"],
            int(row["seed"]),
            row["success"] in ("True", "true", "1"),
            int(row["steps"]),
            float(row["procedure_time"]),
            float(row["initial_pathlength"]),
            float(row["remaining_pathlength"]),
            float(row["path_ratio"]),
        )

    @property
    def key(self):
        return (self.episode, self.task, self.tree, self.seed)


RECORD_FIELDS = [f.name for f in fields(EpisodeRecord)]


@dataclass
class Aggregate:
    """
    Percentages and seconds as mean and population standard deviation.
    """

    episodes: int
    success_rate: float
    sr_std: float
    proc_time_mean: float
    proc_time_std: float
    path_ratio_mean: float
    path_ratio_std: float


AGGREGATE_FIELDS = [f.name for f in fields(Aggregate) if f.name != "episodes"]


def path_ratio(success: bool, remaining: float, initial: float) -> float:
    """
    Share of the initial pathlength covered at the end of an episode, 1 on success.
    """
    if success:
        return 1.0
    if initial <= 0:
        return 0.0
    return float(np.clip(1 - remaining / initial, 0.0, 1.0))


def aggregate(records: typing.Sequence[EpisodeRecord]) -> Aggregate:
    if not records:
        nan = float("nan")
        return Aggregate(0, nan, nan, nan, nan, nan, nan)
    success = np.array([r.success for r in records], dtype=float) * 100
    ratio = np.array([r.path_ratio for r in records]) * 100
    times = np.array([r.procedure_time for r in records if r.success])
    return Aggregate(
        len(records),
        float(success.mean()),
        float(success.std()),
        float(times.mean()) if len(times) else float("nan"),
        float(times.std()) if len(times) else float("nan"),
        float(ratio.mean()),
        float(ratio.std()),
    )


@dataclass
class EvalMetrics:
    records: typing.List[EpisodeRecord]

    @property
    def overall(self) -> Aggregate:
        return aggregate(self.records)

    def per_task(self) -> typing.Dict[str, Aggregate]:
        tasks = sorted({r.task for r in self.records})
        return {t: aggregate([r for r in self.records if r.task == t]) for t in tasks}

    def write(self, path):
        write_records(self.records, path)


def write_records(records, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, RECORD_FIELDS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(asdict(record))


def read_records(path) -> typing.List[EpisodeRecord]:
    with open(path, "r", newline="") as f:
        return [EpisodeRecord.from_row(row) for row in csv.DictReader(f)]


def run_episode(
    agent: Agent,
    env: NavigationEnv,
    instance,
    rng: np.random.Generator,
    *,
    deterministic: bool = True,
    on_step: typing.Callable = None,
):
    """
    Play one episode to its end. ``on_step(t, obs, action, result)`` sees every step,
    with ``action`` the normalized action that was executed.

    :returns: ``(success, steps)``
    """
    obs = env.reset(instance)
    history = collections.deque([obs], maxlen=agent.config.history)
    memory = {}
    result = None
    while result is None or not result.done:
        window = np.array(history)
        proposal = agent.act(window, rng, deterministic=deterministic, memory=memory)
        action = DeviceAction.from_normalized(proposal, env.config.device)
        result = env.step(action)
        if on_step is not None:
            on_step(env.step_index - 1, obs, action.normalized(), result)
        obs = result.observation
        history.append(obs)
    return result.terminated, env.step_index


def episode_plan(tasks: typing.Sequence[TaskId], trees: Trees, episodes: int):
    """
    Round-robin assignment of tasks to episodes; the tree advances once every task had
    an episode on it.
    """
    return [
        (i, tasks[i % len(tasks)], trees[(i // len(tasks)) % len(trees)])
        for i in range(episodes)
    ]


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, 5, episode])


def _evaluate_one(agent, item, seed, env_config):
    i, task, (tree_id, tree) = item
    rng = episode_rng(seed, i)
    env = NavigationEnv(tree, env_config)
    instance = sample_task(task, tree, rng, tree_id=tree_id, config=env_config)
    success, steps = run_episode(agent, env, instance, rng)
    remaining = env.pathlength
    return EpisodeRecord(
        i,
        str(task),
        tree_id,
        seed,
        bool(success),
        int(steps),
        steps * env_config.device.dt if success else float("nan"),
        float(instance.initial_pathlength),
        float(remaining),
        path_ratio(success, remaining, instance.initial_pathlength),
    )


def evaluate(
    agent: Agent,
    tasks: typing.Sequence[TaskId],
    trees: Trees,
    episodes: int,
    *,
    seed: int = 0,
    env_config: EnvConfig = None,
    workers: int = 1,
) -> EvalMetrics:
    """
    Run ``episodes`` deterministic episodes. Episodes are split over the MPI ranks and,
    within a rank, over ``workers`` threads; the records come back in episode order.
    """
    env_config = env_config or EnvConfig()
    plan = episode_plan(tasks, trees, episodes)
    mine = _mpi.share(plan)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        records = list(
            pool.map(lambda item: _evaluate_one(agent, item, seed, env_config), mine)
        )
    return EvalMetrics(sorted(_mpi.gather_all(records), key=lambda r: r.episode))


def collect(
    agent: Agent,
    task: TaskId,
    episodes: int,
    path,
    *,
    trees: Trees,
    seed: int = 0,
    env_config: EnvConfig = None,
) -> Path:
    """
    Record ``episodes`` deterministic episodes of one task as a trajectory log.
    """
    env_config = env_config or EnvConfig()
    path = Path(path)
    with TrajectoryWriter(path) as writer:
        for i, task_, (tree_id, tree) in episode_plan([task], trees, episodes):
            rng = episode_rng(seed, i)
            env = NavigationEnv(tree, env_config)
            instance = sample_task(task_, tree, rng, tree_id=tree_id, config=env_config)

            def record(t, obs, action, result, episode=i, instance=instance):
                writer.write(episode, instance, t, obs, action, result)

            run_episode(agent, env, instance, rng, on_step=record)
    return path
