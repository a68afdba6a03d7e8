"""
Navigation tasks as an episodic decision process over one vessel tree.
"""

import enum
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .device import (
    DeviceAction,
    DeviceConfig,
    GuidewireState,
    reset_device,
    step_device,
)
from .exceptions import EpisodeFinishedError, TaskError
from .geometry import VesselTree, path_length

OBS_SIZE = 16
ACTION_SIZE = 2


class TaskId(str, enum.Enum):
    A1 = "A1"
    A2L = "A2L"
    A2R = "A2R"
    A3L = "A3L"
    A3R = "A3R"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TaskWindows:
    start: str
    target: str
    #: Start and target arc windows as fractions of the segment length.
    start_range: typing.Tuple[float, float] = (0.0, 1.0)
    target_range: typing.Tuple[float, float] = (0.0, 1.0)


TASKS = {
    TaskId.A1: TaskWindows("common_iliac", "descending_aorta", target_range=(0.75, 1.0)),
    TaskId.A2L: TaskWindows("descending_aorta", "cca_left", start_range=(0.75, 1.0)),
    TaskId.A2R: TaskWindows("descending_aorta", "cca_right", start_range=(0.75, 1.0)),
    TaskId.A3L: TaskWindows("cca_left", "ica_left"),
    TaskId.A3R: TaskWindows("cca_right", "ica_right"),
}


def parse_task(name) -> TaskId:
    try:
        return TaskId(str(name).upper())
    except ValueError:
        raise TaskError(
            f"Unknown task '{name}', choose from {', '.join(t.value for t in TaskId)}."
        ) from None


def parse_tasks(names) -> typing.List[TaskId]:
    """
    Parse a comma separated string or list of task names; ``all`` selects every task.
    """
    if isinstance(names, str):
        names = [n for n in names.split(",") if n.strip()]
    names = [n.strip() for n in names]
    if not names:
        raise TaskError("Empty task set.")
    if len(names) == 1 and names[0].lower() == "all":
        return list(TaskId)
    return [parse_task(n) for n in names]


@dataclass
class EnvConfig:
    max_steps: int = 200
    #: Target reached within this multiple of the vessel radius at the target.
    target_threshold: float = 2.0
    step_penalty: float = 0.00015
    pathlength_weight: float = 0.001
    success_reward: float = 1.0
    device: DeviceConfig = field(default_factory=DeviceConfig)

    def __post_init__(self):
        if isinstance(self.device, dict):
            self.device = DeviceConfig(**self.device)


@dataclass(frozen=True, eq=False)
class TaskInstance:
    task: TaskId
    start: np.ndarray
    target: np.ndarray
    initial_pathlength: float
    tree_id: str
    target_radius: float

    def __eq__(self, other):
        if not isinstance(other, TaskInstance):
            return NotImplemented
        return (
            self.task == other.task
            and np.array_equal(self.start, other.start)
            and np.array_equal(self.target, other.target)
            and self.initial_pathlength == other.initial_pathlength
            and self.tree_id == other.tree_id
            and self.target_radius == other.target_radius
        )


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    reached: bool
    terminated: bool
    truncated: bool
    info: typing.Dict[str, float]

    @property
    def done(self):
        return self.terminated or self.truncated


def _uniform_arc(rng, branch, window):
    return rng.uniform(window[0] * branch.length, window[1] * branch.length)


#: Redraws allowed when a start already lies within the success radius of its target.
MAX_DRAWS = 100


def sample_task(
    task: TaskId,
    tree: VesselTree,
    rng: np.random.Generator,
    *,
    tree_id: str = "tree",
    config: EnvConfig = None,
) -> TaskInstance:
    """
    Draw a start and a target uniformly over the arc length of the task's segment
    windows. Pairs whose start already reaches the target are drawn again.
    """
    config = config or EnvConfig()
    task = parse_task(task)
    windows = TASKS[task]
    start_branch = tree.by_name(windows.start)
    target_branch = tree.by_name(windows.target)
    for _ in range(MAX_DRAWS):
        start_arc = _uniform_arc(rng, start_branch, windows.start_range)
        start = start_branch.locate(start_arc)[0]
        target_arc = _uniform_arc(rng, target_branch, windows.target_range)
        target, _, radius = target_branch.locate(target_arc)
        if not is_target_reached(start, target, radius, config.target_threshold):
            break
    else:
        raise TaskError(
            f"No {task} start outside the success radius of its target"
            f" after {MAX_DRAWS} draws."
        )
    return TaskInstance(
        task,
        start,
        target,
        path_length(tree, start, target),
        tree_id,
        radius,
    )


def is_target_reached(tip, target, target_radius: float, factor: float = 2.0) -> bool:
    tip = np.asarray(tip, dtype=float)
    target = np.asarray(target, dtype=float)
    return bool(np.linalg.norm(tip - target) <= factor * target_radius)


def compute_reward(
    delta_pathlength: float,
    reached: bool,
    *,
    step_penalty: float = 0.00015,
    pathlength_weight: float = 0.001,
    success_reward: float = 1.0,
) -> float:
    reward = -step_penalty - pathlength_weight * delta_pathlength
    if reached:
        reward += success_reward
    return reward


def normalize_points(tree: VesselTree, points) -> np.ndarray:
    lo, hi = tree.bounding_box
    return 2 * (np.asarray(points, dtype=float) - lo) / (hi - lo) - 1


class NavigationEnv:
    """
    One device navigating one tree. Reusable: every :meth:`reset` starts a new episode.
    """

    def __init__(self, tree: VesselTree, config: EnvConfig = None):
        self.tree = tree
        self.config = config or EnvConfig()
        self.instance: typing.Optional[TaskInstance] = None
        self.state: typing.Optional[GuidewireState] = None
        self.step_index = 0
        self.pathlength = 0.0
        self._done = True
        self._current = None
        self._previous_action = np.zeros(ACTION_SIZE)

    @property
    def done(self):
        return self._done

    def _observation(self, previous):
        current = normalize_points(self.tree, self.state.tip_points).ravel()
        target = normalize_points(self.tree, self.instance.target)
        self._current = current
        return np.concatenate((current, previous, target, self._previous_action))

    def reset(self, instance: TaskInstance) -> np.ndarray:
        self.instance = instance
        self.state = reset_device(self.tree, instance.start, self.config.device)
        self.step_index = 0
        self.pathlength = path_length(self.tree, self.state.tip, instance.target)
        self._done = False
        self._previous_action = np.zeros(ACTION_SIZE)
        current = normalize_points(self.tree, self.state.tip_points).ravel()
        return self._observation(current)

    def step(self, action: DeviceAction) -> StepResult:
        if self._done:
            raise EpisodeFinishedError("The episode has finished; call reset first.")
        config = self.config
        device = config.device
        self.state = step_device(self.state, action, device.dt, self.tree, device)
        self.step_index += 1
        previous = self.pathlength
        self.pathlength = path_length(self.tree, self.state.tip, self.instance.target)
        delta = self.pathlength - previous
        reached = is_target_reached(
            self.state.tip,
            self.instance.target,
            self.instance.target_radius,
            config.target_threshold,
        )
        reward = compute_reward(
            delta,
            reached,
            step_penalty=config.step_penalty,
            pathlength_weight=config.pathlength_weight,
            success_reward=config.success_reward,
        )
        terminated = reached
        truncated = not terminated and self.step_index >= config.max_steps
        self._done = terminated or truncated
        self._previous_action = action.normalized()
        observation = self._observation(self._current)
        return StepResult(
            observation,
            float(reward),
            reached,
            terminated,
            truncated,
            {
                "pathlength": self.pathlength,
                "delta_pathlength": delta,
                "step_index": self.step_index,
            },
        )


class TrajectoryWriter:
    """
    Newline delimited JSON log with one record per environment step.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._file = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "w")
        return self

    def __exit__(self, *exc):
        self._file.close()
        self._file = None

    def write(
        self,
        episode: int,
        instance: TaskInstance,
        t: int,
        obs,
        action,
        result: StepResult,
    ):
        record = {
            "episode": int(episode),
            "task": str(instance.task),
            "tree": instance.tree_id,
            "t": int(t),
            "obs": [float(x) for x in obs],
            "action": [float(x) for x in action],
            "reward": result.reward,
            "pathlength": float(result.info["pathlength"]),
            "reached": result.reached,
            "terminated": result.terminated,
            "truncated": result.truncated,
            "next_obs": [float(x) for x in result.observation],
        }
        self._file.write(json.dumps(record, sort_keys=True))
        self._file.write("\n")
