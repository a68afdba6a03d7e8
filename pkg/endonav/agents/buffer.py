"""
FIFO replay storage sampled as fixed-length sequences within single episodes.
"""

import json
import threading
import typing
from dataclasses import dataclass

import numpy as np

from ..env import ACTION_SIZE, OBS_SIZE
from ..exceptions import EmptyBufferError, PrefillError


@dataclass
class BufferConfig:
    #: Desk-scale default; the full protocol keeps ten million transitions.
    capacity: int = 100_000


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    terminated: bool
    truncated: bool
    episode: int
    step: int


@dataclass
class SequenceBatch:
    """
    Arrays shaped ``(batch, length, ...)``.
    """

    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray

    @property
    def shape(self):
        return self.reward.shape

    def __len__(self):
        return self.reward.shape[0]


class ReplayBuffer:
    """
    Ring storage of transitions. Besides the transition itself every slot records how
    many consecutive transitions of its episode end there, which makes the valid
    sequence ends of any length a vectorized lookup.
    """

    def __init__(
        self, capacity: int, obs_size: int = OBS_SIZE, action_size: int = ACTION_SIZE
    ):
        if capacity < 1:
            raise ValueError("Replay capacity must be positive.")
        self.capacity = int(capacity)
        self._obs = np.zeros((capacity, obs_size))
        self._action = np.zeros((capacity, action_size))
        self._reward = np.zeros(capacity)
        self._next_obs = np.zeros((capacity, obs_size))
        self._terminated = np.zeros(capacity, dtype=bool)
        self._truncated = np.zeros(capacity, dtype=bool)
        self._episode = np.full(capacity, -1, dtype=np.int64)
        self._step = np.zeros(capacity, dtype=np.int64)
        self._run = np.zeros(capacity, dtype=np.int64)
        self._count = 0
        self._next_episode = 0
        self._lock = threading.Lock()

    def __len__(self):
        return min(self._count, self.capacity)

    @property
    def oldest(self):
        """
        Logical index of the oldest stored transition.
        """
        return self._count - len(self)

    def new_episode_id(self) -> int:
        with self._lock:
            id = self._next_episode
            self._next_episode += 1
            return id

    def push(self, t: Transition):
        if not np.isfinite(t.reward):
            raise ValueError(f"Non-finite reward {t.reward} in transition.")
        if t.terminated and t.truncated:
            raise ValueError("A transition cannot be both terminated and truncated.")
        with self._lock:
            slot = self._count % self.capacity
            run = 1
            if self._count:
                prev = (self._count - 1) % self.capacity
                if (
                    self._episode[prev] == t.episode
                    and self._step[prev] + 1 == t.step
                    and not (self._terminated[prev] or self._truncated[prev])
                ):
                    run = self._run[prev] + 1
            self._obs[slot] = t.obs
            self._action[slot] = t.action
            self._reward[slot] = t.reward
            self._next_obs[slot] = t.next_obs
            self._terminated[slot] = t.terminated
            self._truncated[slot] = t.truncated
            self._episode[slot] = t.episode
            self._step[slot] = t.step
            self._run[slot] = run
            self._next_episode = max(self._next_episode, int(t.episode) + 1)
            self._count += 1

    def get(self, index: int) -> Transition:
        """
        Transition at logical position ``index`` counted from the oldest one.
        """
        with self._lock:
            if not 0 <= index < len(self):
                raise IndexError(index)
            slot = (self.oldest + index) % self.capacity
            return Transition(
                self._obs[slot].copy(),
                self._action[slot].copy(),
                float(self._reward[slot]),
                self._next_obs[slot].copy(),
                bool(self._terminated[slot]),
                bool(self._truncated[slot]),
                int(self._episode[slot]),
                int(self._step[slot]),
            )

    def _valid_ends(self, length):
        logical = np.arange(self.oldest, self._count)
        slots = logical % self.capacity
        ok = (self._run[slots] >= length) & (logical - length + 1 >= self.oldest)
        return logical[ok]

    def valid_starts(self, length: int) -> np.ndarray:
        with self._lock:
            return self._valid_ends(length) - length + 1

    def sample(self, batch: int, length: int, rng: np.random.Generator) -> SequenceBatch:
        """
        Sample ``batch`` sequences uniformly over all valid start positions.
        """
        with self._lock:
            if not self._count:
                raise EmptyBufferError("Cannot sample from an empty replay buffer.")
            ends = self._valid_ends(length)
            if not len(ends):
                raise EmptyBufferError(
                    f"No buffered episode has {length} consecutive transitions."
                )
            chosen = ends[rng.integers(0, len(ends), size=batch)]
            slots = (chosen[:, None] + np.arange(-length + 1, 1)[None, :]) % self.capacity
            return SequenceBatch(
                self._obs[slots],
                self._action[slots],
                self._reward[slots],
                self._next_obs[slots],
                self._terminated[slots],
                self._truncated[slots],
            )

    def prefill(self, paths: typing.Iterable) -> int:
        """
        Load trajectory logs, giving every ``(file, episode)`` pair a fresh episode id.

        :returns: The number of transitions loaded.
        """
        count = 0
        for path in paths:
            ids = {}
            with open(path, "r") as f:
                for number, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    t = _parse_record(line, path, number)
                    if t.episode not in ids:
                        ids[t.episode] = self.new_episode_id()
                    t.episode = ids[t.episode]
                    self.push(t)
                    count += 1
        return count


def _parse_record(line, path, number) -> Transition:
    try:
        record = json.loads(line)
        t = Transition(
            np.array(record["obs"], dtype=float),
            np.array(record["action"], dtype=float),
            float(record["reward"]),
            np.array(record["next_obs"], dtype=float),
            bool(record["terminated"]),
            bool(record["truncated"]),
            int(record["episode"]),
            int(record["t"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise PrefillError(
            f"Malformed trajectory record at {path}:{number}: {e}", str(path), number
        ) from None
    if t.obs.shape != (OBS_SIZE,) or t.next_obs.shape != (OBS_SIZE,):
        raise PrefillError(
            f"Observation of the wrong size at {path}:{number}.", str(path), number
        )
    if t.action.shape != (ACTION_SIZE,) or not np.isfinite(t.reward):
        raise PrefillError(
            f"Invalid action or reward at {path}:{number}.", str(path), number
        )
    if t.terminated and t.truncated:
        raise PrefillError(
            f"Record at {path}:{number} is terminated and truncated.", str(path), number
        )
    return t
