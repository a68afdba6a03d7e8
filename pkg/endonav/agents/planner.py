"""
Cross-entropy planning over action sequences in a learned latent space.
"""

import typing
from dataclasses import dataclass

import numpy as np

from ..exceptions import AgentError


class LatentModel(typing.Protocol):
    """
    What the planner needs from a world model. Latents are row vectors; every method
    works on a batch of them.
    """

    action_size: int

    def dynamics(self, z, a) -> np.ndarray: ...

    def reward(self, z, a) -> np.ndarray: ...

    def terminal_value(self, z, rng: np.random.Generator) -> np.ndarray: ...

    def prior_sample(self, z, rng: np.random.Generator) -> np.ndarray: ...


@dataclass
class PlannerConfig:
    horizon: int = 3
    #: Gaussian candidate sequences per iteration.
    samples: int = 64
    #: Policy-prior rollouts scored alongside the Gaussian candidates.
    prior_samples: int = 24
    elites: int = 8
    iterations: int = 4
    init_std: float = 0.5
    min_std: float = 0.01
    max_std: float = 2.0
    gamma: float = 0.99
    #: Sharpness of the score weighting of the elites.
    temperature: float = 0.5

    def validate(self):
        if self.horizon < 1:
            raise AgentError(f"Planning horizon must be at least 1, got {self.horizon}.")
        if not 0 < self.elites <= self.samples:
            raise AgentError(
                f"Need 0 < elites ({self.elites}) <= samples ({self.samples})."
            )
        if self.prior_samples < 0:
            raise AgentError(f"Prior samples must be >= 0, got {self.prior_samples}.")
        if self.iterations < 1:
            raise AgentError("The planner needs at least one iteration.")
        return self


@dataclass
class RolloutResult:
    latents: np.ndarray
    rewards: np.ndarray
    terminal_value: float
    ret: float


@dataclass
class Plan:
    action: np.ndarray
    mean: np.ndarray
    std: np.ndarray


def rollout_returns(model: LatentModel, z, actions, gamma: float, rng) -> np.ndarray:
    """
    Discounted model return of each action sequence in ``actions`` (``(n, H, A)``)
    from the latent ``z``, bootstrapped with the terminal value.
    """
    actions = np.asarray(actions, dtype=float)
    n, horizon = actions.shape[:2]
    z = np.broadcast_to(np.asarray(z, dtype=float), (n, np.shape(z)[-1]))
    ret = np.zeros(n)
    discount = 1.0
    for t in range(horizon):
        ret = ret + discount * model.reward(z, actions[:, t])
        z = model.dynamics(z, actions[:, t])
        discount *= gamma
    return ret + discount * model.terminal_value(z, rng)


def wm_rollout(model: LatentModel, z, actions, gamma: float, rng) -> RolloutResult:
    """
    Roll one action sequence ``(H, A)`` through the model.
    """
    actions = np.asarray(actions, dtype=float)
    latents = [np.asarray(z, dtype=float)[None, :]]
    rewards = []
    for a in actions:
        rewards.append(float(model.reward(latents[-1], a[None, :])[0]))
        latents.append(model.dynamics(latents[-1], a[None, :]))
    value = float(model.terminal_value(latents[-1], rng)[0])
    ret = sum(gamma**t * r for t, r in enumerate(rewards)) + gamma ** len(rewards) * value
    return RolloutResult(np.concatenate(latents), np.array(rewards), value, float(ret))


def _prior_rollouts(model, z, count, horizon, rng):
    z = np.repeat(np.asarray(z, dtype=float)[None, :], count, axis=0)
    actions = []
    for _ in range(horizon):
        a = model.prior_sample(z, rng)
        actions.append(a)
        z = model.dynamics(z, a)
    return np.stack(actions, axis=1)


def _refit(candidates, scores, config, mean, std):
    """
    Score-weighted mean and std of the elites; elites with non-finite scores get no
    weight and the distribution is kept when none is finite.
    """
    order = np.argsort(-scores, kind="stable")[: config.elites]
    elites, elite_scores = candidates[order], scores[order]
    finite = np.isfinite(elite_scores)
    if not finite.any():
        return mean, std
    top = elite_scores[finite].max()
    weights = np.where(finite, np.exp(config.temperature * (elite_scores - top)), 0.0)
    weights = weights[:, None, None] / weights.sum()
    mean = np.sum(weights * elites, axis=0)
    spread = np.sqrt(np.sum(weights * (elites - mean) ** 2, axis=0))
    return mean, np.clip(spread, config.min_std, config.max_std)


def cem_plan(
    model: LatentModel,
    config: PlannerConfig,
    z,
    rng: np.random.Generator,
    *,
    warm_start: np.ndarray = None,
) -> Plan:
    """
    Refit a diagonal Gaussian over action sequences to the score-weighted elites a
    few times, then return the first action of its mean. ``warm_start`` is the previous
    plan's mean, reused shifted by one step.
    """
    config.validate()
    horizon, size = config.horizon, model.action_size
    mean = np.zeros((horizon, size))
    if warm_start is not None and np.shape(warm_start) == mean.shape:
        mean[:-1] = warm_start[1:]
    std = np.full((horizon, size), float(config.init_std))
    prior = np.zeros((0, horizon, size))
    if config.prior_samples:
        prior = _prior_rollouts(model, z, config.prior_samples, horizon, rng)
    for _ in range(config.iterations):
        noise = rng.standard_normal((config.samples, horizon, size))
        samples = np.clip(mean + std * noise, -1.0, 1.0)
        candidates = np.concatenate((prior, samples))
        scores = rollout_returns(model, z, candidates, config.gamma, rng)
        scores = np.where(np.isfinite(scores), scores, -np.inf)
        mean, std = _refit(candidates, scores, config, mean, std)
    return Plan(mean[0].copy(), mean, std)
