"""
Latent world model planned with the cross-entropy method.

An LSTM over the observation history feeds an encoder MLP that yields the latent ``z``.
Latent dynamics, a reward head and an ensemble of value heads are trained jointly on
multi-step rollouts from ``z``; a squashed Gaussian policy prior proposes part of the
planner's candidates and the bootstrap action of the value targets.

Reward and value heads regress scalars with squared errors.
"""

import typing
from dataclasses import dataclass, field

import numpy as np

from ..env import ACTION_SIZE, OBS_SIZE
from ..exceptions import AgentError, ShapeMismatchError
from ..nn import (
    AdamState,
    LstmParams,
    MlpParams,
    adam_update,
    add_grads,
    lstm_unroll,
    lstm_unroll_backward,
    mlp_backward,
    mlp_forward,
    polyak,
    prefixed,
)
from ._agent import Agent, check_finite, time_major
from ._gaussian import sample_action, split_head, squashed_backward, squashed_sample
from .buffer import SequenceBatch
from .planner import PlannerConfig, cem_plan


@dataclass
class WorldModelConfig:
    history: int = 8
    embed_size: int = 64
    latent_size: int = 32
    hidden: int = 128
    activation: str = "relu"
    ensemble: int = 5
    gamma: float = 0.99
    #: Per-step weight decay of the rollout losses.
    rho: float = 0.5
    tau: float = 0.01
    lr: float = 3e-4
    batch_sequences: int = 16
    consistency_coef: float = 20.0
    reward_coef: float = 1.0
    value_coef: float = 1.0
    entropy_coef: float = 1e-4
    log_std_bounds: typing.Tuple[float, float] = (-10.0, 2.0)
    #: Perturb planned actions by the final planner std while training.
    explore: bool = True
    #: Lower bound on that perturbation once the planner has converged.
    explore_min_std: float = 0.05
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        self.log_std_bounds = tuple(self.log_std_bounds)
        if isinstance(self.planner, dict):
            self.planner = PlannerConfig(**self.planner)
        if self.ensemble < 2:
            raise AgentError(f"The value ensemble needs 2+ heads, not {self.ensemble}.")
        self.planner.gamma = self.gamma

    @property
    def horizon(self):
        return self.planner.horizon


@dataclass
class ModelTargets:
    """
    Stop-gradient targets of one batch: encoded next latents ``(H, B, Z)`` and value
    targets ``(H, B)``.
    """

    latents: np.ndarray
    values: np.ndarray


def _head(sizes, activation, output, rng):
    return MlpParams.init(sizes, [activation] * (len(sizes) - 2) + [output], rng)


class WorldModelAgent(Agent):
    kind = "tdmpc"
    config_class = WorldModelConfig
    action_size = ACTION_SIZE

    def __init__(self, config: WorldModelConfig = None, seed: int = 0):
        super().__init__(config, seed)
        c = self.config
        rng = np.random.default_rng([seed, 13])
        za = c.latent_size + ACTION_SIZE
        self.lstm = LstmParams.init(OBS_SIZE, c.embed_size, rng)
        encoder = (c.embed_size, c.hidden, c.latent_size)
        self.enc = _head(encoder, c.activation, "tanh", rng)
        self.dyn = _head((za, c.hidden, c.latent_size), c.activation, "tanh", rng)
        self.rew = _head((za, c.hidden, 1), c.activation, "identity", rng)
        critic = (za, c.hidden, 1)
        self.q = [_head(critic, c.activation, "identity", rng) for _ in range(c.ensemble)]
        self.prior = _head(
            (c.latent_size, c.hidden, 2 * ACTION_SIZE), c.activation, "identity", rng
        )
        self.target_q = [q.copy() for q in self.q]
        self.model_optim = AdamState(lr=c.lr)
        self.prior_optim = AdamState(lr=c.lr)

    def modules(self):
        modules = {"lstm": self.lstm, "enc": self.enc, "dyn": self.dyn, "rew": self.rew}
        modules.update({f"q{k}": q for k, q in enumerate(self.q)})
        modules["prior"] = self.prior
        modules.update({f"target_q{k}": q for k, q in enumerate(self.target_q)})
        return modules

    @property
    def sequence_length(self):
        return self.config.history + self.config.horizon - 1

    @property
    def batch_sequences(self):
        return self.config.batch_sequences

    def prior_head(self, z):
        out, cache = mlp_forward(self.prior, z)
        mean, log_std, mask = split_head(out, self.config.log_std_bounds)
        return mean, log_std, mask, cache

    # Latent model interface used by the planner.

    def dynamics(self, z, a):
        return mlp_forward(self.dyn, np.concatenate((z, a), axis=-1))[0]

    def reward(self, z, a):
        return mlp_forward(self.rew, np.concatenate((z, a), axis=-1))[0][..., 0]

    def terminal_value(self, z, rng):
        mean, _, _, _ = self.prior_head(z)
        return _pair_min(self.q, z, np.tanh(mean), rng)

    def prior_sample(self, z, rng):
        mean, log_std, _, _ = self.prior_head(z)
        return sample_action(mean, log_std, rng)[1]

    def act(self, history, rng, *, deterministic=False, memory=None):
        z = wm_encode(self, history)
        warm = memory.get("plan") if memory is not None else None
        plan = cem_plan(self, self.config.planner, z, rng, warm_start=warm)
        if memory is not None:
            memory["plan"] = plan.mean
        if deterministic or not self.config.explore:
            return plan.action
        std = np.maximum(plan.std[0], self.config.explore_min_std)
        noise = std * rng.standard_normal(ACTION_SIZE)
        return np.clip(plan.action + noise, -1.0, 1.0)

    def update(self, batch, rng):
        return wm_update(self, batch, rng)


def _pair_min(heads, z, a, rng):
    x = np.concatenate((z, a), axis=-1)
    i, j = rng.choice(len(heads), size=2, replace=False)
    first, second = mlp_forward(heads[i], x)[0], mlp_forward(heads[j], x)[0]
    return np.minimum(first[..., 0], second[..., 0])


def wm_encode(agent: WorldModelAgent, history) -> np.ndarray:
    """
    Latent state of the last ``history`` observations, embedded from a zero LSTM state.
    """
    history = np.asarray(history, dtype=float)[-agent.config.history :]
    hs, _, _ = lstm_unroll(agent.lstm, history)
    return mlp_forward(agent.enc, hs[-1])[0]


def _window(agent, batch):
    c = agent.config
    if batch.shape[1] != agent.sequence_length:
        raise ShapeMismatchError(
            f"World model batches hold {agent.sequence_length} steps,"
            f" got {batch.shape[1]}."
        )
    first = c.history - 1
    return slice(first, first + c.horizon)


def model_targets(agent: WorldModelAgent, batch: SequenceBatch, rng) -> ModelTargets:
    c = agent.config
    window = _window(agent, batch)
    seq = np.concatenate((time_major(batch.obs), time_major(batch.next_obs)[-1:]))
    hs, _, _ = lstm_unroll(agent.lstm, seq)
    latents = mlp_forward(agent.enc, hs[c.history :])[0]
    next_action = agent.prior_sample(latents, rng)
    bootstrap = _pair_min(agent.target_q, latents, next_action, rng)
    done = time_major(batch.terminated)[window].astype(float)
    values = time_major(batch.reward)[window] + c.gamma * (1 - done) * bootstrap
    return ModelTargets(latents, values)


def _step_weights(config):
    return np.power(float(config.rho), np.arange(config.horizon)) / config.horizon


def model_predictions(agent: WorldModelAgent, batch: SequenceBatch):
    """
    Rolled out latents ``(H, B, Z)`` and rewards ``(H, B)`` from the encoded window start.
    """
    c = agent.config
    window = _window(agent, batch)
    hs, _, _ = lstm_unroll(agent.lstm, time_major(batch.obs)[: c.history])
    z = mlp_forward(agent.enc, hs[-1])[0]
    latents, rewards = [], []
    for a in time_major(batch.action)[window]:
        rewards.append(agent.reward(z, a))
        z = agent.dynamics(z, a)
        latents.append(z)
    return np.stack(latents), np.stack(rewards)


def model_loss(agent: WorldModelAgent, batch: SequenceBatch, targets: ModelTargets):
    """
    Weighted multi-step consistency, reward and value losses of one batch against fixed
    targets, with the gradient for the embedder, encoder, dynamics, reward and value
    heads.

    Squared errors are averaged over the batch, over latent dimensions in the
    consistency term and over ensemble heads in the value term, so each term is the
    squared norm divided by its width. ``consistency_coef`` is scaled for that mean.

    :returns: ``(loss, grads, components, rollout latents)``
    """
    c = agent.config
    window = _window(agent, batch)
    hs, _, lstm_caches = lstm_unroll(agent.lstm, time_major(batch.obs)[: c.history])
    z, enc_cache = mlp_forward(agent.enc, hs[-1])
    actions = time_major(batch.action)[window]
    rewards = time_major(batch.reward)[window]
    weights = _step_weights(c)
    parts = {"consistency": 0.0, "reward": 0.0, "value": 0.0}
    latents, steps = [z], []
    for t, a in enumerate(actions):
        x = np.concatenate((latents[-1], a), axis=-1)
        z_next, dyn_cache = mlp_forward(agent.dyn, x)
        r_hat, rew_cache = mlp_forward(agent.rew, x)
        values = [mlp_forward(q, x) for q in agent.q]
        z_err = z_next - targets.latents[t]
        r_err = r_hat[..., 0] - rewards[t]
        q_errs = [v[..., 0] - targets.values[t] for v, _ in values]
        parts["consistency"] += weights[t] * float(np.mean(z_err**2))
        parts["reward"] += weights[t] * float(np.mean(r_err**2))
        parts["value"] += weights[t] * float(np.mean([np.mean(e**2) for e in q_errs]))
        q_caches = [qc for _, qc in values]
        steps.append((dyn_cache, rew_cache, q_caches, z_err, r_err, q_errs))
        latents.append(z_next)
    loss = (
        c.consistency_coef * parts["consistency"]
        + c.reward_coef * parts["reward"]
        + c.value_coef * parts["value"]
    )

    grads = {}
    dz = np.zeros_like(z)
    for t in reversed(range(len(steps))):
        dyn_cache, rew_cache, q_caches, z_err, r_err, q_errs = steps[t]
        w = weights[t]
        dz = dz + c.consistency_coef * w * 2 * z_err / z_err.size
        dx, g = mlp_backward(agent.dyn, dyn_cache, dz)
        add_grads(grads, prefixed(g, "dyn."))
        dr = c.reward_coef * w * 2 * r_err / r_err.size
        dxr, g = mlp_backward(agent.rew, rew_cache, dr[..., None])
        add_grads(grads, prefixed(g, "rew."))
        dx = dx + dxr
        for k, (q, cache, err) in enumerate(zip(agent.q, q_caches, q_errs)):
            dq = c.value_coef * w * 2 * err / (err.size * len(agent.q))
            dxq, g = mlp_backward(q, cache, dq[..., None])
            add_grads(grads, prefixed(g, f"q{k}."))
            dx = dx + dxq
        dz = dx[..., : c.latent_size]
    dh, g = mlp_backward(agent.enc, enc_cache, dz)
    add_grads(grads, prefixed(g, "enc."))
    dhs = np.zeros_like(hs)
    dhs[-1] = dh
    _, g = lstm_unroll_backward(agent.lstm, lstm_caches, dhs)
    add_grads(grads, prefixed(g, "lstm."))
    return float(loss), grads, parts, np.stack(latents[:-1])


def prior_loss(agent: WorldModelAgent, latents, eps):
    """
    Weighted ``entropy_coef * log pi - mean_k Q_k`` over detached rollout latents
    ``(H, B, Z)`` with the reparameterization noise ``eps`` held fixed.

    :returns: ``(loss, prior grads)``
    """
    c = agent.config
    mean, log_std, mask, cache = agent.prior_head(latents)
    _, a, logp = squashed_sample(mean, log_std, eps)
    x = np.concatenate((latents, a), axis=-1)
    n, k = latents.shape[1], len(agent.q)
    w = _step_weights(c)[:, None] * np.ones(logp.shape)
    q_mean = 0.0
    dq_da = np.zeros_like(a)
    for q in agent.q:
        v, q_cache = mlp_forward(q, x)
        q_mean = q_mean + v[..., 0] / k
        dx, _ = mlp_backward(q, q_cache, (-w / (n * k))[..., None])
        dq_da = dq_da + dx[..., -ACTION_SIZE:]
    loss = np.sum(w * (c.entropy_coef * logp - q_mean)) / n
    dmean, dlog_std = squashed_backward(a, log_std, eps, dq_da, c.entropy_coef * w / n)
    dout = np.concatenate((dmean, dlog_std * mask), axis=-1)
    _, grads = mlp_backward(agent.prior, cache, dout)
    return float(loss), prefixed(grads, "prior.")


def wm_update(
    agent: WorldModelAgent, batch: SequenceBatch, rng
) -> typing.Dict[str, float]:
    """
    One gradient step on the model, then on the policy prior, followed by the Polyak
    update of the target value heads.
    """
    c = agent.config
    targets = model_targets(agent, batch, rng)
    loss, grads, parts, latents = model_loss(agent, batch, targets)
    check_finite({**parts, "total": loss})
    params = agent.parameters()
    adam_update(agent.model_optim, params, grads)
    eps = rng.standard_normal(latents.shape[:-1] + (ACTION_SIZE,))
    pi_loss, pi_grads = prior_loss(agent, latents, eps)
    check_finite({"prior": pi_loss})
    adam_update(agent.prior_optim, params, pi_grads)
    for target, q in zip(agent.target_q, agent.q):
        polyak(target.parameters(), q.parameters(), c.tau)
    return {**parts, "prior": pi_loss, "total": loss}
