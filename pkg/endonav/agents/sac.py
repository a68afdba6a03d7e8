"""
Soft actor-critic with a recurrent observation embedder.

The LSTM embedder is trained through the critic loss. The actor sees the embedding as
a constant, and critic targets are computed with the target embedder, so each loss is
an explicit function of the parameters it updates.
"""

import typing
from dataclasses import dataclass

import numpy as np

from ..env import ACTION_SIZE, OBS_SIZE
from ..nn import (
    AdamState,
    LstmParams,
    MlpParams,
    adam_update,
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


@dataclass
class SacConfig:
    history: int = 8
    embed_size: int = 128
    hidden: typing.Tuple[int, ...] = (128, 128)
    activation: str = "relu"
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    #: Transitions per update, drawn as ``batch_size // history`` sequences.
    batch_size: int = 128
    target_entropy: float = -float(ACTION_SIZE)
    init_alpha: float = 0.1
    log_std_bounds: typing.Tuple[float, float] = (-5.0, 2.0)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.log_std_bounds = tuple(self.log_std_bounds)


def _mlp(sizes, activation, rng):
    return MlpParams.init(sizes, [activation] * (len(sizes) - 2) + ["identity"], rng)


class SacAgent(Agent):
    kind = "sac"
    config_class = SacConfig

    def __init__(self, config: SacConfig = None, seed: int = 0):
        super().__init__(config, seed)
        c = self.config
        rng = np.random.default_rng([seed, 11])
        critic = (c.embed_size + ACTION_SIZE, *c.hidden, 1)
        self.lstm = LstmParams.init(OBS_SIZE, c.embed_size, rng)
        self.q1 = _mlp(critic, c.activation, rng)
        self.q2 = _mlp(critic, c.activation, rng)
        self.policy = _mlp((c.embed_size, *c.hidden, 2 * ACTION_SIZE), c.activation, rng)
        self.log_alpha = np.array([np.log(c.init_alpha)])
        self.target_lstm = self.lstm.copy()
        self.target_q1 = self.q1.copy()
        self.target_q2 = self.q2.copy()
        self.critic_optim = AdamState(lr=c.lr)
        self.actor_optim = AdamState(lr=c.lr)
        self.alpha_optim = AdamState(lr=c.lr)

    def modules(self):
        return {
            "lstm": self.lstm,
            "q1": self.q1,
            "q2": self.q2,
            "policy": self.policy,
            "log_alpha": self.log_alpha,
            "target_lstm": self.target_lstm,
            "target_q1": self.target_q1,
            "target_q2": self.target_q2,
        }

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def sequence_length(self):
        return self.config.history

    @property
    def batch_sequences(self):
        return max(1, self.config.batch_size // self.config.history)

    def embed(self, history) -> np.ndarray:
        history = np.asarray(history, dtype=float)[-self.config.history :]
        hs, _, _ = lstm_unroll(self.lstm, history)
        return hs[-1]

    def policy_head(self, embedding):
        out, cache = mlp_forward(self.policy, embedding)
        mean, log_std, mask = split_head(out, self.config.log_std_bounds)
        return mean, log_std, mask, cache

    def act(self, history, rng, *, deterministic=False, memory=None):
        return sac_act(self, history, deterministic, rng)

    def update(self, batch, rng):
        return sac_update(self, batch, rng)


def sac_act(agent: SacAgent, history, deterministic: bool, rng) -> np.ndarray:
    """
    Embed the last ``history`` observations from a zero state and squash the policy
    mean, or a sample around it.
    """
    mean, log_std, _, _ = agent.policy_head(agent.embed(history))
    if deterministic:
        return np.tanh(mean)
    return sample_action(mean, log_std, rng)[1]


def _critic_pair(q1, q2, embedding, action):
    x = np.concatenate((embedding, action), axis=-1)
    v1, c1 = mlp_forward(q1, x)
    v2, c2 = mlp_forward(q2, x)
    return v1[..., 0], v2[..., 0], c1, c2


def critic_target(agent: SacAgent, batch: SequenceBatch, rng) -> np.ndarray:
    """
    Soft Bellman targets ``(length, batch)`` from the target embedder and critics.
    """
    obs = time_major(batch.obs)
    seq = np.concatenate((obs, time_major(batch.next_obs)[-1:]), axis=0)
    hs, _, _ = lstm_unroll(agent.target_lstm, seq)
    next_embedding = hs[1:]
    mean, log_std, _, _ = agent.policy_head(next_embedding)
    _, next_action, next_logp, _ = sample_action(mean, log_std, rng)
    target_q = agent.target_q1, agent.target_q2
    v1, v2, _, _ = _critic_pair(*target_q, next_embedding, next_action)
    soft = np.minimum(v1, v2) - agent.alpha * next_logp
    done = time_major(batch.terminated).astype(float)
    return time_major(batch.reward) + agent.config.gamma * (1 - done) * soft


def critic_loss(agent: SacAgent, batch: SequenceBatch, target):
    """
    Summed mean squared errors of both critics at every sequence position, with the
    gradient for the embedder and critics.

    :returns: ``(loss, grads, embedding)``
    """
    hs, _, caches = lstm_unroll(agent.lstm, time_major(batch.obs))
    action = time_major(batch.action)
    v1, v2, c1, c2 = _critic_pair(agent.q1, agent.q2, hs, action)
    n = target.size
    loss = np.mean((v1 - target) ** 2) + np.mean((v2 - target) ** 2)
    dx1, g1 = mlp_backward(agent.q1, c1, (2 * (v1 - target) / n)[..., None])
    dx2, g2 = mlp_backward(agent.q2, c2, (2 * (v2 - target) / n)[..., None])
    e = agent.config.embed_size
    _, glstm = lstm_unroll_backward(agent.lstm, caches, dx1[..., :e] + dx2[..., :e])
    grads = prefixed(glstm, "lstm.")
    grads.update(prefixed(g1, "q1."))
    grads.update(prefixed(g2, "q2."))
    return float(loss), grads, hs


def actor_loss(agent: SacAgent, embedding, eps):
    """
    ``mean(alpha * log pi - min(Q1, Q2))`` with the reparameterization noise ``eps``
    held fixed.

    :returns: ``(loss, policy grads, log probabilities)``
    """
    mean, log_std, mask, cache = agent.policy_head(embedding)
    _, a, logp = squashed_sample(mean, log_std, eps)
    v1, v2, c1, c2 = _critic_pair(agent.q1, agent.q2, embedding, a)
    n = logp.size
    alpha = agent.alpha
    loss = np.mean(alpha * logp - np.minimum(v1, v2))
    pick1 = (v1 <= v2).astype(float)
    dx1, _ = mlp_backward(agent.q1, c1, (pick1 / n)[..., None])
    dx2, _ = mlp_backward(agent.q2, c2, ((1 - pick1) / n)[..., None])
    dq_da = dx1[..., -ACTION_SIZE:] + dx2[..., -ACTION_SIZE:]
    dlogp = np.full(logp.shape, alpha / n)
    dmean, dlog_std = squashed_backward(a, log_std, eps, -dq_da, dlogp)
    dout = np.concatenate((dmean, dlog_std * mask), axis=-1)
    _, grads = mlp_backward(agent.policy, cache, dout)
    return float(loss), prefixed(grads, "policy."), logp


def sac_update(agent: SacAgent, batch: SequenceBatch, rng) -> typing.Dict[str, float]:
    """
    One gradient step on the critics and embedder, the actor and the temperature,
    followed by the Polyak update of the target networks.
    """
    c = agent.config
    target = critic_target(agent, batch, rng)
    q_loss, q_grads, embedding = critic_loss(agent, batch, target)
    eps = rng.standard_normal(embedding.shape[:-1] + (ACTION_SIZE,))
    pi_loss, pi_grads, logp = actor_loss(agent, embedding, eps)
    alpha_grad = -np.mean(logp + c.target_entropy)
    alpha_loss = float(-agent.log_alpha[0] * np.mean(logp + c.target_entropy))
    check_finite({"critic": q_loss, "actor": pi_loss, "alpha": alpha_loss})
    params = agent.parameters()
    adam_update(agent.critic_optim, params, q_grads)
    adam_update(agent.actor_optim, params, pi_grads)
    adam_update(agent.alpha_optim, params, {"log_alpha": np.array([alpha_grad])})
    polyak(agent.target_lstm.parameters(), agent.lstm.parameters(), c.tau)
    polyak(agent.target_q1.parameters(), agent.q1.parameters(), c.tau)
    polyak(agent.target_q2.parameters(), agent.q2.parameters(), c.tau)
    return {"critic": q_loss, "actor": pi_loss, "alpha": alpha_loss}

