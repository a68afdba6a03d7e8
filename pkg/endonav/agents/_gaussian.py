"""
Tanh-squashed diagonal Gaussian policies, sampled by reparameterization.
"""

import numpy as np

LOG_2PI = float(np.log(2 * np.pi))
#: Keeps the squashing correction finite for saturated actions.
SQUASH_EPS = 1e-6


def split_head(out, bounds):
    """
    Split a head output into the mean and the clipped log standard deviation.

    :returns: ``(mean, log_std, mask)`` where ``mask`` is zero where clipping is active.
    """
    n = out.shape[-1] // 2
    mean, raw = out[..., :n], out[..., n:]
    log_std = np.clip(raw, *bounds)
    mask = ((raw > bounds[0]) & (raw < bounds[1])).astype(out.dtype)
    return mean, log_std, mask


def squashed_sample(mean, log_std, eps):
    """
    :returns: ``(u, a, logp)`` with pre-squash sample ``u``, action ``a = tanh(u)`` and
      the log density of ``a``.
    """
    u = mean + np.exp(log_std) * eps
    a = np.tanh(u)
    logp = np.sum(
        -0.5 * eps**2 - log_std - 0.5 * LOG_2PI - np.log(1 - a**2 + SQUASH_EPS), axis=-1
    )
    return u, a, logp


def sample_action(mean, log_std, rng: np.random.Generator):
    eps = rng.standard_normal(np.shape(mean))
    u, a, logp = squashed_sample(mean, log_std, eps)
    return u, a, logp, eps


def squashed_backward(a, log_std, eps, da, dlogp):
    """
    Gradients of a loss with partials ``da`` (per action) and ``dlogp`` (per sample)
    with respect to the mean and log standard deviation, holding ``eps`` fixed.
    """
    dlogp = dlogp[..., None]
    du = da * (1 - a**2) + dlogp * 2 * a * (1 - a**2) / (1 - a**2 + SQUASH_EPS)
    return du, du * np.exp(log_std) * eps - dlogp
