"""
Explicit forward and backward passes for the few layer types the agents need.
"""

from ._adam import AdamState, adam_update
from ._gradcheck import grad_check
from ._lstm import (
    LstmParams,
    lstm_step,
    lstm_step_backward,
    lstm_unroll,
    lstm_unroll_backward,
)
from ._mlp import MlpParams, mlp_backward, mlp_forward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint


def polyak(target, source, tau: float):
    """
    In-place ``target <- (1 - tau) * target + tau * source`` over matching mappings.
    """
    for name, p in target.items():
        p *= 1 - tau
        p += tau * source[name]


def prefixed(grads, prefix):
    return {f"{prefix}{k}": v for k, v in grads.items()}


def add_grads(total, grads):
    for k, v in grads.items():
        if k in total:
            total[k] = total[k] + v
        else:
            total[k] = v
    return total
