import typing
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeMismatchError


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: typing.Dict[str, np.ndarray] = field(default_factory=dict)
    v: typing.Dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(state: AdamState, params: typing.Dict[str, np.ndarray], grads):
    """
    Apply one bias-corrected Adam step in place. Parameters without a gradient entry
    are left untouched.

    :returns: ``params``
    """
    for name, grad in grads.items():
        if name not in params:
            raise ShapeMismatchError(f"Gradient for unknown parameter '{name}'.")
        if np.shape(grad) != params[name].shape:
            raise ShapeMismatchError(
                f"Gradient of '{name}' has shape {np.shape(grad)},"
                f" parameter has {params[name].shape}."
            )
    state.step += 1
    c1 = 1 - state.beta1**state.step
    c2 = 1 - state.beta2**state.step
    for name, grad in grads.items():
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * grad
        v *= state.beta2
        v += (1 - state.beta2) * np.square(grad)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
