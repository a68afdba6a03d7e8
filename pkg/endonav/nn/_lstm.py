import typing
from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatchError
from ._mlp import _sigmoid

GATES = ("i", "f", "g", "o")


@dataclass
class LstmParams:
    """
    LSTM cell with one ``(H, I + H)`` weight matrix and one bias per gate: input ``i``,
    forget ``f``, cell candidate ``g`` and output ``o``.
    """

    weights: typing.Dict[str, np.ndarray]
    biases: typing.Dict[str, np.ndarray]

    def __post_init__(self):
        if set(self.weights) != set(GATES) or set(self.biases) != set(GATES):
            raise ShapeMismatchError(f"LSTM parameters need exactly the gates {GATES}.")
        shape = self.weights["i"].shape
        for gate in GATES:
            if self.weights[gate].shape != shape:
                got = self.weights[gate].shape
                raise ShapeMismatchError(f"Gate '{gate}' weights {got} are not {shape}.")
            if self.biases[gate].shape != (shape[0],):
                raise ShapeMismatchError(f"Gate '{gate}' bias does not match {shape}.")
        if shape[1] <= shape[0]:
            raise ShapeMismatchError(f"Gate weights {shape} leave no room for an input.")

    @classmethod
    def init(
        cls, input_size: int, hidden_size: int, rng: np.random.Generator, dtype=np.float64
    ):
        fan_in = input_size + hidden_size
        bound = 1 / np.sqrt(fan_in)
        weights = {
            gate: rng.uniform(-bound, bound, (hidden_size, fan_in)).astype(dtype)
            for gate in GATES
        }
        biases = {gate: np.zeros(hidden_size, dtype=dtype) for gate in GATES}
        biases["f"][:] = 1.0
        return cls(weights, biases)

    @property
    def hidden_size(self):
        return self.weights["i"].shape[0]

    @property
    def input_size(self):
        return self.weights["i"].shape[1] - self.hidden_size

    def parameters(self, prefix="") -> typing.Dict[str, np.ndarray]:
        params = {f"{prefix}W{g}": self.weights[g] for g in GATES}
        params.update({f"{prefix}b{g}": self.biases[g] for g in GATES})
        return params

    def copy(self):
        return LstmParams(
            {g: w.copy() for g, w in self.weights.items()},
            {g: b.copy() for g, b in self.biases.items()},
        )


def lstm_step(params: LstmParams, x, h, c):
    x, h, c = np.asarray(x), np.asarray(h), np.asarray(c)
    if x.shape[-1] != params.input_size:
        raise ShapeMismatchError(
            f"Input has {x.shape[-1]} features, cell expects {params.input_size}."
        )
    if h.shape[-1] != params.hidden_size or c.shape != h.shape:
        raise ShapeMismatchError(
            f"State shapes {h.shape}, {c.shape} do not match the cell."
        )
    xh = np.concatenate((x, h), axis=-1)
    w, b = params.weights, params.biases
    i = _sigmoid(xh @ w["i"].T + b["i"])
    f = _sigmoid(xh @ w["f"].T + b["f"])
    g = np.tanh(xh @ w["g"].T + b["g"])
    o = _sigmoid(xh @ w["o"].T + b["o"])
    c_next = f * c + i * g
    tc = np.tanh(c_next)
    h_next = o * tc
    return h_next, c_next, (xh, c, i, f, g, o, tc)


def lstm_step_backward(params: LstmParams, cache, dh, dc):
    """
    Backpropagate gradients of the next hidden and cell state through one step.

    :returns: ``(dx, dh_prev, dc_prev, grads)``
    """
    xh, c, i, f, g, o, tc = cache
    dc = dc + dh * o * (1 - tc**2)
    pre = {
        "i": dc * g * i * (1 - i),
        "f": dc * c * f * (1 - f),
        "g": dc * i * (1 - g**2),
        "o": dh * tc * o * (1 - o),
    }
    grads = {}
    dxh = 0
    flat_xh = xh.reshape(-1, xh.shape[-1])
    for gate, d in pre.items():
        flat = d.reshape(-1, d.shape[-1])
        grads[f"W{gate}"] = flat.T @ flat_xh
        grads[f"b{gate}"] = flat.sum(axis=0)
        dxh = dxh + d @ params.weights[gate]
    n = params.input_size
    return dxh[..., :n], dxh[..., n:], dc * f, grads


def lstm_unroll(params: LstmParams, xs, h0=None, c0=None):
    """
    Run the cell over the leading (time) axis of ``xs``, from a zero state by default.

    :returns: Hidden states of every step, the final cell state and the step caches.
    """
    xs = np.asarray(xs)
    shape = xs.shape[1:-1] + (params.hidden_size,)
    h = np.zeros(shape, dtype=xs.dtype) if h0 is None else h0
    c = np.zeros(shape, dtype=xs.dtype) if c0 is None else c0
    hs, caches = [], []
    for x in xs:
        h, c, cache = lstm_step(params, x, h, c)
        hs.append(h)
        caches.append(cache)
    return np.stack(hs), c, caches


def lstm_unroll_backward(params: LstmParams, caches, dhs):
    """
    Backpropagation through time for gradients ``dhs`` on every hidden output.

    :returns: Input gradients per step and summed parameter gradients.
    """
    grads = {k: np.zeros_like(v) for k, v in params.parameters().items()}
    dh = np.zeros_like(dhs[0])
    dc = np.zeros_like(dhs[0])
    dxs = [None] * len(caches)
    for t in reversed(range(len(caches))):
        dx, dh, dc, step = lstm_step_backward(params, caches[t], dh + dhs[t], dc)
        dxs[t] = dx
        for k, v in step.items():
            grads[k] += v
    return np.stack(dxs), grads
