import typing
from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatchError

ACTIVATIONS = ("tanh", "relu", "identity", "softplus")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _activate(tag, pre):
    if tag == "tanh":
        return np.tanh(pre)
    elif tag == "relu":
        return np.maximum(pre, 0.0)
    elif tag == "softplus":
        return _softplus(pre)
    return pre


def _activation_grad(tag, pre, out):
    if tag == "tanh":
        return 1.0 - out**2
    elif tag == "relu":
        return (pre > 0).astype(pre.dtype)
    elif tag == "softplus":
        return _sigmoid(pre)
    return np.ones_like(pre)


@dataclass
class MlpParams:
    """
    Dense layers ``y = act(x @ W.T + b)``; ``weights[i]`` has shape ``(out, in)``.
    """

    weights: typing.List[np.ndarray]
    biases: typing.List[np.ndarray]
    activations: typing.List[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeMismatchError("Layer weight, bias and activation counts differ.")
        for i, (w, b, tag) in enumerate(zip(self.weights, self.biases, self.activations)):
            if tag not in ACTIVATIONS:
                raise ShapeMismatchError(f"Unknown activation '{tag}' in layer {i}.")
            if b.shape != (w.shape[0],):
                raise ShapeMismatchError(
                    f"Layer {i} bias {b.shape} does not fit {w.shape}."
                )
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeMismatchError(
                    f"Layer {i} expects {w.shape[1]} inputs, previous layer has"
                    f" {self.weights[i - 1].shape[0]} outputs."
                )

    @classmethod
    def init(
        cls,
        sizes: typing.Sequence[int],
        activations: typing.Sequence[str],
        rng: np.random.Generator,
        dtype=np.float64,
    ):
        """
        Uniform ``±1/sqrt(fan_in)`` weights and zero biases.
        """
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases, list(activations))

    @property
    def input_size(self):
        return self.weights[0].shape[1]

    @property
    def output_size(self):
        return self.weights[-1].shape[0]

    def parameters(self, prefix="") -> typing.Dict[str, np.ndarray]:
        params = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"{prefix}W{i}"] = w
            params[f"{prefix}b{i}"] = b
        return params

    def copy(self):
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


def mlp_forward(params: MlpParams, x):
    """
    Evaluate the network on one input vector or a batch of row vectors.

    :returns: The output and a cache of ``(input, pre-activation, output)`` per layer.
    """
    x = np.asarray(x)
    if x.shape[-1] != params.input_size:
        raise ShapeMismatchError(
            f"Input has {x.shape[-1]} features, network expects {params.input_size}."
        )
    cache = []
    for w, b, tag in zip(params.weights, params.biases, params.activations):
        pre = x @ w.T + b
        out = _activate(tag, pre)
        cache.append((x, pre, out))
        x = out
    return x, cache


def mlp_backward(params: MlpParams, cache, dy):
    """
    Reverse-mode pass. Batched inputs accumulate parameter gradients over the batch.

    :returns: Gradient with respect to the input and a parameter gradient mapping keyed
      like :meth:`MlpParams.parameters`.
    """
    dy = np.asarray(dy)
    if dy.shape != cache[-1][2].shape:
        raise ShapeMismatchError(
            f"Output gradient {dy.shape} does not match output {cache[-1][2].shape}."
        )
    grads = {}
    for i in reversed(range(len(params.weights))):
        x, pre, out = cache[i]
        dpre = dy * _activation_grad(params.activations[i], pre, out)
        if dpre.ndim == 1:
            grads[f"W{i}"] = np.outer(dpre, x)
            grads[f"b{i}"] = dpre.copy()
        else:
            flat = dpre.reshape(-1, dpre.shape[-1])
            grads[f"W{i}"] = flat.T @ x.reshape(-1, x.shape[-1])
            grads[f"b{i}"] = flat.sum(axis=0)
        dy = dpre @ params.weights[i]
    return dy, grads
