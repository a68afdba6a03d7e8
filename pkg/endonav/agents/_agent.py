import typing
from dataclasses import asdict

import numpy as np

from .._hash import hash_parameters
from ..exceptions import CheckpointError, NumericalError
from ..nn import load_checkpoint, save_checkpoint
from ..nn.checkpoint import check_shapes


def _flatten(modules):
    params = {}
    for name, module in modules.items():
        if isinstance(module, np.ndarray):
            params[name] = module
        else:
            params.update(module.parameters(f"{name}."))
    return params


class Agent:
    """
    Common parameter handling of the controllers. Subclasses set ``kind`` and
    ``config_class`` and implement :meth:`modules`, :meth:`act` and :meth:`update`.
    """

    kind: str = None
    config_class: typing.Type = None

    def __init__(self, config=None, seed: int = 0):
        self.config = config if config is not None else self.config_class()
        self.seed = seed

    def modules(self) -> typing.Dict[str, typing.Any]:
        raise NotImplementedError

    def parameters(self) -> typing.Dict[str, np.ndarray]:
        """
        Every learnable array keyed by a dotted name. The arrays are the live storage.
        """
        return _flatten(self.modules())

    def checksum(self) -> str:
        return hash_parameters(self.parameters())

    @property
    def sequence_length(self) -> int:
        raise NotImplementedError

    def act(self, history, rng, *, deterministic=False, memory=None) -> np.ndarray:
        raise NotImplementedError

    def update(self, batch, rng) -> typing.Dict[str, float]:
        raise NotImplementedError

    def save(self, path, *, step: int = 0, dtype: str = "float64"):
        return save_checkpoint(
            path,
            self.kind,
            self.parameters(),
            step=step,
            hyper={"config": asdict(self.config), "seed": self.seed},
            dtype=dtype,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint, path="<checkpoint>"):
        if checkpoint.kind != cls.kind:
            raise CheckpointError(
                f"Checkpoint '{path}' holds a '{checkpoint.kind}' agent,"
                f" not '{cls.kind}'.",
                str(path),
            )
        config = cls.config_class(**checkpoint.hyper.get("config", {}))
        agent = cls(config, seed=checkpoint.hyper.get("seed", 0))
        params = agent.parameters()
        check_shapes(checkpoint.tensors, {k: v.shape for k, v in params.items()})
        for name, value in checkpoint.tensors.items():
            params[name][...] = value
        return agent

    @classmethod
    def load(cls, path):
        return cls.from_checkpoint(load_checkpoint(path), path)


def check_finite(losses: typing.Dict[str, float]):
    bad = {k: v for k, v in losses.items() if not np.isfinite(v)}
    if bad:
        raise NumericalError(f"Non-finite losses {bad}; aborting the update.", losses)
    return losses


def time_major(array):
    return np.swapaxes(np.asarray(array), 0, 1)
