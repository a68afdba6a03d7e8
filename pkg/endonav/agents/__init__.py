"""
The navigation controllers and their registry. Agent kinds are discovered through the
``endonav.agent`` entry point group, so third party packages can add their own.
"""

import functools
import typing
from importlib.metadata import entry_points

from .._fs import log
from ..exceptions import UnknownAgentError
from ..nn import load_checkpoint
from ._agent import Agent
from .buffer import BufferConfig, ReplayBuffer, SequenceBatch, Transition
from .planner import PlannerConfig, cem_plan, rollout_returns, wm_rollout
from .sac import SacAgent, SacConfig
from .world_model import WorldModelAgent, WorldModelConfig, wm_encode

_builtins = {SacAgent.kind: SacAgent, WorldModelAgent.kind: WorldModelAgent}


@functools.lru_cache(maxsize=1)
def discover_agents() -> typing.Dict[str, typing.Type[Agent]]:
    agents = dict(_builtins)
    for ptr in entry_points(group="endonav.agent"):
        if ptr.name in agents:
            continue
        try:
            agents[ptr.name] = ptr.load()
        except Exception as e:
            log(f"Could not load agent '{ptr.name}'", exc=e)
    return agents


def get_agent_class(kind: str) -> typing.Type[Agent]:
    try:
        return discover_agents()[kind]
    except KeyError:
        known = ", ".join(sorted(discover_agents()))
        raise UnknownAgentError(
            f"Unknown agent kind '{kind}', choose from {known}.", kind
        ) from None


def make_agent(kind: str, config=None, seed: int = 0) -> Agent:
    """
    Create a fresh agent. ``config`` may be the agent's config object or a mapping of
    its fields.
    """
    cls = get_agent_class(kind)
    if isinstance(config, typing.Mapping):
        config = cls.config_class(**config)
    return cls(config, seed=seed)


def load_agent(path) -> Agent:
    """
    Restore an agent of whatever kind the checkpoint at ``path`` holds.
    """
    checkpoint = load_checkpoint(path)
    return get_agent_class(checkpoint.kind).from_checkpoint(checkpoint, path)


__all__ = [
    "Agent",
    "BufferConfig",
    "PlannerConfig",
    "ReplayBuffer",
    "SacAgent",
    "SacConfig",
    "SequenceBatch",
    "Transition",
    "WorldModelAgent",
    "WorldModelConfig",
    "cem_plan",
    "discover_agents",
    "get_agent_class",
    "load_agent",
    "make_agent",
    "rollout_returns",
    "wm_encode",
    "wm_rollout",
]
