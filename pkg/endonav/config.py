"""
Run configuration. Every section is the dataclass of the module that owns it; a config
file (JSON or TOML) and ``key=value`` overrides are merged over the defaults, and
unknown or wrongly typed keys are rejected.
"""

import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import toml

from .agents import BufferConfig, SacConfig, WorldModelConfig
from .anatomy import AnatomyParams
from .env import EnvConfig
from .exceptions import ConfigValueError, EndonavError, UnknownConfigKeyError
from .harness.training import TrainConfig


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    anatomy: AnatomyParams = field(default_factory=AnatomyParams)
    buffer: BufferConfig = field(default_factory=BufferConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    tdmpc: WorldModelConfig = field(default_factory=WorldModelConfig)

    def agent_config(self, kind: str):
        """
        Config section of an agent kind, ``None`` for kinds without one.
        """
        return getattr(self, kind, None) if kind in AGENT_SECTIONS else None

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


SECTIONS = {
    "train": TrainConfig,
    "env": EnvConfig,
    "anatomy": AnatomyParams,
    "buffer": BufferConfig,
    "sac": SacConfig,
    "tdmpc": WorldModelConfig,
}
AGENT_SECTIONS = ("sac", "tdmpc")


def default_config() -> dict:
    return RunConfig().to_dict()


def load_config_file(path) -> dict:
    path = Path(path)
    with open(path, "r") as f:
        if path.suffix.lower() == ".toml":
            return toml.load(f)
        return json.load(f)


def parse_value(text: str):
    """
    Parse an override value as JSON, falling back to the raw string.
    """
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(text: str) -> typing.Tuple[str, typing.Any]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigValueError(f"Override '{text}' is not of the form key=value.", text)
    return key.strip(), parse_value(value.strip())


def _nest(key, value):
    for part in reversed(key.split(".")):
        value = {part: value}
    return value


def _check_type(key, default, value):
    if default is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, (list, tuple))
        value = list(value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigValueError(
            f"Config key '{key}' expects {type(default).__name__}, got {value!r}.", key
        )
    return value


def merge(base: dict, update: typing.Mapping, prefix: str = "") -> dict:
    """
    Recursively merge ``update`` into a copy of ``base``; every key of ``update`` must
    exist in ``base``.
    """
    merged = dict(base)
    for key, value in update.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise UnknownConfigKeyError(f"Unknown config key '{dotted}'.", dotted)
        if isinstance(base[key], dict):
            if not isinstance(value, typing.Mapping):
                raise ConfigValueError(f"Config key '{dotted}' expects a table.", dotted)
            merged[key] = merge(base[key], value, f"{dotted}.")
        else:
            merged[key] = _check_type(dotted, base[key], value)
    return merged


def build_config(data: typing.Mapping) -> RunConfig:
    data = merge(default_config(), data)
    sections = {}
    for name, cls in SECTIONS.items():
        try:
            sections[name] = cls(**data[name])
        except (TypeError, ValueError, EndonavError) as e:
            raise ConfigValueError(f"Invalid '{name}' section: {e}", name) from None
    return RunConfig(**sections)


def resolve_config(
    path=None,
    overrides: typing.Iterable[str] = (),
    values: typing.Mapping[str, typing.Any] = None,
) -> RunConfig:
    """
    Defaults, then the config file at ``path``, then ``overrides`` (``a.b=value``
    strings), then the dotted keys of ``values``.
    """
    data = default_config()
    if path is not None:
        data = merge(data, load_config_file(path))
    for text in overrides:
        data = merge(data, _nest(*parse_override(text)))
    for key, value in (values or {}).items():
        data = merge(data, _nest(key, value))
    return build_config(data)
