import contextlib
import datetime
import json
import os
import typing
import warnings
from pathlib import Path
from traceback import format_exception

import appdirs

_install_dirs = appdirs.AppDirs(appname="Endonav", appauthor="Endonav")
_log_redirect: typing.Optional[Path] = None

LogLevel = typing.Union[
    typing.Literal["log"],
    typing.Literal["info"],
    typing.Literal["warn"],
    typing.Literal["error"],
]


def get_log_path() -> Path:
    if _log_redirect is not None:
        return _log_redirect
    return Path(get_cache_path(f"{os.getpid()}.txt"))


def log(message: str, *, level: LogLevel = None, category=None, exc: Exception = None):
    log_path = get_log_path()
    if exc is not None and level is None:
        level = "error"
    if level:
        level = level.upper()
    header = " ".join(str(c) for c in (datetime.datetime.now(), level, category) if c)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    with open(log_path, "a") as f:
        f.write(f"[{header}] {message}")
        if exc:
            f.write(":\n")
            f.writelines(
                "  " + "\n  ".join(line.split("\n"))
                for line in format_exception(type(exc), exc, exc.__traceback__)
            )
            f.write("Exception arguments:\n")
            f.writelines(f"  {a}\n" for a in exc.args)
            warnings.warn(message + f". See the full log at '{log_path}'.")
        else:
            f.write("\n")


@contextlib.contextmanager
def log_to(path):
    """
    Redirect :func:`log` records into ``path`` for the duration of the block.
    """
    global _log_redirect

    previous = _log_redirect
    _log_redirect = Path(path)
    try:
        yield _log_redirect
    finally:
        _log_redirect = previous


def get_cache_path(*subfolders):
    root = os.environ.get("ENDONAV_CACHE") or _install_dirs.user_cache_dir
    return os.path.join(root, *subfolders)


def write_json(data, path):
    """
    Write ``data`` with sorted keys so that repeated writes are byte-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(json.dumps(data, sort_keys=True, indent=2))
        f.write("\n")


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)
