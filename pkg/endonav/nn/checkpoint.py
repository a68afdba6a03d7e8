"""
Single-file parameter checkpoints: one JSON header line followed by the parameter
block as little-endian floats, in header order.
"""

import json
import typing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError, ShapeMismatchError

FORMAT = "endonav-checkpoint"
VERSION = 1
DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    kind: str
    step: int
    hyper: dict
    tensors: typing.Dict[str, np.ndarray]


def save_checkpoint(
    path,
    kind: str,
    tensors: typing.Mapping[str, np.ndarray],
    *,
    step: int = 0,
    hyper: dict = None,
    dtype: str = "float64",
):
    if dtype not in DTYPES:
        raise CheckpointError(f"Unsupported checkpoint dtype '{dtype}'.", str(path))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(tensors)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "dtype": dtype,
        "step": int(step),
        "hyper": hyper or {},
        "tensors": [[name, list(np.shape(tensors[name]))] for name in names],
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode())
        f.write(b"\n")
        for name in names:
            f.write(np.ascontiguousarray(tensors[name], dtype=DTYPES[dtype]).tobytes())
    return path


def load_checkpoint(path, expected: typing.Mapping[str, tuple] = None) -> Checkpoint:
    """
    Read a checkpoint and check the block size against the header. With ``expected``,
    every named shape must match exactly.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode())
            block = f.read()
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Unreadable checkpoint header in '{path}': {e}", str(path))
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise CheckpointError(f"'{path}' is not an endonav checkpoint.", str(path))
    if header.get("version") != VERSION or header.get("dtype") not in DTYPES:
        raise CheckpointError(
            f"Unsupported checkpoint version or dtype in '{path}'.", str(path)
        )
    dtype = np.dtype(DTYPES[header["dtype"]])
    sizes = [int(np.prod(shape, dtype=int)) for _, shape in header["tensors"]]
    if sum(sizes) * dtype.itemsize != len(block):
        raise CheckpointError(
            f"Checkpoint '{path}' holds {len(block)} bytes, header describes"
            f" {sum(sizes) * dtype.itemsize}.",
            str(path),
        )
    data = np.frombuffer(block, dtype=dtype).astype(np.float64)
    tensors, offset = {}, 0
    for (name, shape), size in zip(header["tensors"], sizes):
        tensors[name] = data[offset : offset + size].reshape(shape).copy()
        offset += size
    if expected is not None:
        check_shapes(tensors, expected)
    return Checkpoint(header["kind"], header["step"], header["hyper"], tensors)


def check_shapes(tensors, expected):
    missing = set(expected) - set(tensors)
    unknown = set(tensors) - set(expected)
    if missing or unknown:
        raise ShapeMismatchError(
            f"Checkpoint parameters differ: missing {sorted(missing)},"
            f" unexpected {sorted(unknown)}."
        )
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != tuple(shape):
            raise ShapeMismatchError(
                f"Parameter '{name}' has shape {tensors[name].shape}, expected {shape}."
            )
