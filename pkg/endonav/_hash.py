import hashlib
import typing

import numpy as np


def hash_parameters(params: typing.Mapping[str, np.ndarray]):
    h = hashlib.md5()
    for name in sorted(params):
        array = np.ascontiguousarray(params[name])
        h.update(name.encode())
        h.update(str(array.shape).encode())
        h.update(array.tobytes())
    return h.hexdigest()
