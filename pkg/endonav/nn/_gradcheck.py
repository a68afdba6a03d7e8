import typing

import numpy as np


def grad_check(
    f: typing.Callable[[typing.Dict[str, np.ndarray]], typing.Tuple[float, dict]],
    params: typing.Dict[str, np.ndarray],
    h: float = 1e-5,
    *,
    floor: float = 1e-6,
    names: typing.Iterable[str] = None,
) -> float:
    """
    Compare the analytic gradient returned by ``f`` with central differences on every
    scalar parameter. ``f(params)`` returns ``(value, grads)``; parameters are perturbed
    in place and restored.

    :param floor: Lower bound on the relative error denominator, so vanishing gradients
      are compared in absolute terms.
    :returns: The maximum relative error.
    """
    _, analytic = f(params)
    worst = 0.0
    for name in names or sorted(params):
        p = params[name]
        grad = np.asarray(analytic.get(name, np.zeros_like(p)))
        flat = p.reshape(-1)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + h
            plus = f(params)[0]
            flat[k] = saved - h
            minus = f(params)[0]
            flat[k] = saved
            numeric = (plus - minus) / (2 * h)
            a = grad.reshape(-1)[k]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, float(err))
    return worst
