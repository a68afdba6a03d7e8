import typing

import numpy as np
from scipy.special import betainc

from ..exceptions import DegenerateSampleError, LengthMismatchError


class TTest(typing.NamedTuple):
    t: float
    p: float
    df: int


def paired_t_test(x, y) -> TTest:
    """
    Two-tailed paired Student's t-test of ``x`` against ``y``. The p-value comes from
    the regularized incomplete beta function, ``I_{df/(df+t^2)}(df/2, 1/2)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError(
            f"Paired samples differ in length: {x.shape} vs {y.shape}."
        )
    if len(x) < 2:
        raise DegenerateSampleError(f"A paired t-test needs 2+ pairs, got {len(x)}.")
    d = x - y
    if np.ptp(d) == 0:
        raise DegenerateSampleError("All paired differences are equal; zero variance.")
    n = len(d)
    df = n - 1
    t = d.mean() / (d.std(ddof=1) / np.sqrt(n))
    p = betainc(df / 2, 0.5, df / (df + t * t))
    return TTest(float(t), float(p), df)
