"""Central-difference verification of recorded gradients.

Compares every analytic gradient element against (f(p+h) - f(p-h)) / 2h
at h = 1e-5 in float64, reporting the max relative error per parameter
with the scale-guarded denominator max(1e-8, |g| + |fd|).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import CheckError
from .optim import zero_grads
from .tensor import Tensor, backward


def grad_check(f: Callable[[], Tensor],
               params: Sequence[tuple[str, Tensor]],
               h: float = 1e-5) -> dict[str, float]:
    """Max relative error between analytic and central-difference grads.

    `f` must be a deterministic closure over `params` returning a scalar
    Tensor; determinism is verified by a bitwise re-evaluation.
    """
    params = list(params)
    first = f().data
    again = f().data
    if first.tobytes() != again.tobytes():
        raise CheckError("function is not deterministic under re-evaluation")

    zero_grads(params)
    backward(f())
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros(p.shape))
                for name, p in params}

    report: dict[str, float] = {}
    for name, p in params:
        flat = p.data.ravel()
        ga = analytic[name].ravel()
        worst = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lp = float(f().data)
            flat[i] = keep - h
            lm = float(f().data)
            flat[i] = keep
            fd = (lp - lm) / (2.0 * h)
            rel = abs(ga[i] - fd) / max(1e-8, abs(ga[i]) + abs(fd))
            if rel > worst:
                worst = rel
        report[name] = worst
    return report


def max_error(report: dict[str, float]) -> float:
    return max(report.values()) if report else 0.0
