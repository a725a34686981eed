from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

from .tensor import Tensor


def grad_check(f: Callable[[], Tensor], params: Iterable[Tensor] | dict, eps: float = 1e-4, floor: float = 1e-6) -> float:
    """Max relative error between backprop and central differences.

    ``f`` rebuilds the graph from the current values of ``params`` and returns
    a scalar tensor.  Relative error per coordinate is
    ``|a - n| / max(floor, |a| + |n|)``.  The floor keeps coordinates whose
    gradient is far below the central difference's roundoff (about
    ``ulp(loss) / eps``) from reporting noise as error.
    """
    tensors = [params[k] for k in params] if isinstance(params, Mapping) else list(params)
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    loss = f()
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        af = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            num = (up - down) / (2 * eps)
            err = abs(af[i] - num) / max(floor, abs(af[i]) + abs(num))
            worst = max(worst, err)
    for t in tensors:
        t.grad = None
    return worst
