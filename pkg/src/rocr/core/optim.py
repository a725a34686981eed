from __future__ import annotations

import numpy as np

from .params import ParamSet


class MissingGradError(RuntimeError):
    pass


def sgd_step(params: ParamSet, lr: float) -> ParamSet:
    """Plain update ``p <- p - lr * grad``; gradients are zeroed afterwards."""
    for name in params:
        if params[name].grad is None:
            raise MissingGradError(f"parameter {name!r} has no gradient")
    for name in params:
        t = params[name]
        t.data = t.data - lr * t.grad
        t.grad = np.zeros_like(t.data)
    return params


class SGD:
    """Mini-batch SGD with optional heavy-ball momentum and global-norm clipping.

    With ``momentum=0`` and ``clip_norm=None`` a step is exactly :func:`sgd_step`.
    """

    def __init__(self, params: ParamSet, lr: float, momentum: float = 0.0, clip_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self._velocity = {k: np.zeros_like(params[k].data) for k in params}

    def grad_norm(self) -> float:
        return float(np.sqrt(sum(float((self.params[k].grad ** 2).sum()) for k in self.params)))

    def step(self, scale: float = 1.0) -> float:
        """Apply one update using ``scale * grad``; returns the pre-clip gradient norm."""
        for name in self.params:
            if self.params[name].grad is None:
                raise MissingGradError(f"parameter {name!r} has no gradient")
        norm = self.grad_norm() * abs(scale)
        if self.clip_norm is not None and norm > self.clip_norm:
            scale = scale * self.clip_norm / norm
        for name in self.params:
            t = self.params[name]
            g = t.grad * scale
            if self.momentum:
                v = self._velocity[name]
                v *= self.momentum
                v += g
                g = v
            t.data = t.data - self.lr * g
            t.grad = np.zeros_like(t.data)
        return norm
