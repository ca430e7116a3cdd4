"""Bias-corrected Adam over the autodiff parameter tensors.

Update rule per step t (elementwise):

    m_t = b1 * m_{t-1} + (1 - b1) * g
    v_t = b2 * v_{t-1} + (1 - b2) * g^2
    mhat = m_t / (1 - b1^t),   vhat = v_t / (1 - b2^t)
    theta <- theta - lr * mhat / (sqrt(vhat) + eps)
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .autodiff import NumericError, Tensor


class Adam:
    """Holds first/second moment state for a fixed parameter list.

    Parameters absent from a step's gradient map are treated as having a
    zero gradient: their moments decay but a parameter with zero moments
    stays exactly put.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"Adam: learning rate must be positive, got {lr}")
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError(f"Adam: betas must lie in [0, 1), got {beta1}, {beta2}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Mapping[Tensor, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.all(np.isfinite(g)):
                label = p.name or f"<unnamed {p.shape}>"
                raise NumericError(f"non-finite gradient for parameter {label}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
