"""Nesterov-Adam optimizer.

Variant pinned here (and by the scalar oracle in the tests): the simplified
NAdam update without a momentum-product schedule. With gradient g at step t
(1-based) and hyperparameters (lr, beta1, beta2, eps):

    m   <- beta1 * m + (1 - beta1) * g
    v   <- beta2 * v + (1 - beta2) * g^2
    mh  = m / (1 - beta1^t)
    vh  = v / (1 - beta2^t)
    mbar = beta1 * mh + (1 - beta1) * g / (1 - beta1^t)    (Nesterov lookahead)
    theta <- theta - lr * mbar / (sqrt(vh) + eps)

With nesterov=False the update degenerates to plain Adam (mbar = mh). The
epsilon sits outside the square root.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


class NAdam:
    def __init__(
        self,
        params: list[Tensor],
        lr: float = 5e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        nesterov: bool = True,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.nesterov = nesterov
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            if self.nesterov:
                m_bar = self.beta1 * m_hat + (1.0 - self.beta1) * g / bc1
            else:
                m_bar = m_hat
            p.data = p.data - self.lr * m_bar / (np.sqrt(v_hat) + self.eps)
