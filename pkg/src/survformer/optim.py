"""Adam optimizer with bias correction and decoupled weight decay."""

import numpy as np


class Adam:
    """Standard Adam over a list of parameter tensors.

    Weight decay is decoupled: it shrinks parameters directly instead of
    being folded into the gradient, so decay acts even when the gradient
    is zero. ``step`` reads ``.grad`` from each parameter and increments
    the internal step counter.
    """

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter shape {p.data.shape}"
                )
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def adam_step(state, gradients=None):
    """Apply one update; ``gradients`` optionally overrides each ``.grad``."""
    if gradients is not None:
        for p, g in zip(state.params, gradients):
            p.grad = np.asarray(g, dtype=np.float64)
    state.step()
    return state.params
