"""AdamW with decoupled weight decay and linear learning-rate warmup."""

import numpy as np

from .tensor import MissingGradError


class AdamW:
    """Standard AdamW over a list of named parameters.

    The effective learning rate ramps linearly from 0 to the base rate over
    ``warmup_steps`` optimizer steps and stays constant afterwards. Weight
    decay is decoupled: parameters shrink by ``eff_lr * weight_decay * p``
    independently of the gradient-based update.
    """

    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01, warmup_steps=0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if eps <= 0:
            raise ValueError(f"epsilon must be positive, got {eps}")
        if weight_decay < 0 or warmup_steps < 0:
            raise ValueError("weight_decay and warmup_steps must be non-negative")
        # params: iterable of (name, Tensor) or bare Tensors
        self.params = []
        for i, p in enumerate(params):
            if isinstance(p, tuple):
                self.params.append(p)
            else:
                self.params.append((f"param{i}", p))
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.warmup_steps = int(warmup_steps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def effective_lr(self, step=None):
        """Learning rate at a given step count (defaults to the current one)."""
        t = self.step_count if step is None else step
        if self.warmup_steps > 0 and t < self.warmup_steps:
            return self.lr * t / self.warmup_steps
        return self.lr

    def step(self):
        """Apply one update; requires grads populated, clears them after."""
        for name, p in self.params:
            if p.grad is None:
                raise MissingGradError(f"parameter {name!r} has no gradient; "
                                       f"run backward before stepping")
        self.step_count += 1
        t = self.step_count
        lr_t = self.effective_lr(t)
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for (name, p), m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay > 0:
                p.data *= 1.0 - lr_t * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= lr_t * (m_hat / (np.sqrt(v_hat) + self.eps))
            p.grad[...] = 0

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()
