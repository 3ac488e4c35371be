"""Small fully connected networks with hand-written backprop and an Adam optimiser."""
from __future__ import annotations

import numpy as np


class MLP:
    """``in -> hidden... -> out`` with tanh hidden units and a linear output layer."""

    def __init__(self, n_in: int, n_out: int, hidden=(64, 64), rng=None, out_scale: float = 1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [n_in, *hidden, n_out]
        self.params = []
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            scale = np.sqrt(1.0 / a)
            if i == len(sizes) - 2:
                scale *= out_scale
            self.params.append(rng.normal(0.0, scale, size=(a, b)))
            self.params.append(np.zeros(b))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x):
        """Returns ``(output, cache)``; the cache holds layer inputs for :meth:`backward`."""
        acts = [x]
        h = x
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ W + b
            if i < self.n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, dout, acts):
        """Gradients of a scalar loss w.r.t. every parameter and w.r.t. the input."""
        grads = [None] * len(self.params)
        d = dout
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                d = d * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ d
            grads[2 * i + 1] = d.sum(axis=0)
            d = d @ self.params[2 * i].T
        return grads, d

    def copy_from(self, other: "MLP") -> None:
        self.params = [p.copy() for p in other.params]

    def soft_update(self, online: "MLP", rho: float) -> None:
        """``target <- rho * online + (1 - rho) * target`` for every weight."""
        for i, (t, o) in enumerate(zip(self.params, online.params)):
            self.params[i] = rho * o + (1.0 - rho) * t


class Adam:
    def __init__(self, params, lr=3e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
