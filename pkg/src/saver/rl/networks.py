"""Small dense networks with hand-written backpropagation, plus Adam."""

from __future__ import annotations

import numpy as np

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, a: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
    "linear": (lambda z: z, lambda z, a: np.ones_like(z)),
}


class MLP:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``; inputs are row-major batches.
    """

    def __init__(self, sizes, rng: np.random.Generator, hidden="relu", output="linear",
                 final_scale=3e-3):
        self.sizes = tuple(int(s) for s in sizes)
        self.hidden = hidden
        self.output = output
        self.params = []
        n_layers = len(self.sizes) - 1
        for k in range(n_layers):
            fan_in, fan_out = self.sizes[k], self.sizes[k + 1]
            bound = final_scale if k == n_layers - 1 else 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def _act(self, k):
        return self.output if k == self.n_layers - 1 else self.hidden

    def forward(self, x: np.ndarray, keep: bool = False):
        cache = []
        a = x
        for k in range(self.n_layers):
            W, b = self.params[2 * k], self.params[2 * k + 1]
            z = a @ W + b
            a_next = _ACT[self._act(k)][0](z)
            if keep:
                cache.append((a, z, a_next))
            a = a_next
        return (a, cache) if keep else a

    __call__ = forward

    def backward(self, cache, dy: np.ndarray):
        """Gradients of ``sum(dy * y)`` w.r.t. the parameters and the input."""
        grads = [None] * len(self.params)
        g = dy
        for k in reversed(range(self.n_layers)):
            a_in, z, a_out = cache[k]
            g = g * _ACT[self._act(k)][1](z, a_out)
            grads[2 * k] = a_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
        return grads, g

    def copy(self) -> "MLP":
        twin = object.__new__(MLP)
        twin.sizes, twin.hidden, twin.output = self.sizes, self.hidden, self.output
        twin.params = [p.copy() for p in self.params]
        return twin

    def soft_update(self, source: "MLP", tau: float):
        for p, s in zip(self.params, source.params):
            if tau == 1.0:
                p[...] = s
            else:
                p *= 1.0 - tau
                p += tau * s


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
