"""Two-layer ReLU MLP backbone with manual backprop."""
from __future__ import annotations

import numpy as np


class MLP:
    """x -> relu(x W1 + b1) -> relu(. W2 + b2) -> ... one Linear+ReLU per width.

    The last activation is the embedding handed to the classifier head.
    """

    def __init__(self, d_in, widths=(64, 64), seed=0):
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        fan_in = d_in
        for width in widths:
            # He init for ReLU layers
            self.weights.append(rng.standard_normal((fan_in, width)) * np.sqrt(2.0 / fan_in))
            self.biases.append(np.zeros(width))
            fan_in = width
        self._cache = None

    @property
    def d_out(self):
        return self.weights[-1].shape[1]

    @property
    def params(self):
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{k + 1}"] = w
            out[f"b{k + 1}"] = b
        return out

    def forward(self, x):
        acts = [x]
        h = x
        for w, b in zip(self.weights, self.biases):
            h = np.maximum(h @ w + b, 0.0)
            acts.append(h)
        self._cache = acts
        return h

    def backward(self, d_out):
        """Gradients for the last `forward` call, keyed like `params`."""
        acts = self._cache
        grads = {}
        g = d_out
        for k in range(len(self.weights) - 1, -1, -1):
            g = g * (acts[k + 1] > 0)
            grads[f"W{k + 1}"] = acts[k].T @ g
            grads[f"b{k + 1}"] = g.sum(axis=0)
            if k:
                g = g @ self.weights[k].T
        return grads
