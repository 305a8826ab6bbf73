"""Dense ReLU networks with a softmax head, trained by Adam.

Logistic regression is the zero-hidden-layer case.
"""

from __future__ import annotations

import numpy as np

from .base import Classifier


def init_params(sizes: list[int], rng: np.random.Generator, zero: bool = False) -> list[np.ndarray]:
    """``[W0, b0, W1, b1, ...]`` with He-normal weights (or all zeros)."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if zero:
            params.append(np.zeros((fan_in, fan_out)))
        else:
            params.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    """Logits plus the per-layer activations needed for backprop."""
    acts = [X]
    h = X
    n_layers = len(params) // 2
    for i in range(n_layers):
        z = h @ params[2 * i] + params[2 * i + 1]
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(h)
    return h, acts


def loss_and_grads(params, X, y, l2: float = 0.0):
    """Mean softmax cross-entropy plus ``l2/2 * sum(theta^2)`` and its gradient."""
    logits, acts = forward(params, X)
    n = len(y)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * sum(float((p**2).sum()) for p in params)

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in reversed(range(len(params) // 2)):
        grads[2 * i] = acts[i].T @ delta + l2 * params[2 * i]
        grads[2 * i + 1] = delta.sum(axis=0) + l2 * params[2 * i + 1]
        if i:
            delta = (delta @ params[2 * i].T) * (acts[i] > 0)
    return loss, grads


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class DenseNet(Classifier):
    """Inputs are standardised with the training mean/std stored in the model."""

    kind = "mlp"

    def __init__(self, num_classes, dim, mean, std, params):
        super().__init__(num_classes, dim)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.params = [np.asarray(p, dtype=np.float64) for p in params]

    @classmethod
    def fit(cls, X, y, num_classes, spec, rng):
        hidden = list(spec.hidden) if cls.kind == "mlp" else []
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        Z = (X - mean) / std
        params = init_params([X.shape[1], *hidden, num_classes], rng, zero=not hidden)
        opt = Adam(params, spec.lr)
        n = len(y)
        for _ in range(spec.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, spec.batch_size):
                b = perm[start : start + spec.batch_size]
                _, grads = loss_and_grads(params, Z[b], y[b], spec.l2)
                opt.step(params, grads)
        return cls(num_classes, X.shape[1], mean, std, params)

    def scores(self, X):
        logits, _ = forward(self.params, (X - self.mean) / self.std)
        return logits

    def _arrays(self):
        return [self.mean, self.std, *self.params]

    @classmethod
    def _from_arrays(cls, num_classes, dim, arrays):
        return cls(num_classes, dim, arrays[0], arrays[1], arrays[2:])


class MLP(DenseNet):
    kind = "mlp"


class LogisticRegression(DenseNet):
    kind = "logistic_regression"
