"""Fully connected networks with hand-written reverse mode."""
from __future__ import annotations

import numpy as np

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


def _selu(x):
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def _selu_grad(x):
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


ACTIVATIONS = {
    "selu": (_selu, _selu_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "linear": (lambda x: x, lambda x: np.ones_like(x)),
}


class MLP:
    """Dense network: ``hidden`` activated layers of ``width`` units, linear output.

    Parameters live in one flat float64 vector so optimizers and finite
    difference checks can treat them uniformly; ``weights`` and ``biases``
    are views into it.
    """

    def __init__(self, n_in, n_out, hidden, width, activation="selu", params=None, rng=None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out = int(n_in), int(n_out)
        self.hidden, self.width = int(hidden), int(width)
        self.activation = activation
        self._act, self._dact = ACTIVATIONS[activation]
        sizes = [self.n_in] + [self.width] * self.hidden + [self.n_out]
        self.shapes = [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]
        n = sum(a * b + b for a, b in self.shapes)
        if params is None:
            params = np.zeros(n)
            self.params = params
            self._bind()
            rng = rng if rng is not None else np.random.default_rng(0)
            for W in self.weights:
                # LeCun normal, the standard pairing for SELU
                W[...] = rng.standard_normal(W.shape) / np.sqrt(W.shape[0])
        else:
            params = np.asarray(params, dtype=float)
            if params.shape != (n,):
                raise ValueError(f"expected {n} parameters, got {params.shape}")
            self.params = params.copy()
            self._bind()

    @property
    def size(self):
        return self.params.size

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in self.shapes:
            self.weights.append(self.params[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off:off + b])
            off += b

    def set_params(self, p):
        self.params[...] = p

    def forward(self, x, keep=False):
        """Evaluate on rows of ``x``; with ``keep`` also return the tape."""
        h = x
        tape = [x]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if i < last:
                if keep:
                    tape.append(z)
                h = self._act(z)
                if keep:
                    tape.append(h)
            else:
                h = z
        return (h, tape) if keep else h

    def backward(self, tape, dout, grad=None):
        """Reverse pass. Accumulates into ``grad`` (flat) and returns d/dx."""
        if grad is None:
            grad = np.zeros_like(self.params)
        gW, gb = [], []
        off = 0
        for a, b in self.shapes:
            gW.append(grad[off:off + a * b].reshape(a, b))
            off += a * b
            gb.append(grad[off:off + b])
            off += b
        d = dout
        nl = len(self.weights)
        for i in range(nl - 1, -1, -1):
            h_in = tape[0] if i == 0 else tape[2 * i]
            gW[i] += h_in.T @ d
            gb[i] += d.sum(axis=0)
            d = d @ self.weights[i].T
            if i > 0:
                d = d * self._dact(tape[2 * i - 1])
        return d, grad
