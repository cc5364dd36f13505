"""Minimal float64 neural-network stack built on the shared kernels.

Layers operate on (N, C, H, W) activations, compute exact analytical
gradients (verified against finite differences in the test suite), and take
all randomness from caller-supplied generators so every forward pass is
reproducible.
"""

from __future__ import annotations

import numpy as np

from ._kernels import col2im, im2col


class Layer:
    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Conv2d(Layer):
    """Stride-1 valid convolution via patch unfolding."""

    def __init__(self, in_ch, out_ch, k, rng, init="he"):
        super().__init__()
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, k
        fan_in = in_ch * k * k
        self.w = _init_weight((out_ch, fan_in), fan_in, rng, init)
        self.b = np.zeros(out_ch)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        self._shape = x.shape
        self._cols = im2col(x, self.k, self.k)
        out = self._cols @ self.w.T + self.b
        oh, ow = h - self.k + 1, w - self.k + 1
        return out.reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, grad):
        n, c, h, w = self._shape
        g = grad.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.grads[0][...] = g.T @ self._cols
        self.grads[1][...] = g.sum(axis=0)
        dcols = g @ self.w
        return col2im(dcols, n, c, h, w, self.k, self.k)


class Dense(Layer):
    def __init__(self, in_dim, out_dim, rng, init="he"):
        super().__init__()
        self.w = _init_weight((out_dim, in_dim), in_dim, rng, init)
        self.b = np.zeros(out_dim)
        self.params = [self.w, self.b]
        self.grads = [np.zeros_like(self.w), np.zeros_like(self.b)]

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.w.T + self.b

    def backward(self, grad):
        self.grads[0][...] = grad.T @ self._x
        self.grads[1][...] = grad.sum(axis=0)
        return grad @ self.w


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Tanh(Layer):
    def forward(self, x, train=False, rng=None):
        self._out = np.tanh(x)
        return self._out

    def backward(self, grad):
        return grad * (1.0 - self._out * self._out)


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/columns are dropped."""

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        self._shape = x.shape
        h2, w2 = h // 2, w // 2
        win = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self._argmax = win.argmax(axis=-1)  # first max wins on ties
        return np.take_along_axis(win, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._shape
        h2, w2 = h // 2, w // 2
        scattered = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(scattered, self._argmax[..., None], grad[..., None], axis=-1)
        out = np.zeros((n, c, h, w))
        out[:, :, : h2 * 2, : w2 * 2] = (
            scattered.reshape(n, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2 * 2, w2 * 2)
        )
        return out


class Flatten(Layer):
    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout; active only in train mode and requires an rng then."""

    def __init__(self, p):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode requires an rng")
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x, train=False, rng=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0


def _init_weight(shape, fan_in, rng, init):
    if init == "he":
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    if init == "zero":
        return np.zeros(shape)
    raise ValueError(f"unknown init {init!r}")


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch; returns (loss, dlogits, probs)."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = -logp[np.arange(n), labels].mean()
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n, probs


def clip_grad_norm(grads, max_norm):
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
