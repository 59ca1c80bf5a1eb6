"""Layers with explicit forward/backward passes.

Tensors are NCHW for convolutional layers and (N, features) for dense ones.
Each layer caches what its backward pass needs during ``forward`` and
accumulates nothing: ``backward`` overwrites ``grads``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def init(self, in_shape: tuple, rng: np.random.Generator, dtype) -> tuple:
        """Allocate parameters for ``in_shape`` (no batch axis); return the
        output shape."""
        return self.output_shape(in_shape)

    def output_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> str:
        return self.kind


def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, out_channels: int, kernel: int = 3, stride: int = 1, padding=None):
        super().__init__()
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.padding = self.kernel // 2 if padding is None else int(padding)

    def describe(self):
        return "conv(%d,%d,%d)" % (self.out_channels, self.kernel, self.stride)

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError("conv expects (C, H, W) input, got %s" % (in_shape,))
        c, h, w = in_shape
        k, s, p = self.kernel, self.stride, self.padding
        ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ShapeError("conv kernel larger than padded input %s" % (in_shape,))
        return (self.out_channels, ho, wo)

    def init(self, in_shape, rng, dtype):
        out = self.output_shape(in_shape)
        fan_in = in_shape[0] * self.kernel ** 2
        bound = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-bound, bound, (self.out_channels, in_shape[0],
                                                       self.kernel, self.kernel)).astype(dtype)
        self.params["b"] = np.zeros(self.out_channels, dtype=dtype)
        return out

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        _, ho, wo = self.output_shape((c, h, w))
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
        W = self.params["W"]
        out = cols @ W.reshape(self.out_channels, -1).T + self.params["b"]
        self._cache = (cols, xp.shape, x.shape, ho, wo)
        return out.reshape(n, ho, wo, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dout):
        cols, xp_shape, x_shape, ho, wo = self._cache
        n, c, h, w = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        W = self.params["W"]
        d = dout.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_channels)
        self.grads["W"] = (d.T @ cols).reshape(W.shape)
        self.grads["b"] = d.sum(axis=0)
        dcols = (d @ W.reshape(self.out_channels, -1)).reshape(n, ho, wo, c, k, k)
        dxp = np.zeros(xp_shape, dtype=dout.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w] if p else dxp


class MFM(Layer):
    """Max-Feature-Map: elementwise max of the two halves of axis 1.

    On ties the gradient goes entirely to the first half.
    """
    kind = "mfm"

    def output_shape(self, in_shape):
        if in_shape[0] % 2:
            raise ShapeError("mfm needs an even channel count, got %d" % in_shape[0])
        return (in_shape[0] // 2,) + tuple(in_shape[1:])

    def forward(self, x, train=False, rng=None):
        if x.shape[1] % 2:
            raise ShapeError("mfm needs an even channel count, got %d" % x.shape[1])
        k = x.shape[1] // 2
        a, b = x[:, :k], x[:, k:]
        self._first = a >= b
        return np.where(self._first, a, b)

    def backward(self, dout):
        zero = np.zeros_like(dout)
        return np.concatenate([np.where(self._first, dout, zero),
                               np.where(self._first, zero, dout)], axis=1)


def mfm_forward(x: np.ndarray) -> np.ndarray:
    return MFM().forward(np.asarray(x))


class MaxPool2d(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a
    window are dropped."""
    kind = "max_pool"

    def __init__(self, size=2):
        super().__init__()
        self.size = _pair(size)

    def describe(self):
        sh, sw = self.size
        return "max_pool(%d)" % sh if sh == sw else "max_pool(%d,%d)" % (sh, sw)

    def output_shape(self, in_shape):
        c, h, w = in_shape
        sh, sw = self.size
        if h < sh or w < sw:
            raise ShapeError("pool window %s larger than input %s" % (self.size, in_shape))
        return (c, h // sh, w // sw)

    def forward(self, x, train=False, rng=None):
        n, c, h, w = x.shape
        sh, sw = self.size
        ho, wo = h // sh, w // sw
        blocks = (x[:, :, :ho * sh, :wo * sw].reshape(n, c, ho, sh, wo, sw)
                  .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, sh * sw))
        idx = blocks.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (n, c, h, w), idx = self._cache
        sh, sw = self.size
        ho, wo = h // sh, w // sw
        blocks = np.zeros((n, c, ho, wo, sh * sw), dtype=dout.dtype)
        np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
        dx = np.zeros((n, c, h, w), dtype=dout.dtype)
        dx[:, :, :ho * sh, :wo * sw] = (blocks.reshape(n, c, ho, wo, sh, sw)
                                        .transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * sh, wo * sw))
        return dx


class BatchNorm(Layer):
    """Per-channel batch normalisation over every axis except 1."""
    kind = "batch_norm"

    def __init__(self, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps

    def init(self, in_shape, rng, dtype):
        c = in_shape[0]
        self.params["gamma"] = np.ones(c, dtype=dtype)
        self.params["beta"] = np.zeros(c, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(c, dtype=dtype)
        self.buffers["running_var"] = np.ones(c, dtype=dtype)
        return in_shape

    def _bshape(self, x):
        return (1, x.shape[1]) + (1,) * (x.ndim - 2)

    def forward(self, x, train=False, rng=None):
        axes = (0,) + tuple(range(2, x.ndim))
        shape = self._bshape(x)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // x.shape[1]
            unbiased = var * m / max(m - 1, 1)
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm *= 1 - self.momentum
            rm += self.momentum * mean
            rv *= 1 - self.momentum
            rv += self.momentum * unbiased
        else:
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (xhat, inv_std, axes, shape)
        return self.params["gamma"].reshape(shape) * xhat + self.params["beta"].reshape(shape)

    def backward(self, dout):
        xhat, inv_std, axes, shape = self._cache
        m = dout.size // dout.shape[1]
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"].reshape(shape)
        # batch-statistics gradient (training mode)
        return (inv_std.reshape(shape) / m) * (
            m * dxhat - dxhat.sum(axis=axes).reshape(shape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape))


class UttNorm(Layer):
    """Standardise each example to zero mean and unit variance over all of
    its entries (no parameters)."""
    kind = "utt_norm"

    def __init__(self, eps: float = 1e-5):
        super().__init__()
        self.eps = eps

    def forward(self, x, train=False, rng=None):
        axes = tuple(range(1, x.ndim))
        mean = x.mean(axis=axes, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=axes, keepdims=True) + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes)
        return xhat

    def backward(self, dout):
        xhat, inv_std, axes = self._cache
        m = xhat[0].size
        return (inv_std / m) * (m * dout - dout.sum(axis=axes, keepdims=True)
                                - xhat * (dout * xhat).sum(axis=axes, keepdims=True))


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    kind = "dense"

    def __init__(self, units: int):
        super().__init__()
        self.units = int(units)

    def describe(self):
        return "dense(%d)" % self.units

    def output_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeError("dense expects flat input, got %s; add flatten" % (in_shape,))
        return (self.units,)

    def init(self, in_shape, rng, dtype):
        out = self.output_shape(in_shape)
        bound = np.sqrt(6.0 / in_shape[0])
        self.params["W"] = rng.uniform(-bound, bound, (in_shape[0], self.units)).astype(dtype)
        self.params["b"] = np.zeros(self.units, dtype=dtype)
        return out

    def forward(self, x, train=False, rng=None):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class Dropout(Layer):
    """Inverted dropout; identity at inference."""
    kind = "dropout"

    def __init__(self, p: float = 0.5):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = float(p)

    def describe(self):
        return "dropout(%g)" % self.p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        self._mask = (rng.random(x.shape) >= self.p).astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
