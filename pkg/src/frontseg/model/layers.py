"""Differentiable layers on NCHW numpy tensors.

Every layer implements forward(x, training) and backward(dout). Training
forwards cache whatever the backward pass needs; backward returns the
gradient with respect to the layer input and stores parameter gradients in
``layer.grads``. Trainable parameters are exposed as an ordered list of
(name, array) pairs; arrays are updated in place by the optimizer.

Convolutions use im2col and one large matrix product per sample, which is
where practically all the arithmetic lives, so throughput is set by the
BLAS behind numpy. The column matrices are rebuilt during backward instead
of cached: rebuilding costs a fraction of the matrix products and keeps
peak memory at one column matrix per layer.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["Conv2D", "BatchNorm", "LeakyReLU", "MaxPool2x2", "ConvTranspose2D", "Sigmoid"]


class Layer:
    def __init__(self):
        self.params = []
        self.grads = {}
        self.state = []

    def forward(self, x, training):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _im2col(x, k, pad):
    """(C, H, W) -> (H*W, C*k*k) patch matrix for a stride-1 same conv."""
    c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    return windows.transpose(1, 2, 0, 3, 4).reshape(h * w, c * k * k)


def _col2im(dcols, shape, k, pad):
    """Scatter-add the im2col adjoint back onto the (C, H, W) input."""
    c, h, w = shape
    d = dcols.reshape(h, w, c, k, k)
    out = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for ki in range(k):
        for kj in range(k):
            out[:, ki : ki + h, kj : kj + w] += d[:, :, :, ki, kj].transpose(2, 0, 1)
    return out[:, pad : pad + h, pad : pad + w]


class Conv2D(Layer):
    """Stride-1 same-padded convolution with square kernel."""

    def __init__(self, in_ch, out_ch, kernel, rng, dtype=np.float32):
        super().__init__()
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, kernel
        self.pad = kernel // 2
        bound = 1.0 / np.sqrt(in_ch * kernel * kernel)
        self.W = rng.uniform(-bound, bound, (out_ch, in_ch * kernel * kernel)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.params = [("W", self.W), ("b", self.b)]
        self._x = None

    def forward(self, x, training):
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {c}")
        out = np.empty((n, self.out_ch, h, w), dtype=x.dtype)
        wt = self.W.T
        for i in range(n):
            cols = _im2col(x[i], self.k, self.pad)  # (h*w, c*k*k)
            out[i] = (cols @ wt + self.b).T.reshape(self.out_ch, h, w)
        if training:
            self._x = x
        return out

    def backward(self, dout):
        x = self._x
        n, c, h, w = x.shape
        dW = np.zeros_like(self.W)
        db = dout.sum(axis=(0, 2, 3))
        dx = np.empty_like(x)
        for i in range(n):
            cols = _im2col(x[i], self.k, self.pad)
            di = dout[i].reshape(self.out_ch, h * w)
            dW += di @ cols
            dx[i] = _col2im((di.T @ self.W), x.shape[1:], self.k, self.pad)
        self.grads = {"W": dW, "b": db}
        return dx


class BatchNorm(Layer):
    """Per-channel normalization: batch statistics while training, running
    statistics at inference. Variance is the biased (1/m) estimate for both
    the batch and the running buffers."""

    def __init__(self, ch, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.ch, self.momentum, self.eps = ch, momentum, eps
        self.gamma = np.ones(ch, dtype=dtype)
        self.beta = np.zeros(ch, dtype=dtype)
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self.params = [("gamma", self.gamma), ("beta", self.beta)]
        self.state = [("running_mean", self.running_mean), ("running_var", self.running_var)]
        self._cache = None

    def forward(self, x, training):
        gamma = self.gamma.reshape(1, -1, 1, 1)
        beta = self.beta.reshape(1, -1, 1, 1)
        if training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            x_hat = (x - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
            self._cache = (x_hat, inv_std)
            return (gamma * x_hat + beta).astype(x.dtype)
        mean = self.running_mean.reshape(1, -1, 1, 1)
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        return gamma * (x - mean) * inv_std.reshape(1, -1, 1, 1) + beta

    def backward(self, dout):
        x_hat, inv_std = self._cache
        n, c, h, w = dout.shape
        m = n * h * w
        dgamma = (dout * x_hat).sum(axis=(0, 2, 3))
        dbeta = dout.sum(axis=(0, 2, 3))
        coeff = (self.gamma * inv_std / m).reshape(1, -1, 1, 1)
        dx = coeff * (m * dout - dbeta.reshape(1, -1, 1, 1) - x_hat * dgamma.reshape(1, -1, 1, 1))
        self.grads = {"gamma": dgamma, "beta": dbeta}
        return dx.astype(dout.dtype)


class LeakyReLU(Layer):
    def __init__(self, alpha=0.1):
        super().__init__()
        self.alpha = alpha
        self._mask = None

    def forward(self, x, training):
        mask = x >= 0
        if training:
            self._mask = mask
        return np.where(mask, x, self.alpha * x)

    def backward(self, dout):
        return np.where(self._mask, dout, self.alpha * dout)


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2. Ties route the gradient to the first
    maximal position in row-major window order, so backward is
    deterministic."""

    def __init__(self):
        super().__init__()
        self._mask = None
        self._shape = None

    def forward(self, x, training):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"spatial dims must be even, got {h}x{w}")
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        out = blocks.max(axis=-1)
        if training:
            is_max = blocks == out[..., None]
            first = is_max & (np.cumsum(is_max, axis=-1) == 1)
            self._mask = first
            self._shape = (n, c, h, w)
        return out

    def backward(self, dout):
        n, c, h, w = self._shape
        dblocks = self._mask * dout[..., None]
        return dblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


class ConvTranspose2D(Layer):
    """Stride-2 transposed convolution with a square kernel, output exactly
    doubling the spatial dims. The raw operation yields 2n+k-2 samples; the
    excess over 2n is cropped, one extra row/col from the top/left and the
    rest from the bottom/right, which keeps the output aligned with
    top-left-anchored inputs."""

    def __init__(self, in_ch, out_ch, kernel, rng, dtype=np.float32):
        super().__init__()
        if kernel < 3:
            raise ValueError("kernel must be >= 3 for stride-2 upsampling")
        self.in_ch, self.out_ch, self.k = in_ch, out_ch, kernel
        excess = kernel - 2
        self.crop_lo = excess // 2
        self.crop_hi = excess - self.crop_lo
        bound = 1.0 / np.sqrt(in_ch * kernel * kernel)
        self.W = rng.uniform(-bound, bound, (in_ch, out_ch, kernel, kernel)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)
        self.params = [("W", self.W), ("b", self.b)]
        self._x = None

    def forward(self, x, training):
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ValueError(f"expected {self.in_ch} input channels, got {c}")
        k = self.k
        full = np.zeros((n, self.out_ch, 2 * h + k - 2, 2 * w + k - 2), dtype=x.dtype)
        xf = x.transpose(0, 2, 3, 1).reshape(-1, c)  # (n*h*w, in_ch)
        for ki in range(k):
            for kj in range(k):
                contrib = xf @ self.W[:, :, ki, kj]  # (n*h*w, out_ch)
                full[:, :, ki : ki + 2 * h : 2, kj : kj + 2 * w : 2] += contrib.reshape(
                    n, h, w, self.out_ch
                ).transpose(0, 3, 1, 2)
        lo = self.crop_lo
        out = full[:, :, lo : lo + 2 * h, lo : lo + 2 * w]
        out = out + self.b.reshape(1, -1, 1, 1)
        if training:
            self._x = x
        return out

    def backward(self, dout):
        x = self._x
        n, c, h, w = x.shape
        k, lo = self.k, self.crop_lo
        dfull = np.zeros((n, self.out_ch, 2 * h + k - 2, 2 * w + k - 2), dtype=dout.dtype)
        dfull[:, :, lo : lo + 2 * h, lo : lo + 2 * w] = dout
        xf = x.transpose(0, 2, 3, 1).reshape(-1, c)
        dxf = np.zeros_like(xf)
        dW = np.zeros_like(self.W)
        for ki in range(k):
            for kj in range(k):
                sl = dfull[:, :, ki : ki + 2 * h : 2, kj : kj + 2 * w : 2]
                sf = sl.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
                dxf += sf @ self.W[:, :, ki, kj].T
                dW[:, :, ki, kj] = xf.T @ sf
        self.grads = {"W": dW, "b": dout.sum(axis=(0, 2, 3))}
        return dxf.reshape(n, h, w, c).transpose(0, 3, 1, 2)


class Sigmoid(Layer):
    def __init__(self):
        super().__init__()
        self._out = None

    def forward(self, x, training):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        if training:
            self._out = out
        return out

    def backward(self, dout):
        return dout * self._out * (1.0 - self._out)
