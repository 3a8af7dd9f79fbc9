"""Layer implementations with exact backward passes.

Every layer computes in the dtype of its parameters/input (float32 for
training, float64 in gradient-check tests), caches what its backward pass
needs, and exposes ``params``/``grads`` dicts. Convolution uses the
cross-correlation convention with zero padding; everything else is exactly
what it says.
"""

from __future__ import annotations

import numpy as np


class Layer:
    """Base: stateless layers leave params/grads empty."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (C*kh*kw, N*h_out*w_out) patch matrix for one big GEMM."""
    n, c, _, _ = xp.shape
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(c, kh, kw, n, h_out, w_out),
        strides=(sc, sh, sw, sn, stride * sh, stride * sw),
        writeable=False,
    )
    return windows.reshape(c * kh * kw, n * h_out * w_out)


class Conv2D(Layer):
    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1, padding: int = 0):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.params = {"W": weight, "b": bias}
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        w = self.params["W"]
        out_ch, in_ch, kh, kw = w.shape
        n, c, h, wd = x.shape
        if c != in_ch:
            raise ValueError(f"conv2d expects {in_ch} input channels, got {c}")
        s, p = self.stride, self.padding
        h_out = (h + 2 * p - kh) // s + 1
        w_out = (wd + 2 * p - kw) // s + 1
        if h_out <= 0 or w_out <= 0:
            raise ValueError(f"conv2d output would be empty for input {h}x{wd}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.ascontiguousarray(_im2col(xp, kh, kw, s, h_out, w_out))
        out = w.reshape(out_ch, -1) @ cols  # (out_ch, N*L)
        out += self.params["b"][:, None]
        self._cache = (cols, x.shape, xp.shape, (h_out, w_out))
        return np.ascontiguousarray(
            out.reshape(out_ch, n, h_out, w_out).transpose(1, 0, 2, 3)
        )

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, x_shape, xp_shape, (h_out, w_out) = self._cache
        w = self.params["W"]
        out_ch, in_ch, kh, kw = w.shape
        n = x_shape[0]
        s, p = self.stride, self.padding
        dy2 = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(out_ch, -1)

        self.grads["W"] = (dy2 @ cols.T).reshape(w.shape)
        self.grads["b"] = dy2.sum(axis=1)

        dcols = w.reshape(out_ch, -1).T @ dy2  # (C*kh*kw, N*L)
        dcols = dcols.reshape(in_ch, kh, kw, n, h_out, w_out)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        for ki in range(kh):
            for kj in range(kw):
                dxp[:, :, ki : ki + s * h_out : s, kj : kj + s * w_out : s] += (
                    dcols[:, ki, kj].transpose(1, 0, 2, 3)
                )
        if p:
            return dxp[:, :, p:-p, p:-p]
        return dxp


class ConvTranspose2D(Layer):
    """Exact adjoint of Conv2D: output spatial size is (in - 1) * stride + kernel."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int):
        super().__init__()
        self.stride = stride
        self.params = {"W": weight, "b": bias}  # W: (in_ch, out_ch, kh, kw)
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        w = self.params["W"]
        in_ch, out_ch, kh, kw = w.shape
        n, c, h, wd = x.shape
        if c != in_ch:
            raise ValueError(f"conv_transpose2d expects {in_ch} input channels, got {c}")
        s = self.stride
        h_out = (h - 1) * s + kh
        w_out = (wd - 1) * s + kw
        out = np.zeros((n, out_ch, h_out, w_out), dtype=x.dtype)
        for ki in range(kh):
            for kj in range(kw):
                out[:, :, ki : ki + s * h : s, kj : kj + s * wd : s] += np.einsum(
                    "co,nchw->nohw", w[:, :, ki, kj], x
                )
        out += self.params["b"][None, :, None, None]
        self._cache = (x, (h, wd))
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, (h, wd) = self._cache
        w = self.params["W"]
        in_ch, out_ch, kh, kw = w.shape
        s = self.stride
        dx = np.zeros_like(x)
        dw = np.zeros_like(w)
        for ki in range(kh):
            for kj in range(kw):
                dslice = dy[:, :, ki : ki + s * h : s, kj : kj + s * wd : s]
                dx += np.einsum("co,nohw->nchw", w[:, :, ki, kj], dslice)
                dw[:, :, ki, kj] = np.einsum("nchw,nohw->co", x, dslice)
        self.grads["W"] = dw
        self.grads["b"] = dy.sum(axis=(0, 2, 3))
        return dx


class MaxPool2D(Layer):
    """Non-overlapping max pooling; ties go to the first window position
    (row-major order within the window)."""

    def __init__(self, size: int = 2):
        super().__init__()
        self.size = size
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k = self.size
        if h % k or w % k:
            raise ValueError(f"maxpool2d needs dimensions divisible by {k}, got {h}x{w}")
        # strided views of each in-window position; no data copied
        views = [x[:, :, di::k, dj::k] for di in range(k) for dj in range(k)]
        out = views[0].copy()
        for v in views[1:]:
            np.maximum(out, v, out=out)
        self._cache = (views, out, x.shape)
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        views, out, x_shape = self._cache
        k = self.size
        dx = np.zeros(x_shape, dtype=dy.dtype)
        claimed = np.zeros(out.shape, dtype=bool)
        i = 0
        for di in range(k):
            for dj in range(k):
                winner = (views[i] == out) & ~claimed
                claimed |= winner
                dx[:, :, di::k, dj::k] = np.where(winner, dy, 0)
                i += 1
        return dx


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Sigmoid(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        # branch on sign to avoid exp overflow
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._out * (1.0 - self._out)


class InputCenter(Layer):
    """Shift [0, 1] pixel input to zero mean (x - 0.5); gradient is identity."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x - np.asarray(0.5, dtype=x.dtype)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy


class Flatten(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        super().__init__()
        self.params = {"W": weight, "b": bias}  # W: (out, in)
        self.grads = {}
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.params["W"].shape[1]:
            raise ValueError(
                f"dense expects (N, {self.params['W'].shape[1]}), got {x.shape}"
            )
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.grads["W"] = dy.T @ x
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"]
