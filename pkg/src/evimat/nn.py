"""Minimal differentiable layers with hand-written backward passes.

Enough machinery for the desk-scale models: dense layers, 3x3
convolutions via im2col, ReLU, and Adam with a cosine learning-rate
schedule. Training runs in float64; inference casts parameters to
float32 once and stays there.
"""

from __future__ import annotations

import math

import numpy as np


class Dense:
    """y = x @ W + b with x of shape (N, n_in)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w + self.b

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.dw += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.w.T


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Conv3x3:
    """3x3 convolution, stride 1, zero padding, x of shape (N, C, H, W)."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        fan_in = c_in * 9
        self.w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(c_out, c_in, 3, 3))
        self.b = np.zeros(c_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._col = None
        self._shape = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
        xp[:, :, 1 : h + 1, 1 : w + 1] = x
        cols = np.empty((n, c, 9, h, w), dtype=x.dtype)
        k = 0
        for dy in range(3):
            for dx in range(3):
                cols[:, :, k] = xp[:, :, dy : dy + h, dx : dx + w]
                k += 1
        # contiguous (N, C*9, H*W); weights keep the matching layout
        return cols.reshape(n, c * 9, h * w)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        col = self._im2col(x)
        self._col = col
        self._shape = (n, c, h, w)
        wmat = self.w.reshape(self.w.shape[0], -1)  # (c_out, C*9)
        out = np.matmul(wmat, col) + self.b[:, None]
        return out.reshape(n, -1, h, w)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        c_out = self.w.shape[0]
        dy_mat = dy.reshape(n, c_out, h * w)
        wmat = self.w.reshape(c_out, -1)
        self.dw += np.matmul(dy_mat, self._col.transpose(0, 2, 1)).sum(axis=0).reshape(
            self.w.shape
        )
        self.db += dy_mat.sum(axis=(0, 2))
        dcol = np.matmul(wmat.T, dy_mat).reshape(n, c, 9, h, w)
        dxp = np.zeros((n, c, h + 2, w + 2), dtype=dy.dtype)
        k = 0
        for ddy in range(3):
            for ddx in range(3):
                dxp[:, :, ddy : ddy + h, ddx : ddx + w] += dcol[:, :, k]
                k += 1
        return dxp[:, :, 1 : h + 1, 1 : w + 1]


class Conv1x1:
    """Per-pixel linear map over channels; four of these stacked into one
    weight matrix realize the independent parameter heads."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.w = rng.normal(0.0, math.sqrt(1.0 / c_in), size=(c_in, c_out))
        self.b = np.zeros(c_out)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def params(self):
        return [self.w, self.b]

    def grads(self):
        return [self.dw, self.db]

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        self._x = x
        flat = x.transpose(0, 2, 3, 1).reshape(-1, c)
        out = flat @ self.w + self.b
        return out.reshape(n, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._x.shape
        c_out = self.w.shape[1]
        dy_flat = dy.transpose(0, 2, 3, 1).reshape(-1, c_out)
        x_flat = self._x.transpose(0, 2, 3, 1).reshape(-1, c)
        self.dw += x_flat.T @ dy_flat
        self.db += dy_flat.sum(axis=0)
        dx = dy_flat @ self.w.T
        return dx.reshape(n, h, w, c).transpose(0, 3, 1, 2)


class Sequential:
    def __init__(self, layers):
        self.layers = layers

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def grads(self):
        out = []
        for layer in self.layers:
            out.extend(layer.grads())
        return out

    def zero_grads(self):
        for g in self.grads():
            g[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


class AdamCosine:
    """Adam (0.9 / 0.999 / 1e-8) with lr(t) = lr0 * (1 + cos(pi t / T)) / 2."""

    def __init__(self, params, lr0: float, total_steps: int):
        self.params = params
        self.lr0 = lr0
        self.total_steps = total_steps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.count = 0
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8

    def lr_at(self, step_index: int) -> float:
        return self.lr0 * 0.5 * (1.0 + math.cos(math.pi * step_index / self.total_steps))

    def step(self, grads, step_index: int) -> None:
        self.count += 1
        lr = self.lr_at(step_index)
        b1c = 1.0 - self.beta1**self.count
        b2c = 1.0 - self.beta2**self.count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def flatten_params(params) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params])


def assign_params(params, flat: np.ndarray) -> None:
    i = 0
    for p in params:
        n = p.size
        p[...] = flat[i : i + n].reshape(p.shape)
        i += n
    if i != flat.size:
        raise ValueError("parameter vector size mismatch")
