"""Small image-filter helpers shared by data generation and metrics."""

from __future__ import annotations

import numpy as np


def gaussian_kernel1d(sigma: float, half: int | None = None) -> np.ndarray:
    """Normalized 1-d Gaussian taps at integer offsets [-half, half]."""
    if half is None:
        half = int(np.ceil(3.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_deriv_kernel1d(sigma: float, half: int | None = None) -> np.ndarray:
    """First-derivative-of-Gaussian taps, quantized to 2^-20.

    The quantization makes every tap an exact binary fraction so that
    convolution sums are order-independent in float64 on quantized
    inputs (the determinism the metric tests rely on).
    """
    if half is None:
        half = int(np.ceil(3.0 * sigma))
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    g /= g.sum()
    d = -x / (sigma * sigma) * g
    return np.round(d * (1 << 20)) / (1 << 20)


def replicate_pad(img: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    return np.pad(img, ((pad_y, pad_y), (pad_x, pad_x)), mode="edge")


def conv2d_dense(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size 2-d correlation with replicate border, float64."""
    kh, kw = kernel.shape
    py, px = kh // 2, kw // 2
    padded = replicate_pad(np.asarray(img, dtype=np.float64), py, px)
    h, w = img.shape
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw))
    return np.tensordot(windows[:h, :w], kernel, axes=([2, 3], [0, 1]))


def _correlate_axis(img: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    half = len(k) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (half, half)
    padded = np.pad(img, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(k), axis=axis)
    return np.tensordot(windows, k, axes=([2], [0]))


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate border."""
    k = gaussian_kernel1d(sigma)
    img = np.asarray(img, dtype=np.float64)
    return _correlate_axis(_correlate_axis(img, k, 1), k, 0)


def forward_diff_gradmag(img: np.ndarray) -> np.ndarray:
    """Forward-difference gradient magnitude with replicate border.

    The replicate border makes the last row/column differences zero.
    """
    img = np.asarray(img, dtype=np.float64)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return np.sqrt(gx * gx + gy * gy)
