"""Synthetic desk-scale datasets.

Two generators: a cubic regression set (the standard sanity check for
evidential uncertainty heads) and procedurally composited matting
images, where I = alpha*F + (1-alpha)*B holds exactly in float32 by
construction. Random training user maps follow the geometric patch
protocol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import gaussian_blur
from .interaction import BG, FG, TRANSITION, new_user_map

USERMAP_PATCH = 15
USERMAP_GEOMETRIC_P = 1.0 / 6.0
LABEL_DELTA = 0.05


@dataclass
class CubicDataset:
    """y = x^3 + noise, targets affinely rescaled into [0, 1]."""

    x: np.ndarray
    y: np.ndarray  # rescaled targets
    y_raw: np.ndarray
    offset: float  # y = (y_raw - offset) / span
    span: float
    noise_sigma: float

    def rescale(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.offset) / self.span

    def unscale(self, y: np.ndarray) -> np.ndarray:
        return y * self.span + self.offset


def gen_cubic(
    n: int,
    x_range: tuple[float, float] = (-4.0, 4.0),
    noise_sigma: float = 3.0,
    seed: int = 0,
) -> CubicDataset:
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = x_range
    x = rng.uniform(lo, hi, size=n)
    y_raw = x**3 + rng.normal(0.0, noise_sigma, size=n)
    # rescale by the noiseless envelope so the transform is data-independent
    bound = max(abs(lo), abs(hi)) ** 3 + 4.0 * noise_sigma
    offset = -bound
    span = 2.0 * bound
    y = (y_raw - offset) / span
    return CubicDataset(x, y, y_raw, offset, span, noise_sigma)


@dataclass
class MattingSample:
    """One composite: grayscale image, its alpha, and the two layers."""

    image: np.ndarray  # (H, W) float32
    alpha: np.ndarray
    fg: np.ndarray
    bg: np.ndarray


def _textured_field(rng: np.random.Generator, size: int, base: float, amp: float):
    """Smooth random texture: blurred white noise around a base level."""
    noise = rng.standard_normal((size, size))
    smooth = gaussian_blur(noise, sigma=size / 16.0)
    smooth /= max(np.abs(smooth).max(), 1e-9)
    return np.clip(base + amp * smooth, 0.0, 1.0)


def _blob_alpha(rng: np.random.Generator, size: int) -> np.ndarray:
    """Union of random disks with a Gaussian-feathered boundary."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = np.zeros((size, size), dtype=np.float64)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0.25 * size, 0.75 * size, size=2)
        r = rng.uniform(0.12 * size, 0.28 * size)
        mask = np.maximum(mask, ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r) * 1.0)
    feather = rng.uniform(1.0, 2.5)
    return np.clip(gaussian_blur(mask, feather), 0.0, 1.0)


def gen_composites(n: int, size: int = 96, seed: int = 0) -> list[MattingSample]:
    if n < 1:
        raise ValueError("need n >= 1")
    if size < 64:
        raise ValueError("need size >= 64")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        alpha = _blob_alpha(rng, size).astype(np.float32)
        fg = _textured_field(rng, size, rng.uniform(0.6, 0.8), 0.25).astype(np.float32)
        bg = _textured_field(rng, size, rng.uniform(0.2, 0.4), 0.25).astype(np.float32)
        # composite in float32 so the residual check is bit-exact
        image = alpha * fg + (np.float32(1.0) - alpha) * bg
        out.append(MattingSample(image, alpha, fg, bg))
    return out


def label_patch(gt_patch: np.ndarray, delta: float = LABEL_DELTA) -> float:
    if np.all(gt_patch >= 1.0 - delta):
        return FG
    if np.all(gt_patch <= delta):
        return BG
    return TRANSITION


def gen_train_usermap(gt_alpha: np.ndarray, seed: int) -> np.ndarray:
    """Random training user map: L ~ Geometric(1/6) patches of 15x15
    (L = 0 and hence an empty map is possible), each placed uniformly
    and labeled from the ground truth by the delta rule."""
    rng = np.random.default_rng(seed)
    return sample_train_usermap(gt_alpha, rng)


def sample_train_usermap(
    gt_alpha: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    h, w = gt_alpha.shape
    u = new_user_map(h, w)
    n_patches = int(rng.geometric(USERMAP_GEOMETRIC_P)) - 1  # support {0, 1, ...}
    for _ in range(n_patches):
        y0 = int(rng.integers(0, h - USERMAP_PATCH + 1))
        x0 = int(rng.integers(0, w - USERMAP_PATCH + 1))
        patch = gt_alpha[y0 : y0 + USERMAP_PATCH, x0 : x0 + USERMAP_PATCH]
        u[y0 : y0 + USERMAP_PATCH, x0 : x0 + USERMAP_PATCH] = label_patch(patch)
    return u
