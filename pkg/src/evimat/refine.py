"""Aleatoric-uncertainty-guided detail refinement.

Pipeline: draw one sample of the matte from N(gamma, E[sigma^2]),
pick pixels whose aleatoric uncertainty is high (OTSU) but reliable
(Var[sigma^2] below its own OTSU threshold, infinite-variance pixels
always excluded), thin the selection, and re-predict 32x32 windows
around the survivors with a trained patch refiner, averaging overlaps.
"""

from __future__ import annotations

import math
from typing import Protocol

import numpy as np

WINDOW = 32
THIN_STRIDE = 8


class NoThresholdError(ValueError):
    """OTSU is undefined for constant inputs."""


def sample_coarse_plane(
    gamma: np.ndarray, aleatoric: np.ndarray, seed: int
) -> np.ndarray:
    """gamma + N(0, E[sigma^2]) noise, clamped to [0, 1], float32."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(gamma.shape) * np.sqrt(
        np.asarray(aleatoric, dtype=np.float64)
    )
    out = np.clip(np.asarray(gamma, dtype=np.float64) + noise, 0.0, 1.0)
    return out.astype(np.float32)


def otsu(values: np.ndarray, bins: int = 256) -> float:
    """Histogram threshold maximizing between-class variance.

    The histogram spans [min, max] with `bins` equal bins. For a split
    after bin k the between-class variance is proportional to
    (s0*c1 - s1*c0)^2 / (c0*c1) with integer counts c and index-sums s,
    so the argmax is computed in exact integer arithmetic; ties break
    toward the lowest bin. Returns the upper edge of bin k.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size == 0:
        raise NoThresholdError("no values")
    lo = float(flat.min())
    hi = float(flat.max())
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise NoThresholdError("non-finite values")
    if hi <= lo:
        raise NoThresholdError("constant input has no threshold")
    idx = np.floor((flat - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    hist = np.bincount(idx, minlength=bins)
    counts = [int(c) for c in hist]
    total_c = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    best_k = -1
    best_num = 0  # exact fraction best_num / best_den
    best_den = 1
    c0 = 0
    s0 = 0
    for k in range(bins - 1):
        c0 += counts[k]
        s0 += k * counts[k]
        c1 = total_c - c0
        if c0 == 0 or c1 == 0:
            continue
        s1 = total_s - s0
        num = (s0 * c1 - s1 * c0) ** 2
        den = c0 * c1
        # strict > keeps the lowest tying bin
        if num * best_den > best_num * den:
            best_num, best_den, best_k = num, den, k
    if best_k < 0:
        raise NoThresholdError("no valid split")
    return lo + (hi - lo) * (best_k + 1) / bins


def select_pixels(aleatoric: np.ndarray, var_sigma2: np.ndarray) -> np.ndarray:
    """Reliable high-aleatoric mask: above the aleatoric OTSU threshold
    and at-or-below the Var[sigma^2] OTSU threshold (computed over the
    finite entries); sentinel (+inf) pixels are never selected."""
    if aleatoric.shape != var_sigma2.shape:
        raise ValueError("plane shapes disagree")
    high = aleatoric > otsu(aleatoric)
    finite = np.isfinite(var_sigma2)
    reliable = np.zeros_like(finite)
    if finite.any():
        v_thresh = otsu(var_sigma2[finite])
        reliable[finite] = var_sigma2[finite] <= v_thresh
    return high & reliable


def thin_selection(mask: np.ndarray, stride: int = THIN_STRIDE) -> list[tuple[int, int]]:
    """First selected pixel (row-major) of each stride x stride block."""
    coords = []
    h, w = mask.shape
    for by in range(0, h, stride):
        for bx in range(0, w, stride):
            block = mask[by : by + stride, bx : bx + stride]
            ys, xs = np.nonzero(block)
            if ys.size:
                coords.append((by + int(ys[0]), bx + int(xs[0])))
    return coords


class PatchRefinerLike(Protocol):
    def refine_patch(self, stack: np.ndarray) -> np.ndarray:
        """(C+1, 32, 32) image+coarse stack -> (32, 32) refined matte."""
        ...


def window_origin(center: int, length: int) -> int:
    """Top/left of a WINDOW-long span centered at `center`, clamped inside."""
    return min(max(center - WINDOW // 2, 0), length - WINDOW)


def refine_matte(
    coarse: np.ndarray,
    mask: np.ndarray,
    refiner: PatchRefinerLike,
    image: np.ndarray,
) -> np.ndarray:
    """Refine 32x32 windows centered on selected (thinned) pixels.

    Overlapping windows are averaged with uniform weights; pixels
    outside every window keep their coarse values. Output is clamped
    to [0, 1] float32.
    """
    if coarse.shape != mask.shape:
        raise ValueError("coarse/mask shapes disagree")
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 2:
        img = img[None]
    h, w = coarse.shape
    if h < WINDOW or w < WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {WINDOW} window")
    acc = np.zeros((h, w), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int64)
    for cy, cx in thin_selection(mask):
        y0 = window_origin(cy, h)
        x0 = window_origin(cx, w)
        stack = np.concatenate(
            [
                img[:, y0 : y0 + WINDOW, x0 : x0 + WINDOW],
                coarse[None, y0 : y0 + WINDOW, x0 : x0 + WINDOW],
            ],
            axis=0,
        )
        patch = refiner.refine_patch(stack)
        acc[y0 : y0 + WINDOW, x0 : x0 + WINDOW] += patch.astype(np.float64)
        cnt[y0 : y0 + WINDOW, x0 : x0 + WINDOW] += 1
    out = np.asarray(coarse, dtype=np.float64).copy()
    covered = cnt > 0
    out[covered] = acc[covered] / cnt[covered]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def empirical_aleatoric(matte: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Residual second moment over a pixel set: a data-side re-estimate
    of the observation-noise variance of the matte."""
    if not mask.any():
        return 0.0
    resid = np.asarray(matte, dtype=np.float64)[mask] - np.asarray(
        gt, dtype=np.float64
    )[mask]
    return float(np.mean(resid * resid))
