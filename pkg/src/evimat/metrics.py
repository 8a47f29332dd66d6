"""Matting error metrics and uncertainty diagnostics.

SAD/MSE/MAD are straight sums and means over absolute differences in
natural units; the report layer applies the customary table scalings
(SAD by 1e-3, MSE by 1e3). Grad uses derivative-of-Gaussian gradient
magnitudes (sigma 1.4, exponent 1.4); Conn is the stepped-threshold
connectivity degradation with step 0.1. All summations use math.fsum
so results are independent of traversal order.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .filters import gaussian_deriv_kernel1d, gaussian_kernel1d, replicate_pad
from .interaction import BG, FG, TRANSITION
from .special import student_t_cdf

GRAD_SIGMA = 1.4
GRAD_EXPONENT = 1.4
CONN_STEP = 0.1
CONN_THETA = 0.15


class SingleClassError(ValueError):
    """Raised when an ROC is requested for a one-class mask."""


@dataclass
class MetricReport:
    sad: float
    mse: float
    mad: float
    grad: float
    conn: float
    sad_bf: Optional[float] = None
    sad_t: Optional[float] = None

    def to_json_dict(self) -> dict:
        """Report-layer dict with the table scale conventions applied."""
        out = {
            "sad_1e3": self.sad / 1e3,
            "mse_1e-3": self.mse * 1e3,
            "mad": self.mad,
            "grad": self.grad,
            "conn": self.conn,
            "scales": "sad_1e3 = raw_sad/1000; mse_1e-3 = raw_mse*1000",
            "raw": {"sad": self.sad, "mse": self.mse, "mad": self.mad},
        }
        if self.sad_bf is not None:
            out["sad_bf"] = self.sad_bf
        if self.sad_t is not None:
            out["sad_t"] = self.sad_t
        return out


@dataclass
class CalibrationCurve:
    levels: np.ndarray
    coverage: np.ndarray

    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.coverage - self.levels)))


def _check_dims(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")


def error_metrics(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float, float]:
    """(sad, mse, mad) in natural units."""
    _check_dims(pred, gt)
    d = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    n = d.size
    sad = math.fsum(d.ravel())
    mse = math.fsum((d * d).ravel()) / n
    mad = sad / n
    return sad, mse, mad


def trimap_from_alpha(gt: np.ndarray, delta: float = 0.05) -> np.ndarray:
    """3-code trimap (fg/bg/transition) from ground truth by the delta rule."""
    gt = np.asarray(gt, dtype=np.float32)
    out = np.full(gt.shape, TRANSITION, dtype=np.float32)
    out[gt >= 1.0 - delta] = FG
    out[gt <= delta] = BG
    return out


def region_sad(
    pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray
) -> tuple[float, float]:
    """(sad over fg+bg, sad over transition); the two sum to total sad."""
    _check_dims(pred, gt)
    _check_dims(pred, trimap)
    codes = np.unique(trimap)
    for c in codes:
        if c not in (FG, BG, TRANSITION):
            raise ValueError(f"unknown trimap code {c}")
    d = np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64))
    known = (trimap == FG) | (trimap == BG)
    sad_bf = math.fsum(d[known].ravel())
    sad_t = math.fsum(d[trimap == TRANSITION].ravel())
    return sad_bf, sad_t


# --- gradient metric ---------------------------------------------------------

def _grad_kernels() -> tuple[np.ndarray, np.ndarray]:
    g = gaussian_kernel1d(GRAD_SIGMA)
    g = np.round(g * (1 << 20)) / (1 << 20)  # same exact-tap trick as the derivative
    d = gaussian_deriv_kernel1d(GRAD_SIGMA)
    kx = np.outer(g, d)  # smooth rows, differentiate columns
    ky = np.outer(d, g)
    return kx, ky


def gradient_magnitude(img: np.ndarray) -> np.ndarray:
    """Derivative-of-Gaussian gradient magnitude (sigma 1.4).

    Correlation runs on window values relative to each center pixel;
    the kernels sum to zero, so the result is identical in exact
    arithmetic but constant images come out exactly zero in floats.
    """
    kx, ky = _grad_kernels()
    img = np.asarray(img, dtype=np.float64)
    kh, kw = kx.shape
    py, px = kh // 2, kw // 2
    padded = replicate_pad(img, py, px)
    h, w = img.shape
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw))[:h, :w]
    gx = np.empty((h, w))
    gy = np.empty((h, w))
    for r0 in range(0, h, 64):  # row blocks keep the window copies small
        r1 = min(r0 + 64, h)
        rel = windows[r0:r1] - img[r0:r1, :, None, None]
        gx[r0:r1] = np.tensordot(rel, kx, axes=([2, 3], [0, 1]))
        gy[r0:r1] = np.tensordot(rel, ky, axes=([2, 3], [0, 1]))
    return np.sqrt(gx * gx + gy * gy)


def grad_metric(pred: np.ndarray, gt: np.ndarray) -> float:
    """Sum of |grad-mag(pred) - grad-mag(gt)|^1.4."""
    _check_dims(pred, gt)
    mp_ = gradient_magnitude(np.asarray(pred, dtype=np.float64))
    mg = gradient_magnitude(np.asarray(gt, dtype=np.float64))
    return math.fsum((np.abs(mp_ - mg) ** GRAD_EXPONENT).ravel())


# --- connectivity metric -----------------------------------------------------

def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected True component; size ties go to the component
    containing the smallest row-major pixel index. Empty mask -> all False."""
    h, w = mask.shape
    labels = -np.ones((h, w), dtype=np.int32)
    best_label = -1
    best_size = 0
    next_label = 0
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or labels[y, x] >= 0:
                continue
            size = 0
            q = deque([(y, x)])
            labels[y, x] = next_label
            while q:
                cy, cx = q.popleft()
                size += 1
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and labels[ny, nx] < 0:
                        labels[ny, nx] = next_label
                        q.append((ny, nx))
            # strict > : the earlier (smaller first-pixel) component wins ties
            if size > best_size:
                best_size = size
                best_label = next_label
            next_label += 1
    return labels == best_label if best_label >= 0 else np.zeros_like(mask)


def conn_metric(pred: np.ndarray, gt: np.ndarray) -> float:
    """Stepped connectivity degradation over thresholds 0.1..0.9.

    For each pixel, record the last threshold at which it belonged to
    the largest component common to both thresholded mattes; pixels
    connected through every level keep the top threshold. Degradation
    phi = 1 - d * [d >= 0.15] with d the matte value minus that level.
    """
    _check_dims(pred, gt)
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    thresholds = [CONN_STEP * i for i in range(1, 10)]
    level = -np.ones(pred.shape, dtype=np.float64)
    prev = 0.0
    for t in thresholds:
        omega = largest_component((pred >= t) & (gt >= t))
        newly_out = (level == -1.0) & (~omega)
        level[newly_out] = prev
        prev = t
    level[level == -1.0] = thresholds[-1]
    d_pred = pred - level
    d_gt = gt - level
    phi_pred = 1.0 - d_pred * (d_pred >= CONN_THETA)
    phi_gt = 1.0 - d_gt * (d_gt >= CONN_THETA)
    return math.fsum(np.abs(phi_pred - phi_gt).ravel())


def full_report(
    pred: np.ndarray, gt: np.ndarray, trimap: np.ndarray | None = None
) -> MetricReport:
    sad, mse, mad = error_metrics(pred, gt)
    g = grad_metric(pred, gt)
    c = conn_metric(pred, gt)
    sad_bf = sad_t = None
    if trimap is not None:
        sad_bf, sad_t = region_sad(pred, gt, trimap)
    return MetricReport(sad, mse, mad, g, c, sad_bf, sad_t)


# --- uncertainty diagnostics --------------------------------------------------

def calibration(
    gamma: np.ndarray,
    omega: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    y: np.ndarray,
    levels: np.ndarray,
) -> CalibrationCurve:
    """Empirical coverage of central Student-t intervals per confidence level.

    A target y is inside the central c-interval of its marginal exactly
    when |2 F(z) - 1| <= c for the standardized residual z.
    """
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 0 or np.any(np.diff(levels) < 0):
        raise ValueError("levels must be ascending and non-empty")
    if np.any(levels < 0) or np.any(levels > 1):
        raise ValueError("levels must lie in [0, 1]")
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValueError("no data")
    gamma = np.asarray(gamma, dtype=np.float64).ravel()
    omega = np.asarray(omega, dtype=np.float64).ravel()
    alpha = np.asarray(alpha, dtype=np.float64).ravel()
    beta = np.asarray(beta, dtype=np.float64).ravel()
    scale = np.sqrt(beta * (1.0 + omega) / (omega * alpha))
    z = (y - gamma) / scale
    central = np.abs(2.0 * student_t_cdf(z, 2.0 * alpha) - 1.0)
    coverage = np.array([(central <= c).mean() for c in levels])
    return CalibrationCurve(levels, coverage)


def roc_auc(score: np.ndarray, gt_mask: np.ndarray) -> float:
    """Rank-statistic AUC (Mann-Whitney with midranks for ties)."""
    s = np.asarray(score, dtype=np.float64).ravel()
    m = np.asarray(gt_mask, dtype=bool).ravel()
    n_pos = int(m.sum())
    n_neg = m.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("mask needs both classes")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(m.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < m.size:
        j = i
        while j + 1 < m.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[m].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def uncertainty_bin_fractions(
    uncertainty: np.ndarray, mask: np.ndarray, bins: int = 10
) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of mask-positive pixels per equal-width uncertainty bin.

    Returns (bin_edges, fractions); empty bins report fraction 0.
    """
    u = np.asarray(uncertainty, dtype=np.float64).ravel()
    m = np.asarray(mask, dtype=bool).ravel()
    lo, hi = float(u.min()), float(u.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.floor((u - lo) / (hi - lo) * bins).astype(int), 0, bins - 1)
    fractions = np.zeros(bins)
    for b in range(bins):
        sel = idx == b
        if sel.any():
            fractions[b] = m[sel].mean()
    return edges, fractions
