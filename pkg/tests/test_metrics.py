"""Metric implementations against naive reference implementations."""

import math

import numpy as np
import pytest

from evimat.interaction import BG, FG, TRANSITION
from evimat.metrics import (
    CONN_STEP,
    CONN_THETA,
    SingleClassError,
    _grad_kernels,
    calibration,
    conn_metric,
    error_metrics,
    full_report,
    grad_metric,
    largest_component,
    region_sad,
    roc_auc,
    trimap_from_alpha,
    uncertainty_bin_fractions,
)
from evimat.special import student_t_cdf


def quantized(rng, shape, grid=1024):
    """Random matte on a 2^-10 grid: all metric sums become exact."""
    return (rng.integers(0, grid + 1, size=shape) / grid).astype(np.float64)


# --- naive references ---------------------------------------------------------

def sad_oracle(pred, gt):
    total = 0.0
    terms = []
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            terms.append(abs(float(pred[i, j]) - float(gt[i, j])))
    return math.fsum(terms)


def mse_oracle(pred, gt):
    terms = [
        (float(pred[i, j]) - float(gt[i, j])) ** 2
        for i in range(pred.shape[0])
        for j in range(pred.shape[1])
    ]
    return math.fsum(terms) / pred.size


def grad_oracle(pred, gt):
    """Dense quadruple-loop correlation with the same kernels."""
    kx, ky = _grad_kernels()

    def gradmag(img):
        h, w = img.shape
        kh, kw = kx.shape
        py, px = kh // 2, kw // 2
        padded = np.pad(img, ((py, py), (px, px)), mode="edge")
        out = np.empty((h, w))
        for i in range(h):
            for j in range(w):
                center = float(img[i, j])
                sx = []
                sy = []
                for a in range(kh):
                    for b in range(kw):
                        v = float(padded[i + a, j + b]) - center
                        sx.append(v * float(kx[a, b]))
                        sy.append(v * float(ky[a, b]))
                gx = math.fsum(sx)
                gy = math.fsum(sy)
                out[i, j] = math.sqrt(gx * gx + gy * gy)
        return out

    mp_, mg = gradmag(pred), gradmag(gt)
    return math.fsum(
        abs(float(mp_[i, j]) - float(mg[i, j])) ** 1.4
        for i in range(pred.shape[0])
        for j in range(pred.shape[1])
    )


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, a):
        while self.p[a] != a:
            self.p[a] = self.p[self.p[a]]
            a = self.p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def largest_component_oracle(mask):
    """Union-find route; same size/first-pixel tie rule."""
    h, w = mask.shape
    uf = _UnionFind(h * w)
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            if i + 1 < h and mask[i + 1, j]:
                uf.union(i * w + j, (i + 1) * w + j)
            if j + 1 < w and mask[i, j + 1]:
                uf.union(i * w + j, i * w + j + 1)
    groups = {}
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                groups.setdefault(uf.find(i * w + j), []).append((i, j))
    if not groups:
        return np.zeros_like(mask)
    best = max(groups.values(), key=lambda px: (len(px), -(px[0][0] * w + px[0][1])))
    out = np.zeros_like(mask)
    for i, j in best:
        out[i, j] = True
    return out


def conn_oracle(pred, gt):
    level = -np.ones(pred.shape)
    prev = 0.0
    for step in range(1, 10):
        t = CONN_STEP * step
        omega = largest_component_oracle((pred >= t) & (gt >= t))
        for i in range(pred.shape[0]):
            for j in range(pred.shape[1]):
                if level[i, j] == -1.0 and not omega[i, j]:
                    level[i, j] = prev
        prev = t
    level[level == -1.0] = 0.9
    terms = []
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            dp = pred[i, j] - level[i, j]
            dg = gt[i, j] - level[i, j]
            pp = 1.0 - dp * (dp >= CONN_THETA)
            pg = 1.0 - dg * (dg >= CONN_THETA)
            terms.append(abs(pp - pg))
    return math.fsum(terms)


# --- tests ---------------------------------------------------------------------

class TestErrorMetrics:
    def test_identity(self):
        x = np.random.default_rng(0).uniform(0, 1, (9, 9))
        assert error_metrics(x, x) == (0.0, 0.0, 0.0)

    def test_half_vs_one(self):
        pred = np.full((10, 10), 0.5)
        gt = np.ones((10, 10))
        sad, mse, mad = error_metrics(pred, gt)
        assert sad == 50.0 and mse == 0.25 and mad == 0.5

    def test_matches_naive_reference_exactly(self):
        rng = np.random.default_rng(1)
        for shape in [(8, 8), (17, 23), (64, 64)]:
            pred = quantized(rng, shape)
            gt = quantized(rng, shape)
            sad, mse, mad = error_metrics(pred, gt)
            assert sad == sad_oracle(pred, gt)
            assert mse == mse_oracle(pred, gt)
            assert mad == sad / pred.size

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            error_metrics(np.zeros((2, 2)), np.zeros((3, 3)))


class TestRegionSad:
    def test_all_transition(self):
        rng = np.random.default_rng(2)
        pred, gt = quantized(rng, (8, 8)), quantized(rng, (8, 8))
        trimap = np.full((8, 8), TRANSITION, dtype=np.float32)
        sad_bf, sad_t = region_sad(pred, gt, trimap)
        assert sad_bf == 0.0
        assert sad_t == error_metrics(pred, gt)[0]

    def test_identity(self):
        x = np.random.default_rng(3).uniform(0, 1, (8, 8))
        trimap = trimap_from_alpha(x)
        assert region_sad(x, x, trimap) == (0.0, 0.0)

    def test_partition_identity_exact(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            pred, gt = quantized(rng, (16, 16)), quantized(rng, (16, 16))
            codes = rng.choice([FG, BG, TRANSITION], size=(16, 16))
            sad_bf, sad_t = region_sad(pred, gt, codes)
            assert sad_bf + sad_t == error_metrics(pred, gt)[0]

    def test_unknown_code(self):
        with pytest.raises(ValueError):
            region_sad(np.zeros((2, 2)), np.zeros((2, 2)), np.full((2, 2), 0.3))


class TestGradMetric:
    def test_identity_and_constants(self):
        x = np.random.default_rng(5).uniform(0, 1, (12, 12))
        assert grad_metric(x, x) == 0.0
        assert grad_metric(np.full((8, 8), 0.3), np.full((8, 8), 0.9)) == 0.0

    def test_step_edge_matches_dense_oracle_exactly(self):
        pred = np.zeros((10, 10))
        pred[:, 5:] = 1.0
        gt = np.zeros((10, 10))
        gt[:, 4:] = 1.0
        assert grad_metric(pred, gt) == grad_oracle(pred, gt)

    def test_random_quantized_exact(self):
        rng = np.random.default_rng(6)
        pred, gt = quantized(rng, (8, 8)), quantized(rng, (8, 8))
        assert grad_metric(pred, gt) == grad_oracle(pred, gt)


class TestConnMetric:
    def test_identity(self):
        x = np.random.default_rng(7).uniform(0, 1, (8, 8))
        assert conn_metric(x, x) == 0.0

    def test_uniform_mattes(self):
        assert conn_metric(np.ones((6, 6)), np.ones((6, 6))) == 0.0

    def test_matches_exhaustive_reference(self):
        rng = np.random.default_rng(8)
        for _ in range(8):
            pred, gt = quantized(rng, (8, 8)), quantized(rng, (8, 8))
            assert conn_metric(pred, gt) == conn_oracle(pred, gt)
        # blobby fixtures with real connected structure
        for _ in range(4):
            base = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(np.float64)
            noise = quantized(rng, (8, 8)) * 0.2
            pred = np.clip(base - noise, 0, 1)
            gt = np.clip(base - quantized(rng, (8, 8)) * 0.2, 0, 1)
            assert conn_metric(pred, gt) == conn_oracle(pred, gt)

    def test_largest_component_tie_break(self):
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = True  # size-1 component, first in row-major order
        mask[2, 2] = True  # size-1 component, later
        got = largest_component(mask)
        want = largest_component_oracle(mask)
        assert np.array_equal(got, want)
        assert got[0, 0] and not got[2, 2]


class TestFullReport:
    def test_json_scales(self):
        pred = np.full((10, 10), 0.5)
        gt = np.ones((10, 10))
        rep = full_report(pred, gt, trimap_from_alpha(gt))
        d = rep.to_json_dict()
        assert d["sad_1e3"] == rep.sad / 1e3
        assert d["mse_1e-3"] == rep.mse * 1e3
        assert d["sad_bf"] + d["sad_t"] == pytest.approx(rep.sad)


class TestCalibration:
    def test_degenerate_levels(self):
        rng = np.random.default_rng(9)
        n = 500
        g = rng.uniform(0, 1, n)
        w = rng.uniform(0.5, 2, n)
        a = rng.uniform(1.5, 4, n)
        b = rng.uniform(0.1, 1, n)
        y = rng.uniform(0, 1, n)
        curve = calibration(g, w, a, b, y, np.array([0.0, 1.0]))
        assert curve.coverage[0] == 0.0
        assert curve.coverage[1] == 1.0

    def test_self_consistency_monte_carlo(self):
        # draw targets from the model's own marginal: coverage ~= level
        rng = np.random.default_rng(10)
        n = 10_000
        g = rng.uniform(0.2, 0.8, n)
        w = rng.uniform(0.5, 3, n)
        a = rng.uniform(2.0, 6, n)
        b = rng.uniform(0.05, 0.5, n)
        nu = 2 * a
        scale = np.sqrt(b * (1 + w) / (w * a))
        y = g + scale * rng.standard_t(nu)
        levels = np.linspace(0.1, 0.9, 9)
        curve = calibration(g, w, a, b, y, levels)
        assert curve.max_deviation() < 0.03

    def test_far_targets_never_covered(self):
        n = 100
        g = np.full(n, 0.5)
        w = np.full(n, 5.0)
        a = np.full(n, 5.0)
        b = np.full(n, 1e-4)
        y = np.full(n, 250.0)
        curve = calibration(g, w, a, b, y, np.array([0.1, 0.5, 0.9]))
        assert np.all(curve.coverage == 0.0)

    def test_interval_rule_against_cdf(self):
        # inside the central c-interval iff |2F(z)-1| <= c
        assert abs(2 * student_t_cdf(0.0, 4.0) - 1.0) <= 0.0 + 1e-12

    def test_errors(self):
        with pytest.raises(ValueError):
            calibration(
                np.ones(1), np.ones(1), np.full(1, 2.0), np.ones(1),
                np.array([]), np.array([0.5]),
            )
        with pytest.raises(ValueError):
            calibration(
                np.ones(1), np.ones(1), np.full(1, 2.0), np.ones(1),
                np.ones(1), np.array([0.9, 0.1]),
            )


class TestRocAuc:
    def test_perfect_separation(self):
        score = np.array([0.1, 0.2, 0.8, 0.9])
        mask = np.array([False, False, True, True])
        assert roc_auc(score, mask) == 1.0

    def test_inversion_antisymmetry(self):
        rng = np.random.default_rng(11)
        score = rng.uniform(0, 1, 300)
        mask = rng.uniform(0, 1, 300) > 0.7
        assert roc_auc(-score, mask) == pytest.approx(1.0 - roc_auc(score, mask), abs=1e-12)

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(12)
        score = rng.uniform(0, 1, 10_000)
        mask = rng.uniform(0, 1, 10_000) > 0.5
        assert abs(roc_auc(score, mask) - 0.5) < 0.02

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(13)
        score = rng.uniform(0.1, 5, 500)
        mask = rng.uniform(0, 1, 500) > 0.6
        a1 = roc_auc(score, mask)
        assert roc_auc(np.log(score), mask) == a1
        assert roc_auc(score**3, mask) == a1

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassError):
            roc_auc(np.ones(4), np.zeros(4, dtype=bool))

    def test_tied_scores_midrank(self):
        score = np.zeros(10)
        mask = np.array([True] * 5 + [False] * 5)
        assert roc_auc(score, mask) == 0.5


class TestBinFractions:
    def test_fractions(self):
        u = np.linspace(0, 1, 100)
        mask = u > 0.85
        edges, fr = uncertainty_bin_fractions(u, mask, bins=10)
        assert len(edges) == 11
        assert fr[-1] > 0.9 and np.all(fr[:-2] == 0.0)
