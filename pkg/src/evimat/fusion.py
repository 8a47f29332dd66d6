"""Closed-form summation of NIG opinions.

Two NIG distributions combine into one by pooling virtual observations:
the means are omega-weighted, the evidence parameters accumulate, and
beta picks up the omega-weighted spread of the pooled means. Applied
per pixel and left-folded over interaction rounds.

The arithmetic is arranged so that swapping the operands produces
bitwise-identical results (single commutative additions only).
"""

from __future__ import annotations

import numpy as np

from .nig import NIGMap, NIGParams


def _fuse_values(g1, w1, a1, b1, g2, w2, a2, b2):
    w = w1 + w2
    g = (w1 * g1 + w2 * g2) / w
    a = (a1 + a2) + 0.5
    d1 = g1 - g
    d2 = g2 - g
    spread = (0.5 * w1) * (d1 * d1) + (0.5 * w2) * (d2 * d2)
    b = (b1 + b2) + spread
    return g, w, a, b


def fuse_pair(a: NIGParams, b: NIGParams) -> NIGParams:
    g, w, al, be = _fuse_values(
        a.gamma, a.omega, a.alpha, a.beta, b.gamma, b.omega, b.alpha, b.beta
    )
    return NIGParams(g, w, al, be)


def fuse_map_pair(a: NIGMap, b: NIGMap) -> NIGMap:
    if a.shape != b.shape:
        raise ValueError(f"cannot fuse maps of shapes {a.shape} and {b.shape}")
    g, w, al, be = _fuse_values(
        a.gamma.astype(np.float64),
        a.omega.astype(np.float64),
        a.alpha.astype(np.float64),
        a.beta.astype(np.float64),
        b.gamma.astype(np.float64),
        b.omega.astype(np.float64),
        b.alpha.astype(np.float64),
        b.beta.astype(np.float64),
    )
    return NIGMap(
        g.astype(np.float32),
        w.astype(np.float32),
        al.astype(np.float32),
        be.astype(np.float32),
    )


def fuse_fold(maps: list[NIGMap]) -> NIGMap:
    """Left fold of fuse over interaction-round order; [m] returns m."""
    if not maps:
        raise ValueError("fuse_fold needs at least one map")
    out = maps[0]
    for m in maps[1:]:
        out = fuse_map_pair(out, m)
    return out


def fuse_fold_params(params: list[NIGParams]) -> NIGParams:
    if not params:
        raise ValueError("fuse_fold needs at least one opinion")
    out = params[0]
    for p in params[1:]:
        out = fuse_pair(out, p)
    return out
