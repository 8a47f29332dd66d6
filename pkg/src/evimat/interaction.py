"""Epistemic-uncertainty-guided interaction.

The loop: average the epistemic map over a KxK grid, propose the most
uncertain cells above a threshold, let a user (or the ground-truth
oracle) assign fg/bg/transition labels, write those into the user map,
re-run the predictor and fuse the new opinion with the history.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .fusion import fuse_fold
from .nig import NIGMap, map_moments
from .raster import Raster

# user map codes (fg / bg / transition / unlabeled)
FG = 1.0
BG = -1.0
TRANSITION = 0.5
UNKNOWN = 0.0
USER_MAP_CODES = (BG, UNKNOWN, TRANSITION, FG)

# a patch counts as pure fg/bg when every alpha is within this margin
ORACLE_DELTA = 0.05

LABEL_CODES = {"fg": FG, "bg": BG, "transition": TRANSITION}

Predictor = Callable[[Raster, np.ndarray], NIGMap]


@dataclass(frozen=True)
class PatchProposal:
    grid_row: int
    grid_col: int
    x0: int
    y0: int
    x1: int  # half-open
    y1: int  # half-open
    mean_uncertainty: float


@dataclass
class InteractionSession:
    image: Raster
    user_map: np.ndarray
    history: list[NIGMap]
    fused: NIGMap
    round: int = 0
    gt_alpha: Optional[np.ndarray] = None
    config: "InteractionConfig | None" = None


@dataclass(frozen=True)
class InteractionConfig:
    k_grid: int = 16
    top_n: int = 10
    threshold_scale: float = 1.5  # t = scale * mean patch uncertainty


def new_user_map(height: int, width: int) -> np.ndarray:
    return np.zeros((height, width), dtype=np.float32)


def validate_user_map(u: np.ndarray) -> None:
    ok = np.isin(u, np.array(USER_MAP_CODES, dtype=u.dtype))
    if not ok.all():
        bad = np.unique(u[~ok])
        raise ValueError(f"user map holds non-code values {bad[:8]}")


def cell_bounds(length: int, k: int):
    """Half-open 1-d cell bounds; the last cell absorbs the remainder."""
    base = length // k
    bounds = []
    for i in range(k):
        lo = i * base
        hi = (i + 1) * base if i < k - 1 else length
        bounds.append((lo, hi))
    return bounds


def patch_means(epistemic: np.ndarray, k: int) -> np.ndarray:
    """KxK grid of per-cell means of the epistemic plane."""
    h, w = epistemic.shape
    if k < 1:
        raise ValueError("grid size must be >= 1")
    if k > h or k > w:
        raise ValueError(f"grid {k} exceeds image dims {h}x{w}")
    rows = cell_bounds(h, k)
    cols = cell_bounds(w, k)
    grid = np.empty((k, k), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            grid[i, j] = float(epistemic[r0:r1, c0:c1].mean(dtype=np.float64))
    return grid


def propose(
    grid: np.ndarray, epistemic_shape: tuple[int, int], t: float, n: int
) -> list[PatchProposal]:
    """Cells with mean > t, sorted by mean descending, at most n.

    Ties break toward the lower row-major cell index.
    """
    if t < 0:
        raise ValueError("threshold must be >= 0")
    if n < 1:
        raise ValueError("max proposals must be >= 1")
    k = grid.shape[0]
    h, w = epistemic_shape
    rows = cell_bounds(h, k)
    cols = cell_bounds(w, k)
    flat = grid.ravel()
    candidates = [i for i in range(flat.size) if flat[i] > t]
    candidates.sort(key=lambda i: (-flat[i], i))
    out = []
    for idx in candidates[:n]:
        gi, gj = divmod(idx, k)
        (y0, y1), (x0, x1) = rows[gi], cols[gj]
        out.append(PatchProposal(gi, gj, x0, y0, x1, y1, float(flat[idx])))
    return out


def proposal_threshold(grid: np.ndarray, scale: float) -> float:
    return float(scale * grid.mean(dtype=np.float64))


def apply_label(u: np.ndarray, p: PatchProposal, label: str) -> np.ndarray:
    """Return a copy of the user map with the proposal rectangle set."""
    if label not in LABEL_CODES:
        raise ValueError(f"unknown label {label!r}")
    h, w = u.shape
    if not (0 <= p.x0 < p.x1 <= w and 0 <= p.y0 < p.y1 <= h):
        raise ValueError(f"proposal {p} out of bounds for {h}x{w}")
    out = u.copy()
    out[p.y0 : p.y1, p.x0 : p.x1] = LABEL_CODES[label]
    return out


def oracle_label(gt_alpha: np.ndarray, p: PatchProposal) -> str:
    """Simulated user: pure-fg/bg patches by the delta rule, else transition."""
    patch = gt_alpha[p.y0 : p.y1, p.x0 : p.x1]
    if np.all(patch >= 1.0 - ORACLE_DELTA):
        return "fg"
    if np.all(patch <= ORACLE_DELTA):
        return "bg"
    return "transition"


def start_session(
    image: Raster,
    predictor: Predictor,
    gt_alpha: np.ndarray | None = None,
    config: InteractionConfig | None = None,
) -> InteractionSession:
    """Round-0 session: empty user map, single prediction in history."""
    user_map = new_user_map(image.height, image.width)
    first = predictor(image, user_map)
    return InteractionSession(
        image=image,
        user_map=user_map,
        history=[first],
        fused=fuse_fold([first]),
        round=0,
        gt_alpha=gt_alpha,
        config=config or InteractionConfig(),
    )


def session_proposals(s: InteractionSession) -> list[PatchProposal]:
    """Proposals for the current round, from the fused epistemic map."""
    cfg = s.config or InteractionConfig()
    _, epistemic, _ = map_moments(s.fused)
    grid = patch_means(epistemic, cfg.k_grid)
    t = proposal_threshold(grid, cfg.threshold_scale)
    return propose(grid, epistemic.shape, t, cfg.top_n)


def run_round(
    s: InteractionSession,
    predictor: Predictor,
    labels: list[tuple[PatchProposal, str]],
) -> InteractionSession:
    """Apply labels, re-predict, fuse into history, advance the round."""
    user_map = s.user_map
    for p, label in labels:
        user_map = apply_label(user_map, p, label)
    pred = predictor(s.image, user_map)
    if pred.shape != s.fused.shape:
        raise ValueError(
            f"predictor returned {pred.shape}, session is {s.fused.shape}"
        )
    history = s.history + [pred]
    return replace(
        s,
        user_map=user_map,
        history=history,
        fused=fuse_fold(history),
        round=s.round + 1,
    )


def run_oracle_round(s: InteractionSession, predictor: Predictor) -> InteractionSession:
    """One round with all proposals labeled by the ground-truth oracle."""
    if s.gt_alpha is None:
        raise ValueError("oracle round needs gt_alpha on the session")
    labels = [(p, oracle_label(s.gt_alpha, p)) for p in session_proposals(s)]
    return run_round(s, predictor, labels)
