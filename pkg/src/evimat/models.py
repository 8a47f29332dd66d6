"""Trainable desk-scale models and the two-stage optimization.

Stage 1 fits the evidential head (a tiny conv net for matting, an MLP
for the cubic toy) by minimizing the NIG loss with Adam and a cosine
schedule, drawing a fresh random user map every iteration. Stage 2
freezes those parameters and trains the 32x32 patch refiner on crops
chosen by the aleatoric selection rule, with L1 matte + L1 gradient
losses. Training math is float64; predictors run float32.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CubicDataset, MattingSample, gen_composites, gen_cubic, sample_train_usermap
from .nig import (
    NIGMap,
    activate_arrays,
    activate_grads,
    map_moments,
    nll_arrays,
    nll_grad_arrays,
    regularizer_arrays,
    regularizer_grad_arrays,
)
from .nn import AdamCosine, Conv1x1, Conv3x3, Dense, ReLU, Sequential
from .raster import Raster
from .refine import sample_coarse_plane, select_pixels, thin_selection, WINDOW


class TrainingError(RuntimeError):
    """Raised when optimization produces non-finite losses."""


# --- architectures -----------------------------------------------------------

class MattingModel:
    """4 conv layers (3x3, 16 ch, ReLU) over image+usermap, then a 1x1
    head producing the four raw evidential channels per pixel."""

    kind = "matting"

    def __init__(self, in_channels: int = 2, width: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.width = width
        self.net = Sequential(
            [
                Conv3x3(in_channels, width, rng),
                ReLU(),
                Conv3x3(width, width, rng),
                ReLU(),
                Conv3x3(width, width, rng),
                ReLU(),
                Conv3x3(width, width, rng),
                ReLU(),
                Conv1x1(width, 4, rng),
            ]
        )

    def arch(self) -> dict:
        return {"in_channels": self.in_channels, "width": self.width}

    def raw_forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)


class CubicModel:
    """MLP 1 -> 64 -> 64 -> 4 raw evidential outputs."""

    kind = "cubic"

    def __init__(self, hidden: int = 64, x_scale: float = 4.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.hidden = hidden
        self.x_scale = x_scale
        self.net = Sequential(
            [
                Dense(1, hidden, rng),
                ReLU(),
                Dense(hidden, hidden, rng),
                ReLU(),
                Dense(hidden, 4, rng),
            ]
        )

    def arch(self) -> dict:
        return {"hidden": self.hidden, "x_scale": self.x_scale}

    def raw_forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x / self.x_scale)


class PatchRefiner:
    """3 conv layers (3x3, 8 ch) over image+coarse, sigmoid matte out."""

    kind = "refiner"

    def __init__(self, in_channels: int = 2, width: int = 8, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.in_channels = in_channels
        self.width = width
        self.net = Sequential(
            [
                Conv3x3(in_channels, width, rng),
                ReLU(),
                Conv3x3(width, width, rng),
                ReLU(),
                Conv3x3(width, 1, rng),
            ]
        )

    def arch(self) -> dict:
        return {"in_channels": self.in_channels, "width": self.width}

    def raw_forward(self, x: np.ndarray) -> np.ndarray:
        return self.net.forward(x)

    def refine_patch(self, stack: np.ndarray) -> np.ndarray:
        """(C+1, 32, 32) image+coarse stack -> (32, 32) matte in [0, 1]."""
        dtype = self.net.layers[0].w.dtype
        raw = self.raw_forward(stack[None].astype(dtype))[0, 0]
        return (1.0 / (1.0 + np.exp(-raw))).astype(np.float32)


_MODEL_KINDS = {
    "matting": lambda arch: MattingModel(**arch),
    "cubic": lambda arch: CubicModel(**arch),
    "refiner": lambda arch: PatchRefiner(**arch),
}


# --- parameter plumbing -------------------------------------------------------

def named_params(model) -> dict[str, np.ndarray]:
    out = {}
    for i, layer in enumerate(model.net.layers):
        for j, p in enumerate(layer.params()):
            out[f"layer{i}.p{j}"] = p
    return out


def params_checksum(model) -> str:
    h = hashlib.sha256()
    for name, p in sorted(named_params(model).items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()


def clone_float32(model):
    """Inference copy with float32 parameters."""
    out = copy.deepcopy(model)
    for layer in out.net.layers:
        if hasattr(layer, "w"):
            layer.w = layer.w.astype(np.float32)
            layer.b = layer.b.astype(np.float32)
    return out


def _param_dtype(model):
    for layer in model.net.layers:
        if hasattr(layer, "w"):
            return layer.w.dtype
    return np.float64


# --- checkpoints ---------------------------------------------------------------

_CKPT_MAGIC = b"EVCK"


def save_checkpoint(model, path: str | Path, meta: dict | None = None) -> None:
    tensors = named_params(model)
    manifest = {
        "kind": model.kind,
        "arch": model.arch(),
        "meta": meta or {},
        "tensors": [
            {"name": name, "shape": list(p.shape)} for name, p in tensors.items()
        ],
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f8").tobytes() for p in tensors.values()
    )
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(payload)


def load_checkpoint(path: str | Path):
    blob = Path(path).read_bytes()
    if blob[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    (mlen,) = struct.unpack_from("<I", blob, 4)
    manifest = json.loads(blob[8 : 8 + mlen].decode())
    model = _MODEL_KINDS[manifest["kind"]](manifest["arch"])
    offset = 8 + mlen
    params = named_params(model)
    for spec in manifest["tensors"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        params[spec["name"]][...] = arr
        offset += 8 * n
    return model, manifest["meta"]


# --- evidential head loss ------------------------------------------------------

def head_loss_and_grad(raw: np.ndarray, y: np.ndarray, lam: float):
    """Mean NIG loss over all entries of channels-last raw output.

    raw: (..., 4); y: (...,). Returns (loss, d loss / d raw).
    """
    r4 = np.moveaxis(raw, -1, 0)  # (4, ...)
    g, w, a, b = activate_arrays(r4)
    per = nll_arrays(y, g, w, a, b)
    if lam:
        per = per + lam * regularizer_arrays(y, g, w, a)
    loss = float(per.mean())
    if not math.isfinite(loss):
        raise TrainingError("non-finite loss; training diverged")
    dg, dw, da, db = nll_grad_arrays(y, g, w, a, b)
    if lam:
        rg, rw, ra, rb = regularizer_grad_arrays(y, g, w, a)
        dg = dg + lam * rg
        dw = dw + lam * rw
        da = da + lam * ra
        db = db + lam * rb
    ag, aw, aa, ab = activate_grads(r4)
    scale = 1.0 / per.size
    draw = np.stack([dg * ag, dw * aw, da * aa, db * ab], axis=-1) * scale
    return loss, draw


def predict_map(model, image: Raster, user_map: np.ndarray) -> NIGMap:
    """Run the evidential net on (image, user map); float32 NIGMap out."""
    if user_map.shape != (image.height, image.width):
        raise ValueError("user map does not match image dimensions")
    x = np.concatenate([image.data, user_map[None].astype(np.float32)], axis=0)
    raw = model.raw_forward(x[None].astype(_param_dtype(model)))[0]  # (4, H, W)
    g, w, a, b = activate_arrays(raw)
    return NIGMap(
        g.astype(np.float32),
        w.astype(np.float32),
        a.astype(np.float32),
        b.astype(np.float32),
    )


def make_predictor(model):
    """Float32 inference closure for the interaction loop."""
    snap = clone_float32(model)

    def predictor(image: Raster, user_map: np.ndarray) -> NIGMap:
        return predict_map(snap, image, user_map)

    return predictor


# --- stage 1 --------------------------------------------------------------------

@dataclass
class Stage1Config:
    dataset: str = "composites"  # or "cubic"
    steps: int = 1500
    lr0: float = 1e-3
    lam: float = 0.01
    seed: int = 0
    batch: int = 4
    n_train: int = 40
    image_size: int = 64
    n_points: int = 256
    x_range: tuple[float, float] = (-4.0, 4.0)
    noise_sigma: float = 3.0
    width: int = 16
    hidden: int = 64


@dataclass
class Stage1Result:
    model: object
    losses: list[float]
    seconds: float
    cubic_data: CubicDataset | None = None
    composites: list[MattingSample] = field(default_factory=list)


def train_stage1(cfg: Stage1Config) -> Stage1Result:
    if cfg.dataset == "cubic":
        return _train_cubic(cfg)
    if cfg.dataset == "composites":
        return _train_matting(cfg)
    raise ValueError(f"unknown dataset {cfg.dataset!r}")


def _train_cubic(cfg: Stage1Config) -> Stage1Result:
    t0 = time.perf_counter()
    data = gen_cubic(cfg.n_points, cfg.x_range, cfg.noise_sigma, seed=cfg.seed)
    model = CubicModel(
        hidden=cfg.hidden,
        x_scale=max(abs(cfg.x_range[0]), abs(cfg.x_range[1])),
        seed=cfg.seed + 1,
    )
    opt = AdamCosine(model.net.params(), cfg.lr0, cfg.steps)
    x = data.x[:, None]
    y = data.y
    losses = []
    for t in range(cfg.steps):
        model.net.zero_grads()
        raw = model.raw_forward(x)
        loss, draw = head_loss_and_grad(raw, y, cfg.lam)
        losses.append(loss)
        model.net.backward(draw)
        opt.step(model.net.grads(), t)
    return Stage1Result(model, losses, time.perf_counter() - t0, cubic_data=data)


def _train_matting(cfg: Stage1Config) -> Stage1Result:
    t0 = time.perf_counter()
    model = MattingModel(in_channels=2, width=cfg.width, seed=cfg.seed + 1)
    opt = AdamCosine(model.net.params(), cfg.lr0, cfg.steps)
    rng = np.random.default_rng(cfg.seed + 2)
    # synthetic pool regenerated every epoch (stand-in for augmentation)
    epoch_len = max(1, cfg.n_train // cfg.batch)
    pool: list[MattingSample] = []
    losses = []
    for t in range(cfg.steps):
        if t % epoch_len == 0:
            pool = gen_composites(
                cfg.n_train, cfg.image_size, seed=cfg.seed + 1000 + t // epoch_len
            )
        idx = rng.integers(0, len(pool), size=cfg.batch)
        xs = []
        ys = []
        for i in idx:
            s = pool[int(i)]
            u = sample_train_usermap(s.alpha, rng)  # fresh map each iteration
            xs.append(np.stack([s.image.astype(np.float64), u.astype(np.float64)]))
            ys.append(s.alpha.astype(np.float64))
        x = np.stack(xs)
        y = np.stack(ys)
        model.net.zero_grads()
        raw = model.raw_forward(x)  # (B, 4, H, W)
        loss, draw = head_loss_and_grad(np.moveaxis(raw, 1, -1), y, cfg.lam)
        losses.append(loss)
        model.net.backward(np.moveaxis(draw, -1, 1))
        opt.step(model.net.grads(), t)
    return Stage1Result(model, losses, time.perf_counter() - t0, composites=pool)


# --- stage 2 --------------------------------------------------------------------

@dataclass
class Stage2Config:
    steps: int = 600
    lr0: float = 1e-3
    batch: int = 16
    seed: int = 100
    n_train: int = 40
    image_size: int = 64
    coarse_seed: int = 7


@dataclass
class Stage2Result:
    refiner: PatchRefiner
    losses: list[float]
    seconds: float
    n_patches: int


def _forward_diffs(x: np.ndarray):
    gx = np.zeros_like(x)
    gy = np.zeros_like(x)
    gx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    gy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return gx, gy


def _forward_diffs_backward(dgx: np.ndarray, dgy: np.ndarray) -> np.ndarray:
    dx = np.zeros_like(dgx)
    dx[..., :, 1:] += dgx[..., :, :-1]
    dx[..., :, :-1] -= dgx[..., :, :-1]
    dx[..., 1:, :] += dgy[..., :-1, :]
    dx[..., :-1, :] -= dgy[..., :-1, :]
    return dx


def stage2_loss_and_grad(pred: np.ndarray, target: np.ndarray):
    """L1 matte + L1 gradient-magnitude loss, means over all pixels."""
    n = pred.size
    d = pred - target
    loss_m = float(np.abs(d).mean())
    dpred = np.sign(d) / n
    gx_p, gy_p = _forward_diffs(pred)
    gx_t, gy_t = _forward_diffs(target)
    m_p = np.sqrt(gx_p * gx_p + gy_p * gy_p)
    m_t = np.sqrt(gx_t * gx_t + gy_t * gy_t)
    e = m_p - m_t
    loss_g = float(np.abs(e).mean())
    de = np.sign(e) / n
    safe = np.maximum(m_p, 1e-12)
    dgx = de * gx_p / safe
    dgy = de * gy_p / safe
    dpred = dpred + _forward_diffs_backward(dgx, dgy)
    return loss_m + loss_g, dpred


def build_refine_patches(model, samples: list[MattingSample], coarse_seed: int):
    """Stage-2 training crops: (image+coarse stack, gt window) pairs
    chosen by the aleatoric selection rule on frozen-model predictions."""
    stacks = []
    targets = []
    predictor = make_predictor(model)
    for k, s in enumerate(samples):
        image = Raster(s.image)
        nig = predictor(image, np.zeros_like(s.image))
        aleatoric, _, var_s2 = map_moments(nig)
        coarse = sample_coarse_plane(nig.gamma, aleatoric, seed=coarse_seed + k)
        mask = select_pixels(aleatoric, var_s2)
        h, w = coarse.shape
        for cy, cx in thin_selection(mask):
            y0 = min(max(cy - WINDOW // 2, 0), h - WINDOW)
            x0 = min(max(cx - WINDOW // 2, 0), w - WINDOW)
            stacks.append(
                np.stack(
                    [
                        s.image[y0 : y0 + WINDOW, x0 : x0 + WINDOW],
                        coarse[y0 : y0 + WINDOW, x0 : x0 + WINDOW],
                    ]
                ).astype(np.float64)
            )
            targets.append(s.alpha[y0 : y0 + WINDOW, x0 : x0 + WINDOW].astype(np.float64))
    return stacks, targets


def train_stage2(cfg: Stage2Config, model) -> Stage2Result:
    """Train the patch refiner; the stage-1 parameters stay frozen."""
    t0 = time.perf_counter()
    theta_before = params_checksum(model)
    samples = gen_composites(cfg.n_train, cfg.image_size, seed=cfg.seed)
    stacks, targets = build_refine_patches(model, samples, cfg.coarse_seed)
    if not stacks:
        raise TrainingError("aleatoric selection produced no training patches")
    xs = np.stack(stacks)
    ys = np.stack(targets)
    refiner = PatchRefiner(seed=cfg.seed + 1)
    opt = AdamCosine(refiner.net.params(), cfg.lr0, cfg.steps)
    rng = np.random.default_rng(cfg.seed + 2)
    losses = []
    for t in range(cfg.steps):
        idx = rng.integers(0, len(xs), size=min(cfg.batch, len(xs)))
        xb = xs[idx]
        yb = ys[idx]
        refiner.net.zero_grads()
        raw = refiner.raw_forward(xb)[:, 0]  # (B, 32, 32)
        pred = 1.0 / (1.0 + np.exp(-raw))
        loss, dpred = stage2_loss_and_grad(pred, yb)
        losses.append(loss)
        if not math.isfinite(loss):
            raise TrainingError("non-finite stage-2 loss")
        draw = dpred * pred * (1.0 - pred)
        refiner.net.backward(draw[:, None])
        opt.step(refiner.net.grads(), t)
    if params_checksum(model) != theta_before:
        raise TrainingError("stage-2 modified frozen stage-1 parameters")
    return Stage2Result(refiner, losses, time.perf_counter() - t0, len(xs))
