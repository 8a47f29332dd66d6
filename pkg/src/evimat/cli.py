"""Command-line entry points.

Subcommands: gen-data, train-stage1, train-stage2, predict,
interact (--oracle | --serve), refine, eval, calib. Fixture files are
read from/written to --out-dir (or $DUG_DATA_DIR). Runs with a fixed
--seed write byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import gen_composites, gen_cubic
from .interaction import InteractionConfig, run_oracle_round, start_session
from .metrics import calibration, full_report, trimap_from_alpha
from .models import (
    Stage1Config,
    Stage2Config,
    load_checkpoint,
    make_predictor,
    save_checkpoint,
    train_stage1,
    train_stage2,
)
from .nig import NIGMap, activate_arrays, map_moments
from .raster import Raster, load_fras, minmax_normalize, save_fras, save_png8


def _data_dir(args) -> Path:
    if getattr(args, "out_dir", None):
        return Path(args.out_dir)
    return Path(os.environ.get("DUG_DATA_DIR", "data"))


def _dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if path is not None:
        path.write_text(text + "\n")
    return text


def _save_nig_map(m: NIGMap, path: Path) -> None:
    save_fras(Raster(np.stack([m.gamma, m.omega, m.alpha, m.beta])), path)


def _load_nig_map(path: Path) -> NIGMap:
    r = load_fras(path)
    if r.channels != 4:
        raise ValueError(f"{path}: expected 4-channel NIG raster")
    return NIGMap(r.data[0], r.data[1], r.data[2], r.data[3])


def cmd_gen_data(args) -> int:
    out = _data_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    samples = gen_composites(args.n, args.size, seed=args.seed)
    for i, s in enumerate(samples):
        save_fras(Raster(s.image), out / f"image_{i:03d}.fras")
        save_fras(Raster(s.alpha), out / f"alpha_{i:03d}.fras")
        save_png8(Raster(s.image), out / f"image_{i:03d}.png")
        save_png8(Raster(s.alpha), out / f"alpha_{i:03d}.png")
    print(_dump_json({"written": len(samples), "dir": str(out)}))
    return 0


def cmd_train_stage1(args) -> int:
    cfg = Stage1Config(
        dataset=args.dataset,
        steps=args.steps,
        lam=args.lam,
        seed=args.seed,
        n_train=args.n_train,
        image_size=args.size,
        n_points=args.n_points,
        noise_sigma=args.noise_sigma,
    )
    res = train_stage1(cfg)
    out = Path(args.checkpoint)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        res.model,
        out,
        meta={"seed": cfg.seed, "steps": cfg.steps, "dataset": cfg.dataset,
              "lam": cfg.lam, "final_loss": res.losses[-1]},
    )
    print(_dump_json({
        "checkpoint": str(out),
        "seconds": round(res.seconds, 3),
        "first_loss": res.losses[0],
        "final_loss": res.losses[-1],
    }))
    return 0


def cmd_train_stage2(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    cfg = Stage2Config(steps=args.steps, seed=args.seed, image_size=args.size)
    res = train_stage2(cfg, model)
    out = Path(args.refiner)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        res.refiner, out,
        meta={"seed": cfg.seed, "steps": cfg.steps, "n_patches": res.n_patches},
    )
    print(_dump_json({
        "refiner": str(out),
        "seconds": round(res.seconds, 3),
        "n_patches": res.n_patches,
        "final_loss": res.losses[-1],
    }))
    return 0


def _load_fixture(args):
    """(image raster, gt alpha or None) from flags or a generated composite."""
    if args.image:
        image = load_fras(args.image)
        gt = load_fras(args.gt).plane(0) if getattr(args, "gt", None) else None
        return image, gt
    sample = gen_composites(1, args.size, seed=args.seed)[0]
    return Raster(sample.image), sample.alpha


def cmd_predict(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    image, _ = _load_fixture(args)
    user_map = (
        load_fras(args.user_map).plane(0)
        if args.user_map
        else np.zeros((image.height, image.width), dtype=np.float32)
    )
    nig = make_predictor(model)(image, user_map)
    out = _data_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    _save_nig_map(nig, out / "nig.fras")
    aleatoric, epistemic, _ = map_moments(nig)
    save_png8(Raster(np.clip(nig.gamma, 0, 1)), out / "gamma.png")
    save_png8(Raster(minmax_normalize(epistemic).astype(np.float32)), out / "epistemic.png")
    save_png8(Raster(minmax_normalize(aleatoric).astype(np.float32)), out / "aleatoric.png")
    save_fras(Raster(epistemic), out / "epistemic.fras")
    save_fras(Raster(aleatoric), out / "aleatoric.fras")
    print(_dump_json({"out_dir": str(out)}))
    return 0


def _interaction_config(args) -> InteractionConfig:
    return InteractionConfig(
        k_grid=args.k_grid, top_n=args.top_n, threshold_scale=args.threshold_scale
    )


def cmd_interact(args) -> int:
    if not args.oracle and not args.serve:
        print("interact: pass --oracle or --serve", file=sys.stderr)
        return 2
    model, _ = load_checkpoint(args.checkpoint)
    predictor = make_predictor(model)
    image, gt = _load_fixture(args)
    cfg = _interaction_config(args)

    if args.serve:
        from .service import SessionState, serve_forever

        state = SessionState(
            image, predictor, gt, cfg,
            expose_oracle=args.expose_oracle, session_id=f"seed{args.seed}",
        )
        serve_forever(state, args.port, static_dir=args.static_dir)
        return 0

    if gt is None:
        print("interact --oracle needs ground truth (--gt or generated fixture)",
              file=sys.stderr)
        return 1
    out = _data_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    session = start_session(image, predictor, gt, cfg)
    sads = [float(np.abs(session.fused.gamma.astype(np.float64) - gt).sum())]
    save_png8(Raster(np.clip(session.fused.gamma, 0, 1)), out / "round0_gamma.png")
    _save_nig_map(session.fused, out / "round0_fused.fras")
    for r in range(args.rounds):
        session = run_oracle_round(session, predictor)
        sads.append(float(np.abs(session.fused.gamma.astype(np.float64) - gt).sum()))
        save_png8(
            Raster(np.clip(session.fused.gamma, 0, 1)), out / f"round{session.round}_gamma.png"
        )
        _save_nig_map(session.fused, out / f"round{session.round}_fused.fras")
    summary = {
        "pre_sad": sads[0],
        "post_sad": sads[-1],
        "sad_by_round": sads,
        "rounds": args.rounds,
        "improved": sads[-1] < sads[0],
    }
    _dump_json(summary, out / "session.json")
    print(_dump_json(summary))
    return 0


def cmd_refine(args) -> int:
    from .nig import map_moments as _moments
    from .refine import refine_matte, sample_coarse_plane, select_pixels

    model, _ = load_checkpoint(args.checkpoint)
    refiner, _ = load_checkpoint(args.refiner)
    image, gt = _load_fixture(args)
    user_map = (
        load_fras(args.user_map).plane(0)
        if args.user_map
        else np.zeros((image.height, image.width), dtype=np.float32)
    )
    nig = make_predictor(model)(image, user_map)
    aleatoric, _, var_s2 = _moments(nig)
    coarse = sample_coarse_plane(nig.gamma, aleatoric, seed=args.seed)
    mask = select_pixels(aleatoric, var_s2)
    refined = refine_matte(coarse, mask, refiner, image.plane(0))
    out = _data_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    save_fras(Raster(coarse), out / "coarse.fras")
    save_fras(Raster(refined), out / "refined.fras")
    save_png8(Raster(coarse), out / "coarse.png")
    save_png8(Raster(refined), out / "refined.png")
    summary = {"out_dir": str(out), "selected": int(mask.sum())}
    if gt is not None:
        summary["coarse_sad"] = float(np.abs(coarse.astype(np.float64) - gt).sum())
        summary["refined_sad"] = float(np.abs(refined.astype(np.float64) - gt).sum())
    print(_dump_json(summary))
    return 0


def cmd_eval(args) -> int:
    pred = load_fras(args.pred).plane(0)
    gt = load_fras(args.gt).plane(0)
    trimap = load_fras(args.trimap).plane(0) if args.trimap else trimap_from_alpha(gt)
    report = full_report(pred, gt, trimap)
    print(_dump_json(report.to_json_dict()))
    return 0


def cmd_calib(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    data = gen_cubic(args.n_points, noise_sigma=args.noise_sigma, seed=args.seed)
    raw = model.raw_forward(data.x[:, None])
    g, w, a, b = activate_arrays(raw.T)
    levels = np.linspace(0.0, 1.0, 11)
    curve = calibration(g, w, a, b, data.y, levels)
    print(_dump_json({
        "levels": [float(v) for v in curve.levels],
        "coverage": [float(v) for v in curve.coverage],
        "max_deviation": curve.max_deviation(),
    }))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="evimat",
        description="Evidential interactive matting, desk scale.",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--out-dir", default=None,
                       help="artifact directory (default $DUG_DATA_DIR or ./data)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("gen-data", help="write synthetic composites")
    common(p)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-stage1", help="train the evidential model")
    common(p)
    p.add_argument("--dataset", choices=["cubic", "composites"], default="composites")
    p.add_argument("--steps", type=int, default=1500)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--n-train", type=int, default=40)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--n-points", type=int, default=256)
    p.add_argument("--noise-sigma", type=float, default=3.0)
    p.add_argument("--checkpoint", required=True, help="output checkpoint path")
    p.set_defaults(fn=cmd_train_stage1)

    p = sub.add_parser("train-stage2", help="train the patch refiner")
    common(p, checkpoint=True)
    p.add_argument("--steps", type=int, default=600)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--refiner", required=True, help="output refiner path")
    p.set_defaults(fn=cmd_train_stage2)

    p = sub.add_parser("predict", help="run the model on an image")
    common(p, checkpoint=True)
    p.add_argument("--image", default=None, help="input FRAS (default: generated fixture)")
    p.add_argument("--user-map", default=None)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("interact", help="interaction loop (oracle or HTTP)")
    common(p, checkpoint=True)
    p.add_argument("--oracle", action="store_true", help="simulated-user rounds")
    p.add_argument("--serve", action="store_true", help="HTTP session service")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--image", default=None)
    p.add_argument("--gt", default=None)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--k-grid", type=int, default=16)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--threshold-scale", type=float, default=1.5)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--static-dir", default=None, help="serve the web UI from here")
    p.add_argument("--expose-oracle", action="store_true",
                   help="include oracle labels in proposals (testing)")
    p.set_defaults(fn=cmd_interact)

    p = sub.add_parser("refine", help="aleatoric-guided patch refinement")
    common(p, checkpoint=True)
    p.add_argument("--refiner", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--user-map", default=None)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(fn=cmd_refine)

    p = sub.add_parser("eval", help="metrics between two mattes")
    common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--trimap", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("calib", help="calibration curve on fresh cubic data")
    common(p, checkpoint=True)
    p.add_argument("--n-points", type=int, default=2000)
    p.add_argument("--noise-sigma", type=float, default=3.0)
    p.set_defaults(fn=cmd_calib)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"evimat: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
