"""Command-line driver.

Exit codes: 0 success, 1 validation error, 2 IO error. Diagnostics go to
stderr; results go to files only.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from .grid import ScalarImage
from .metric import DEFAULT_SAMPLES, total_distance
from .phantom import SimConfig, build_sim_set
from .registration import RegParams, register
from .tsmodel import LONGITUDINAL, TEMPLATE, evaluate, fit_ts_model

log = logging.getLogger("shapepath")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _dims(text: str) -> tuple:
    """``WxH`` (or ``WxHxD``) to array dims ``(H, W[, D])``."""
    try:
        sizes = [int(x) for x in text.lower().split("x")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from exc
    if len(sizes) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected WxH or WxHxD, got {text!r}")
    return (sizes[1], sizes[0]) + tuple(sizes[2:])


def _add_reg_flags(p: argparse.ArgumentParser):
    d = RegParams()
    p.add_argument("--levels", type=int, default=d.levels)
    p.add_argument("--iters", type=int, default=d.iters_per_level)
    p.add_argument("--sigma-fluid", type=float, default=d.sigma_fluid)
    p.add_argument("--sigma-diffusion", type=float, default=d.sigma_diffusion)


def _reg(args) -> RegParams:
    return RegParams(
        levels=args.levels,
        iters_per_level=args.iters,
        sigma_fluid=args.sigma_fluid,
        sigma_diffusion=args.sigma_diffusion,
    )


def _expand_frames(items: list[str]) -> list[str]:
    paths = []
    for item in items:
        for part in item.split(","):
            part = part.strip()
            if not part:
                continue
            hits = sorted(glob.glob(part))
            if any(ch in part for ch in "*?[") and not hits:
                raise FileNotFoundError(f"no files match {part!r}")
            paths.extend(hits or [part])
    # RAWJ globs match both halves of a pair
    out = []
    for p in paths:
        key = p[:-5] if p.endswith(".json") else p[:-4] if p.endswith(".bin") else p
        if key not in out:
            out.append(key)
    return out


def _normalize(images: list[ScalarImage]) -> tuple[list[ScalarImage], float]:
    """Joint rescale so the series maximum is 1."""
    scale = max(float(np.max(np.abs(im.values))) for im in images)
    if scale == 0:
        return images, 1.0
    return [ScalarImage(im.geom, im.values.astype(np.float64) / scale) for im in images], scale


def cmd_fit(args) -> int:
    frames = [fileio.read_image(p) for p in _expand_frames(args.frames)]
    times = args.times
    if len(times) != len(frames):
        raise ValueError(f"{len(frames)} frames but {len(times)} times")
    frames, scale = _normalize(frames)
    reg = _reg(args)
    model = fit_ts_model(frames, times, args.mode, reg)
    model = replace(model, params={**model.params, "intensity_scale": scale})
    fileio.save_model(model, args.out)
    log.info("model saved to %s (m=%g, range=%s)", args.out, model.m, model.range)
    return 0


def cmd_compare(args) -> int:
    a = fileio.load_model(args.model_a)
    b = fileio.load_model(args.model_b)
    reg = _reg(args)
    interval = None
    if args.interval is not None:
        if len(args.interval) != 2:
            raise ValueError("--interval expects ta,tb")
        interval = tuple(args.interval)
    reference = "j" if args.reference == "b" else "i"
    report = total_distance(a, b, interval, reg, args.samples, reference)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = {
        "model_a": str(args.model_a),
        "model_b": str(args.model_b),
        "interval": list(interval) if interval else None,
        "samples": args.samples,
        "reference": args.reference,
        "registration": reg.to_dict(),
    }
    fileio.write_report(report, out / "report.json", params)
    fileio.write_image(report.ds_map, out / "ds_map")
    fileio.write_image(report.dp_map, out / "dp_map")
    fileio.write_field(report.shape_velocity, out / "shape_velocity")
    fileio.export_heatmap(report.ds_map, out / "ds_map.pgm")
    fileio.export_heatmap(report.dp_map, out / "dp_map.pgm")
    log.info("ds=%.6g dp=%.6g D=%.6g", report.ds, report.dp, report.total)
    return 0


def cmd_register(args) -> int:
    fixed = fileio.read_image(args.fixed)
    moving = fileio.read_image(args.moving)
    (fixed, moving), _ = _normalize([fixed, moving])
    res = register(fixed, moving, _reg(args))
    fileio.write_field(res.velocity, args.out)
    log.info("mse %.6g -> %.6g", res.initial_mse, res.final_mse)
    return 0


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        dims=args.dims,
        n_frames=args.frames,
        shape_amp=args.shape_amp,
        path_amp=args.path_amp,
        seed=args.seed,
    )
    sim = build_sim_set(args.set, cfg)
    out = Path(args.out)
    for tag, frames in (("i", sim.frames_i), ("j", sim.frames_j)):
        for k, f in enumerate(frames):
            fileio.write_image(f, out / f"ts_{tag}" / f"frame_{k:03d}")
    fileio.write_field(sim.generators["v_shape"], out / "v_shape")
    fileio.write_field(sim.generators["v_path"], out / "v_path")
    meta = {
        "schema": fileio.SCHEMA,
        "set": args.set,
        "config": {
            "dims": list(cfg.dims),
            "n_frames": cfg.n_frames,
            "shape_amp": cfg.shape_amp,
            "path_amp": cfg.path_amp,
            "sigma": cfg.sigma,
            "seed": cfg.seed,
        },
        "times_i": sim.times_i,
        "times_j": sim.times_j,
        "gammas_i": [float(g) for g in sim.generators["gammas"]],
    }
    (out / "sim.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    model = fileio.load_model(args.model)
    fileio.write_image(evaluate(model, args.t), args.out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapepath", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a continuous model to an image series")
    p.add_argument("--frames", nargs="+", required=True, help="image paths, globs or comma-separated list")
    p.add_argument("--times", type=_floats, required=True)
    p.add_argument("--mode", choices=(LONGITUDINAL, TEMPLATE), default=LONGITUDINAL)
    p.add_argument("--out", required=True)
    _add_reg_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="shape/path distance between two fitted models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--interval", type=_floats)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--reference", choices=("a", "b"), default="b")
    p.add_argument("--out", required=True)
    _add_reg_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("register", help="register two images, write the velocity field")
    p.add_argument("--fixed", required=True)
    p.add_argument("--moving", required=True)
    p.add_argument("--out", required=True)
    _add_reg_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("simulate", help="write a phantom series pair")
    p.add_argument("--set", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--frames", type=int, default=7)
    p.add_argument("--shape-amp", type=float, default=3.0)
    p.add_argument("--path-amp", type=float, default=3.0)
    p.add_argument("--dims", type=_dims, default=(128, 128))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="render a fitted model at time t")
    p.add_argument("--model", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("selftest", help="run the fast property checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except OSError as exc:
        log.error("%s", exc)
        return 2
    except ValueError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
