"""Command-line entry point.

Subcommands: train, eval, sweep, infer, preview-aug, gen-synthetic.
Every run writes a manifest (config snapshot, seed, package version) to
its output directory. Exit codes: 0 success, 2 usage error (bad flags),
3 configuration/schema error, 4 missing file or directory, 1 anything
else.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch

from . import config as cfgmod
from . import fileio
from .augmentation import augment_frame, sample_crop, sample_scales, scaled_size
from .dataset import EvalFrames, TrainingInstances, load_split
from .evaluation import (
    evaluate_frames,
    predict_depth,
    resolution_sweep,
    write_reports_csv,
    write_reports_json,
)
from .synthetic import SyntheticScene, generate_synthetic
from .training import load_depth_model, run_training

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4


def _add_schema_flags(parser):
    for key, spec in cfgmod.SCHEMA.items():
        parser.add_argument("--" + key, dest=key, metavar=spec.type.__name__.upper(),
                            help="{} (default: {})".format(spec.help, spec.default))


def _collect_overrides(args) -> dict:
    return {k: v for k, v in vars(args).items() if k in cfgmod.SCHEMA and v is not None}


def _merged_config(args) -> dict:
    layers = []
    if getattr(args, "config", None):
        layers.append(cfgmod.load_config_file(args.config))
    layers.append(_collect_overrides(args))
    return cfgmod.merge(*layers)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scaledepth",
                                     description="resolution-adaptive self-supervised monocular depth")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train depth and pose networks")
    p_train.add_argument("--config", help="YAML config file")
    p_train.add_argument("--data", help="dataset root (shortcut for --data.root)")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--ablate", action="append", default=[], choices=["as_aug", "cs_loss"],
                         help="disable a component (repeatable)")
    _add_schema_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint at one resolution")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="dataset root with ground-truth depth")
    p_eval.add_argument("--split", help="split file (default: all frames)")
    p_eval.add_argument("--resolution", required=True, help="inference resolution HxW")
    p_eval.add_argument("--out", help="report path (.json); a .csv twin is written too")
    p_eval.add_argument("--config", help="YAML config file")
    _add_schema_flags(p_eval)

    p_sweep = sub.add_parser("sweep", help="evaluate one checkpoint at several resolutions")
    p_sweep.add_argument("--checkpoint", required=True)
    p_sweep.add_argument("--data", required=True)
    p_sweep.add_argument("--split")
    p_sweep.add_argument("--resolutions", help="comma-separated HxW list (default from config)")
    p_sweep.add_argument("--out", help="output directory for reports")
    p_sweep.add_argument("--config", help="YAML config file")
    _add_schema_flags(p_sweep)

    p_infer = sub.add_parser("infer", help="predict depth for one image")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--image", required=True)
    p_infer.add_argument("--out", help="output directory")
    p_infer.add_argument("--resolution", help="inference resolution HxW (default: training size)")

    p_prev = sub.add_parser("preview-aug", help="write the three scale views of one image")
    p_prev.add_argument("--image", required=True)
    p_prev.add_argument("--seed", type=int, default=0)
    p_prev.add_argument("--out", help="output directory")
    p_prev.add_argument("--size", default="192x640", help="target size HxW")

    p_gen = sub.add_parser("gen-synthetic", help="render a synthetic sequence with exact depth/pose")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--frames", type=int, default=100)
    p_gen.add_argument("--size", default="192x320", help="rendered size HxW")
    p_gen.add_argument("--boxes", type=int, default=16)
    p_gen.add_argument("--out", help="output directory")
    return parser


def _cmd_train(args, argv) -> int:
    cfg = _merged_config(args)
    if args.data:
        cfg["data.root"] = args.data
    for name in args.ablate:
        cfg["train." + name] = False
    if not cfg["train.as_aug"]:
        cfg["train.cs_loss"] = False
    if not cfg["train.cs_loss"]:
        cfg["loss.consistency"] = 0.0
    if not cfg["data.root"]:
        raise FileNotFoundError("no dataset root given (--data or data.root)")

    out_dir = cfgmod.resolve_out_dir(args.out, cfg)
    cfg["out.dir"] = out_dir
    cfgmod.print_effective_config(cfg)
    cfgmod.write_manifest(out_dir, "train", argv, cfg)

    train_cfg = cfgmod.train_config_from(cfg)
    index = load_split(cfg["data.root"], cfg["data.train_split"] or None)
    dataset = TrainingInstances(
        index, (train_cfg.height, train_cfg.width), as_aug=train_cfg.as_aug, seed=train_cfg.seed
    )
    path = run_training(
        train_cfg,
        dataset,
        depth_config=cfgmod.depth_config_from(cfg),
        pose_config=cfgmod.pose_config_from(cfg),
        out_dir=out_dir,
    )
    print("final checkpoint: {}".format(path))
    return EXIT_OK


def _eval_frames_for(args, cfg):
    index = load_split(args.data, getattr(args, "split", None), require_neighbors=False)
    return EvalFrames(index)


def _eval_kwargs(cfg, state):
    return dict(
        min_depth=cfg["depth.min_depth"],
        max_depth=cfg["depth.max_depth"],
        eval_min_depth=cfg["eval.min_depth"],
        eval_max_depth=cfg["eval.max_depth"],
        median_scaling=cfg["eval.median_scaling"],
        eigen_crop=cfg["eval.eigen_crop"],
    )


def _cmd_eval(args, argv) -> int:
    cfg = _merged_config(args)
    resolution = cfgmod.parse_resolution(args.resolution)
    model, state = load_depth_model(args.checkpoint)
    frames = _eval_frames_for(args, cfg)
    report = evaluate_frames(model, frames, resolution, **_eval_kwargs(cfg, state))

    out = args.out or os.path.join(cfgmod.resolve_out_dir(None, cfg), "report.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    cfgmod.write_manifest(os.path.dirname(out) or ".", "eval", argv, cfg)
    write_reports_json(out, [report])
    write_reports_csv(os.path.splitext(out)[0] + ".csv", [report])
    if cfg["eval.save_viz"]:
        viz_dir = os.path.join(os.path.dirname(out) or ".", "viz")
        os.makedirs(viz_dir, exist_ok=True)
        for item in frames:
            depth = predict_depth(model, item["image"], resolution,
                                  cfg["depth.min_depth"], cfg["depth.max_depth"])
            fileio.save_depth_visualization(
                os.path.join(viz_dir, "{}_{:06d}.png".format(item["sequence"], item["frame"])), depth
            )
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK


def _cmd_sweep(args, argv) -> int:
    cfg = _merged_config(args)
    resolutions = cfgmod.parse_resolutions(args.resolutions or cfg["eval.resolutions"])
    model, state = load_depth_model(args.checkpoint)
    frames = _eval_frames_for(args, cfg)
    reports = resolution_sweep(model, frames, resolutions, **_eval_kwargs(cfg, state))

    out_dir = cfgmod.resolve_out_dir(args.out, cfg)
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.write_manifest(out_dir, "sweep", argv, cfg)
    write_reports_json(os.path.join(out_dir, "sweep.json"), reports)
    write_reports_csv(os.path.join(out_dir, "sweep.csv"), reports)
    for r in reports:
        label = "average" if r.resolution == (0, 0) else "{}x{}".format(*r.resolution)
        print("{:>12}: abs_rel {:.4f}  rmse {:.3f}  d1 {:.3f}".format(label, r.abs_rel, r.rmse, r.delta1))
    return EXIT_OK


def _cmd_infer(args, argv) -> int:
    model, state = load_depth_model(args.checkpoint)
    if args.resolution:
        resolution = cfgmod.parse_resolution(args.resolution)
    else:
        tc = state["train_config"]
        resolution = (tc["height"], tc["width"])
    image = torch.from_numpy(fileio.load_image(args.image))
    depth = predict_depth(model, image, resolution,
                          state["train_config"]["min_depth"], state["train_config"]["max_depth"])

    out_dir = cfgmod.resolve_out_dir(args.out, cfgmod.defaults())
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.write_manifest(out_dir, "infer", argv, cfgmod.defaults())
    stem = os.path.splitext(os.path.basename(args.image))[0]
    fileio.save_depth_npy(os.path.join(out_dir, stem + "_depth.npy"), depth)
    fileio.save_depth_visualization(os.path.join(out_dir, stem + "_depth_viz.png"), depth)
    print("wrote {}_depth.npy and {}_depth_viz.png to {}".format(stem, stem, out_dir))
    return EXIT_OK


def _cmd_preview_aug(args, argv) -> int:
    target = cfgmod.parse_resolution(args.size, div32=False)
    img = torch.from_numpy(fileio.load_image(args.image))
    rng = np.random.default_rng(args.seed)
    scales = sample_scales(rng)
    crop = sample_crop(rng, scaled_size(target, scales.s_high), target)
    low, mid, high = augment_frame(img, scales, crop, target)

    out_dir = cfgmod.resolve_out_dir(args.out, cfgmod.defaults())
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.write_manifest(out_dir, "preview-aug", argv, cfgmod.defaults())
    for name, view in (("low", low), ("mid", mid), ("high", high)):
        fileio.save_image(os.path.join(out_dir, "aug_{}.png".format(name)), view.numpy())
    meta = {"s_low": scales.s_low, "s_high": scales.s_high, "x0": crop.x0, "y0": crop.y0}
    with open(os.path.join(out_dir, "aug_meta.json"), "w") as f:
        json.dump(meta, f, indent=2)
    print("wrote 3 views + aug_meta.json to {}".format(out_dir))
    return EXIT_OK


def _cmd_gen_synthetic(args, argv) -> int:
    h, w = cfgmod.parse_resolution(args.size, div32=False)
    scene = SyntheticScene(seed=args.seed, image_size=(h, w), n_boxes=args.boxes)
    out_dir = cfgmod.resolve_out_dir(args.out, cfgmod.defaults())
    os.makedirs(out_dir, exist_ok=True)
    cfgmod.write_manifest(out_dir, "gen-synthetic", argv, cfgmod.defaults())
    seq_dir = generate_synthetic(scene, args.frames, out_dir)
    print("wrote {} frames to {}".format(args.frames, seq_dir))
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "infer": _cmd_infer,
    "preview-aug": _cmd_preview_aug,
    "gen-synthetic": _cmd_gen_synthetic,
}


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, argv)
    except cfgmod.ConfigError as e:
        print("configuration error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print("missing path: {}".format(e), file=sys.stderr)
        return EXIT_MISSING
    except Exception as e:  # surfaced with category so scripts can branch on it
        print("error: {}".format(e), file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
