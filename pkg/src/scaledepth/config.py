"""Run configuration: schema, file loading, merging, manifests.

Configuration is a flat mapping of dotted keys to scalars, documented in
the schema below. Files are YAML (flat keys or nested sections, both
accepted); every key is validated against the schema before a workflow
starts. Precedence: CLI flags > environment > config file > defaults.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass

import yaml

from . import __version__
from .losses import LossWeights
from .networks import DepthNetConfig, PoseNetConfig
from .training import TrainConfig

OUT_DIR_ENV_VAR = "SCALEDEPTH_OUT_DIR"


class ConfigError(ValueError):
    """A configuration key or value violates the schema."""


@dataclass(frozen=True)
class SchemaKey:
    type: type
    default: object
    help: str


SCHEMA = {
    "data.root": SchemaKey(str, "", "dataset root directory"),
    "data.train_split": SchemaKey(str, "", "training split file (empty: every usable frame)"),
    "data.val_split": SchemaKey(str, "", "validation/test split file"),
    "out.dir": SchemaKey(str, "scaledepth_runs", "output directory for checkpoints, logs, reports"),
    "train.epochs": SchemaKey(int, 20, "total training epochs"),
    "train.phase1_epochs": SchemaKey(int, 15, "epochs at the initial learning rate"),
    "train.lr": SchemaKey(float, 1e-4, "learning rate for the first phase"),
    "train.lr_final": SchemaKey(float, 1e-5, "learning rate for the remaining epochs"),
    "train.batch_size": SchemaKey(int, 12, "instances per optimization step"),
    "train.seed": SchemaKey(int, 0, "global random seed"),
    "train.height": SchemaKey(int, 192, "network input height (divisible by 32)"),
    "train.width": SchemaKey(int, 640, "network input width (divisible by 32)"),
    "train.as_aug": SchemaKey(bool, True, "multi-scale augmentation on/off (ablation)"),
    "train.cs_loss": SchemaKey(bool, True, "cross-scale depth consistency loss on/off (ablation)"),
    "train.num_workers": SchemaKey(int, 0, "data loading workers"),
    "train.checkpoint_every": SchemaKey(int, 1, "checkpoint period in epochs"),
    "train.device": SchemaKey(str, "auto", "torch device (auto, cpu, cuda)"),
    "depth.min_depth": SchemaKey(float, 0.1, "near limit of the depth parameterization (m)"),
    "depth.max_depth": SchemaKey(float, 100.0, "far limit of the depth parameterization (m)"),
    "loss.photometric": SchemaKey(float, 1.0, "photometric term weight"),
    "loss.smoothness": SchemaKey(float, 0.001, "smoothness term weight"),
    "loss.consistency": SchemaKey(float, 1.0, "cross-scale consistency term weight"),
    "loss.ssim_mix": SchemaKey(float, 0.85, "SSIM share of the photometric error"),
    "model.preset": SchemaKey(str, "default", "depth network preset (default, toy)"),
    "pose.preset": SchemaKey(str, "default", "pose network preset (default, toy)"),
    "eval.resolutions": SchemaKey(str, "128x416,160x512,256x832,320x1024",
                                  "sweep resolutions, HxW comma-separated"),
    "eval.min_depth": SchemaKey(float, 1e-3, "lower clip for metrics (m)"),
    "eval.max_depth": SchemaKey(float, 80.0, "depth cap for metrics (m)"),
    "eval.median_scaling": SchemaKey(bool, True, "median-scale predictions before metrics"),
    "eval.eigen_crop": SchemaKey(bool, False, "apply the standard benchmark crop"),
    "eval.save_viz": SchemaKey(bool, False, "write per-image depth visualizations"),
}


def defaults() -> dict:
    return {k: v.default for k, v in SCHEMA.items()}


def _coerce(key: str, value) -> object:
    spec = SCHEMA[key]
    if spec.type is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("true", "1", "yes", "on"):
            return True
        if text in ("false", "0", "no", "off"):
            return False
        raise ConfigError("key '{}' expects a boolean, got '{}'".format(key, value))
    try:
        return spec.type(value)
    except (TypeError, ValueError):
        raise ConfigError("key '{}' expects {}, got '{}'".format(key, spec.type.__name__, value))


def validate(mapping: dict) -> dict:
    """Check every key against the schema and coerce values."""
    out = {}
    unknown = sorted(set(mapping) - set(SCHEMA))
    if unknown:
        raise ConfigError("unknown configuration keys: {}".format(", ".join(unknown)))
    for key, value in mapping.items():
        out[key] = _coerce(key, value)
    return out


def _flatten(tree, prefix=""):
    flat = {}
    for key, value in tree.items():
        name = "{}{}".format(prefix, key)
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def load_config_file(path) -> dict:
    if not os.path.isfile(path):
        raise FileNotFoundError("config file not found: {}".format(path))
    with open(path) as f:
        tree = yaml.safe_load(f) or {}
    if not isinstance(tree, dict):
        raise ConfigError("config file must contain a mapping, got {}".format(type(tree).__name__))
    return validate(_flatten(tree))


def merge(*layers) -> dict:
    """Later layers win; all layers are schema-validated."""
    cfg = defaults()
    for layer in layers:
        if layer:
            cfg.update(validate(dict(layer)))
    return cfg


def parse_resolution(text: str, div32: bool = True) -> tuple:
    """'HxW' -> (h, w); network resolutions must be divisible by 32."""
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ConfigError("resolution must look like HxW, got '{}'".format(text))
    if div32 and (h % 32 or w % 32):
        raise ConfigError("resolution {}x{} must be divisible by 32".format(h, w))
    return h, w


def parse_resolutions(text: str) -> list:
    return [parse_resolution(part) for part in text.split(",") if part.strip()]


def train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(
        epochs=cfg["train.epochs"],
        phase1_epochs=cfg["train.phase1_epochs"],
        lr=cfg["train.lr"],
        lr_final=cfg["train.lr_final"],
        batch_size=cfg["train.batch_size"],
        seed=cfg["train.seed"],
        height=cfg["train.height"],
        width=cfg["train.width"],
        min_depth=cfg["depth.min_depth"],
        max_depth=cfg["depth.max_depth"],
        as_aug=cfg["train.as_aug"],
        cs_loss=cfg["train.cs_loss"],
        num_workers=cfg["train.num_workers"],
        checkpoint_every=cfg["train.checkpoint_every"],
        device=cfg["train.device"],
        weights=LossWeights(
            photometric=cfg["loss.photometric"],
            smoothness=cfg["loss.smoothness"],
            consistency=cfg["loss.consistency"],
            ssim_mix=cfg["loss.ssim_mix"],
        ),
    )


def depth_config_from(cfg: dict) -> DepthNetConfig:
    return DepthNetConfig.preset(cfg["model.preset"])


def pose_config_from(cfg: dict) -> PoseNetConfig:
    return PoseNetConfig.preset(cfg["pose.preset"])


def resolve_out_dir(cli_value, cfg: dict) -> str:
    """CLI flag > environment variable > config key."""
    if cli_value:
        return cli_value
    env = os.environ.get(OUT_DIR_ENV_VAR)
    if env:
        return env
    return cfg["out.dir"]


def write_manifest(out_dir, command, argv, cfg: dict) -> str:
    """Record everything needed to reproduce a run."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": dict(cfg),
        "seed": cfg["train.seed"],
        "package_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
    return path


def print_effective_config(cfg: dict, stream=None) -> None:
    stream = stream or sys.stdout
    print("effective configuration:", file=stream)
    for key in sorted(cfg):
        print("  {} = {}".format(key, cfg[key]), file=stream)
