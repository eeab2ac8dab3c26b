"""Joint optimization of the depth and pose networks.

One training step takes a batch of multi-scale instances, predicts depth
for each scale view independently with the shared depth network,
predicts the two neighbor poses once from the plain-resized pair, warps
every scale with its own adjusted intrinsics and the shared poses, and
assembles the photometric, smoothness and cross-scale consistency terms
into the weighted total objective.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, field

import torch
from torch.utils.data import DataLoader, RandomSampler

from . import __version__, fileio
from .augmentation import CropWindow
from .geometry import disp_to_depth, synthesize_view, transformation_from_parameters
from .losses import (
    LossWeights,
    cross_scale_loss,
    extract_correspondence_low_mid,
    extract_correspondence_mid_high,
    min_reprojection_loss,
    smoothness_loss,
    total_loss,
)
from .networks import DepthNet, DepthNetConfig, PoseNetConfig, build_pose_net

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 20
    phase1_epochs: int = 15
    lr: float = 1e-4
    lr_final: float = 1e-5
    batch_size: int = 12
    seed: int = 0
    height: int = 192
    width: int = 640
    min_depth: float = 0.1
    max_depth: float = 100.0
    as_aug: bool = True
    cs_loss: bool = True
    num_workers: int = 0
    checkpoint_every: int = 1
    device: str = "auto"
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.phase1_epochs <= self.epochs:
            raise ValueError("phase1_epochs must lie in [1, epochs]")
        if self.cs_loss and not self.as_aug:
            raise ValueError("cross-scale consistency requires multi-scale augmentation (as_aug)")
        if self.height % 32 or self.width % 32:
            raise ValueError("training size must be divisible by 32")


def lr_for_epoch(epoch: int, config: TrainConfig) -> float:
    """Learning rate of a 0-based epoch index under the two-phase schedule."""
    return config.lr if epoch < config.phase1_epochs else config.lr_final


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


class Trainer:
    def __init__(self, config: TrainConfig, depth_config=None, pose_config=None, out_dir=None):
        self.config = config
        self.depth_config = depth_config or DepthNetConfig()
        self.pose_config = pose_config or PoseNetConfig()
        self.device = resolve_device(config.device)
        self.out_dir = out_dir

        torch.manual_seed(config.seed)
        self.depth_net = DepthNet(self.depth_config).to(self.device)
        self.pose_net = build_pose_net(self.pose_config).to(self.device)
        params = list(self.depth_net.parameters()) + list(self.pose_net.parameters())
        self.optimizer = torch.optim.Adam(params, lr=config.lr)
        self.epoch = 0
        self.step = 0

    @property
    def active_loss_terms(self) -> tuple:
        """Which total-loss components this configuration produces."""
        scales = ("low", "mid", "high") if self.config.as_aug else ("mid",)
        terms = ["ph_" + s for s in scales] + ["sm_" + s for s in scales]
        if self.config.cs_loss:
            terms += ["cs_low_mid", "cs_mid_high"]
        return tuple(terms)

    def _predict_poses(self, mid):
        """Two pose evaluations per step: target->prev and target->next.

        The network always sees its pair in temporal order; the
        prev-direction transform is inverted afterwards.
        """
        vec_prev = self.pose_net(mid[:, 0], mid[:, 1])
        vec_next = self.pose_net(mid[:, 1], mid[:, 2])
        t_prev = transformation_from_parameters(vec_prev[:, :3], vec_prev[:, 3:], invert=True)
        t_next = transformation_from_parameters(vec_next[:, :3], vec_next[:, 3:], invert=False)
        return t_prev, t_next

    def compute_losses(self, batch):
        cfg = self.config
        alpha = cfg.weights.ssim_mix
        scales = ("low", "mid", "high") if cfg.as_aug else ("mid",)

        disp = {}
        depth = {}
        for s in scales:
            disp[s] = self.depth_net(batch[s][:, 1])
            depth[s] = disp_to_depth(disp[s], cfg.min_depth, cfg.max_depth)

        poses = self._predict_poses(batch["mid"])

        components = {}
        for s in scales:
            target = batch[s][:, 1]
            k = batch["K_" + s]
            warps, masks = [], []
            for source_idx, pose in zip((0, 2), poses):
                warped, mask = synthesize_view(batch[s][:, source_idx], depth[s], pose, k, k)
                warps.append(warped)
                masks.append(mask)
            components["ph_" + s] = min_reprojection_loss(target, warps, masks, alpha)
            components["sm_" + s] = smoothness_loss(disp[s], target)

        if cfg.cs_loss:
            cs_lm, cs_mh = 0.0, 0.0
            b = batch["mid"].shape[0]
            for i in range(b):
                s_low = float(batch["s_low"][i])
                s_high = float(batch["s_high"][i])
                x0, y0, w, h = (int(v) for v in batch["crop"][i])
                crop = CropWindow(x0=x0, y0=y0, width=w, height=h)
                lm = extract_correspondence_low_mid(depth["low"][i : i + 1], depth["mid"][i : i + 1], s_low)
                mh = extract_correspondence_mid_high(depth["mid"][i : i + 1], depth["high"][i : i + 1], crop, s_high)
                cs_lm = cs_lm + cross_scale_loss(lm, alpha)
                cs_mh = cs_mh + cross_scale_loss(mh, alpha)
            components["cs_low_mid"] = cs_lm / b
            components["cs_mid_high"] = cs_mh / b

        return components

    def train_step(self, batch):
        """One optimization step; returns (loss value, diagnostics).

        Diagnostics carry every loss component separately. A non-finite
        component aborts the step (no parameter update) with the
        offending component named in the raised error.
        """
        self.depth_net.train()
        self.pose_net.train()
        batch = {k: v.to(self.device) if torch.is_tensor(v) else v for k, v in batch.items()}
        self.optimizer.zero_grad()
        components = self.compute_losses(batch)
        loss = total_loss(components, self.config.weights)
        loss.backward()
        self.optimizer.step()
        self.step += 1
        diagnostics = {k: float(v.detach()) if torch.is_tensor(v) else float(v) for k, v in components.items()}
        diagnostics["total"] = float(loss.detach())
        return diagnostics["total"], diagnostics

    def state_dict(self) -> dict:
        return {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "package_version": __version__,
            "train_config": dataclasses.asdict(self.config),
            "depth_config": dataclasses.asdict(self.depth_config),
            "pose_config": dataclasses.asdict(self.pose_config),
            "depth_state": self.depth_net.state_dict(),
            "pose_state": self.pose_net.state_dict(),
            "optimizer_state": self.optimizer.state_dict(),
            "epoch": self.epoch,
            "step": self.step,
        }

    def save_checkpoint(self, path):
        fileio.atomic_write(path, lambda tmp: torch.save(self.state_dict(), tmp))

    def load_state(self, state: dict):
        if state.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError("unsupported checkpoint format: {}".format(state.get("format_version")))
        self.depth_net.load_state_dict(state["depth_state"])
        self.pose_net.load_state_dict(state["pose_state"])
        self.optimizer.load_state_dict(state["optimizer_state"])
        self.epoch = state["epoch"]
        self.step = state["step"]


def run_training(config: TrainConfig, dataset, depth_config=None, pose_config=None, out_dir=".",
                 resume_from=None, log_every=10) -> str:
    """Run the epoch schedule over a TrainingInstances dataset.

    Writes per-step curves to train_log.csv, checkpoints periodically
    (atomically) and returns the path of the final checkpoint.
    Deterministic given the config seed.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    os.makedirs(out_dir, exist_ok=True)
    trainer = Trainer(config, depth_config, pose_config, out_dir=out_dir)
    if resume_from is not None:
        trainer.load_state(torch.load(resume_from, map_location=trainer.device, weights_only=False))

    log_path = os.path.join(out_dir, "train_log.csv")
    log_header = ["epoch", "step", "lr", "total"] + list(trainer.active_loss_terms)
    new_log = not (resume_from and os.path.isfile(log_path))
    log_file = open(log_path, "w" if new_log else "a", newline="")
    logger = csv.writer(log_file)
    if new_log:
        logger.writerow(log_header)

    final_path = os.path.join(out_dir, "checkpoint_final.pt")
    try:
        for epoch in range(trainer.epoch, config.epochs):
            trainer.epoch = epoch
            lr = lr_for_epoch(epoch, config)
            for group in trainer.optimizer.param_groups:
                group["lr"] = lr
            if hasattr(dataset, "set_epoch"):
                dataset.set_epoch(epoch)
            generator = torch.Generator()
            generator.manual_seed(config.seed * 100003 + epoch)
            loader = DataLoader(
                dataset,
                batch_size=config.batch_size,
                sampler=RandomSampler(dataset, generator=generator),
                num_workers=config.num_workers,
                drop_last=len(dataset) > config.batch_size,
            )
            for batch in loader:
                loss, diag = trainer.train_step(batch)
                if trainer.step % log_every == 0 or trainer.step == 1:
                    logger.writerow(
                        [epoch, trainer.step, lr, diag["total"]]
                        + [diag.get(t, "") for t in trainer.active_loss_terms]
                    )
                    log_file.flush()
            trainer.epoch = epoch + 1
            if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
                trainer.save_checkpoint(os.path.join(out_dir, "checkpoint_{:03d}.pt".format(epoch + 1)))
        trainer.save_checkpoint(final_path)
    finally:
        log_file.close()
    return final_path


def load_depth_model(checkpoint_path, device="cpu"):
    """Rebuild the depth network from a checkpoint; returns (model, state)."""
    state = torch.load(checkpoint_path, map_location=device, weights_only=False)
    if state.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format: {}".format(state.get("format_version")))
    cfg = state["depth_config"]
    cfg = DepthNetConfig(
        branch_channels=tuple(cfg["branch_channels"]),
        fusion_stages=cfg["fusion_stages"],
        head_channels=cfg["head_channels"],
        stage_modules=tuple(cfg["stage_modules"]),
        blocks_per_module=cfg["blocks_per_module"],
    )
    model = DepthNet(cfg).to(device)
    model.load_state_dict(state["depth_state"])
    model.eval()
    return model, state
