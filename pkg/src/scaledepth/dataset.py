"""Dataset indexing and loading.

A dataset root contains one directory per sequence:

    <root>/<sequence>/images/%06d.png      8-bit RGB frames
    <root>/<sequence>/depth/%06d.png       16-bit millimeters (optional)
    <root>/<sequence>/poses.txt            camera-to-world, one 3x4 per line (optional)
    <root>/<sequence>/intrinsics.txt       fx fy cx cy

Split files list one "sequence frame_index" pair per line (extra tokens
ignored). A frame is only usable for training when both its temporal
neighbors exist, so boundary frames are filtered out at indexing time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import torch
from torch.utils.data import Dataset

from . import fileio
from .augmentation import augment_instance, resize_image
from .geometry import Intrinsics


def _frame_path(root, sequence, frame, kind="images"):
    return os.path.join(root, sequence, kind, "{:06d}.png".format(frame))


@dataclass
class SequenceIndex:
    """Usable (sequence, frame) pairs of one split."""

    root: str
    entries: list = field(default_factory=list)
    split: str = "train"

    def __len__(self):
        return len(self.entries)


def list_sequences(root) -> list:
    if not os.path.isdir(root):
        raise FileNotFoundError("dataset root not found: {}".format(root))
    return sorted(
        d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d, "images"))
    )


def load_split(root, split_file=None, split="train", require_neighbors=True) -> SequenceIndex:
    """Build the index, keeping only frames whose neighbors exist.

    Without a split file every frame of every sequence is considered.
    Frames listed in a split file must exist themselves (missing ones are
    collected and reported); frames merely lacking a t-1 or t+1 neighbor
    are silently dropped, since they cannot anchor a training instance.
    """
    candidates = []
    if split_file is not None:
        if not os.path.isfile(split_file):
            raise FileNotFoundError("split file not found: {}".format(split_file))
        with open(split_file) as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                candidates.append((parts[0], int(parts[1])))
        missing = [
            _frame_path(root, seq, frame)
            for seq, frame in candidates
            if not os.path.isfile(_frame_path(root, seq, frame))
        ]
        if missing:
            raise FileNotFoundError(
                "{} indexed frames missing on disk, e.g.:\n  ".format(len(missing))
                + "\n  ".join(missing[:10])
            )
    else:
        for seq in list_sequences(root):
            files = sorted(os.listdir(os.path.join(root, seq, "images")))
            for name in files:
                if name.endswith(".png"):
                    candidates.append((seq, int(name[:-4])))

    entries = []
    for seq, frame in candidates:
        if require_neighbors:
            ok = all(
                os.path.isfile(_frame_path(root, seq, frame + d)) for d in (-1, 1)
            )
            if not ok:
                continue
        entries.append((seq, frame))
    return SequenceIndex(root=root, entries=entries, split=split)


class SequenceReader:
    """Cached access to one dataset root's frames, depths and intrinsics."""

    def __init__(self, root, cache_images=True):
        self.root = root
        self.cache_images = cache_images
        self._images = {}
        self._intrinsics = {}
        self._poses = {}

    def intrinsics(self, sequence) -> Intrinsics:
        if sequence not in self._intrinsics:
            self._intrinsics[sequence] = fileio.load_intrinsics(
                os.path.join(self.root, sequence, "intrinsics.txt")
            )
        return self._intrinsics[sequence]

    def poses(self, sequence) -> np.ndarray:
        if sequence not in self._poses:
            self._poses[sequence] = fileio.load_poses(os.path.join(self.root, sequence, "poses.txt"))
        return self._poses[sequence]

    def image(self, sequence, frame) -> torch.Tensor:
        key = (sequence, frame)
        if key in self._images:
            return self._images[key]
        img = torch.from_numpy(fileio.load_image(_frame_path(self.root, sequence, frame)))
        if self.cache_images:
            self._images[key] = img
        return img

    def depth(self, sequence, frame) -> np.ndarray:
        return fileio.load_depth_png(_frame_path(self.root, sequence, frame, kind="depth"))


class TrainingInstances(Dataset):
    """Training triples, multi-scale augmented.

    Each item holds the three scale views of (prev, target, next), the
    per-scale intrinsics and the scale/crop bookkeeping that drives
    correspondence extraction. With `as_aug` off only the plain resized
    view is produced.

    Randomness is derived from (seed, epoch, item index), so any number
    of loader workers produces the identical epoch and augmentation is
    re-sampled on every access of an item.
    """

    def __init__(self, index: SequenceIndex, target_size, as_aug=True, seed=0, cache_images=True):
        h, w = target_size
        if h % 32 or w % 32:
            raise ValueError("target size ({}, {}) must be divisible by 32".format(h, w))
        self.index = index
        self.target_size = (h, w)
        self.as_aug = as_aug
        self.seed = seed
        self.epoch = 0
        self.reader = SequenceReader(index.root, cache_images=cache_images)

    def set_epoch(self, epoch: int):
        self.epoch = int(epoch)

    def __len__(self):
        return len(self.index.entries)

    def __getitem__(self, i):
        seq, frame = self.index.entries[i]
        frames = [self.reader.image(seq, frame + d) for d in (-1, 0, 1)]
        K = self.reader.intrinsics(seq)
        item = {"sequence": seq, "frame": frame}

        if self.as_aug:
            rng = np.random.default_rng([self.seed, self.epoch, i])
            inst = augment_instance(frames, K, rng, self.target_size)
            for name in ("low", "mid", "high"):
                item[name] = getattr(inst, name)
                item["K_" + name] = inst.intrinsics[name].as_tensor()
            item["s_low"] = torch.tensor(inst.scales.s_low)
            item["s_high"] = torch.tensor(inst.scales.s_high)
            item["crop"] = torch.tensor(
                [inst.crop.x0, inst.crop.y0, inst.crop.width, inst.crop.height], dtype=torch.int64
            )
        else:
            h, w = self.target_size
            h0, w0 = frames[0].shape[-2:]
            item["mid"] = torch.stack([resize_image(f, self.target_size) for f in frames])
            from .augmentation import adjust_intrinsics

            item["K_mid"] = adjust_intrinsics(K, (h / h0, w / w0)).as_tensor()
        return item


class EvalFrames(Dataset):
    """Frames with ground-truth depth, at native resolution.

    The evaluation code resizes the image to whatever inference
    resolution it is probing; predictions are compared against the
    untouched ground-truth map.
    """

    def __init__(self, index: SequenceIndex, cache_images=False):
        self.index = index
        self.reader = SequenceReader(index.root, cache_images=cache_images)

    def __len__(self):
        return len(self.index.entries)

    def __getitem__(self, i):
        seq, frame = self.index.entries[i]
        return {
            "image": self.reader.image(seq, frame),
            "depth_gt": torch.from_numpy(self.reader.depth(seq, frame)),
            "K": self.reader.intrinsics(seq).as_tensor(),
            "sequence": seq,
            "frame": frame,
        }


def write_split(path, entries) -> None:
    with open(path, "w") as f:
        for seq, frame in entries:
            f.write("{} {}\n".format(seq, frame))
