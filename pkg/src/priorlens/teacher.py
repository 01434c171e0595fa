"""Frozen sharp-image feature teacher.

A small multi-scale classifier trained on a labeled tiny-image set. After
training it is frozen; its intermediate pyramid, computed on sharp images,
supplies the distillation targets, and its level-2 map doubles as the
feature extractor for the perceptual reconstruction loss.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import PYRAMID_CHANNELS
from .checkpoint import load_checkpoint, save_checkpoint
from .nets import FeatureTrunk

logger = logging.getLogger(__name__)

PERCEPTUAL_LEVEL = 1  # second pyramid level feeds the perceptual loss


class TeacherNotFrozenError(RuntimeError):
    pass


@dataclass(frozen=True)
class TeacherTrainConfig:
    steps: int = 600
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    val_fraction: float = 0.2
    seed: int = 0


class TeacherModel(nn.Module):
    def __init__(self, num_classes: int, channels: tuple[int, ...] = PYRAMID_CHANNELS):
        super().__init__()
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        self.num_classes = num_classes
        self.trunk = FeatureTrunk(channels)
        self.head = nn.Linear(channels[-1], num_classes)
        self.register_buffer("input_mean", torch.zeros(1, 3, 1, 1))
        self.register_buffer("input_std", torch.ones(1, 3, 1, 1))
        self.frozen = False

    @property
    def arch_descriptor(self) -> str:
        chans = "-".join(str(c) for c in self.trunk.channels)
        return f"trunk3stage_c{chans}_nc{self.num_classes}"

    def set_normalization(self, mean, std) -> None:
        self.input_mean.copy_(torch.as_tensor(mean, dtype=torch.float32).view(1, 3, 1, 1))
        self.input_std.copy_(torch.as_tensor(std, dtype=torch.float32).view(1, 3, 1, 1))

    def _normalize(self, images: torch.Tensor) -> torch.Tensor:
        mean = self.input_mean.to(images.dtype)
        std = self.input_std.to(images.dtype)
        return (images - mean) / std

    def _pyramid(self, images: torch.Tensor) -> list[torch.Tensor]:
        return self.trunk(self._normalize(images))

    def forward_pyramid(self, images: torch.Tensor) -> list[torch.Tensor]:
        """Multi-scale features of sharp(ish) images; requires a frozen teacher."""
        if not self.frozen:
            raise TeacherNotFrozenError("teacher must be frozen before feature extraction")
        return self._pyramid(images)

    def perceptual_features(self, images: torch.Tensor) -> torch.Tensor:
        return self.forward_pyramid(images)[PERCEPTUAL_LEVEL]

    def logits(self, images: torch.Tensor) -> torch.Tensor:
        feats = self._pyramid(images)[-1]
        pooled = F.adaptive_avg_pool2d(feats, 1).flatten(1)
        return self.head(pooled)

    def freeze(self) -> "TeacherModel":
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        self.frozen = True
        return self

    def parameter_checksum(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in sorted(self.state_dict().items()):
            digest.update(name.encode())
            digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


def train_teacher(
    images: np.ndarray,
    labels: np.ndarray,
    config: TeacherTrainConfig = TeacherTrainConfig(),
) -> tuple[TeacherModel, dict]:
    """Train and freeze a teacher on a labeled (N, H, W, 3) image set.

    Returns the frozen model plus a training log with the held-out top-1
    accuracy; raises if fewer than two classes are present.
    """
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError(f"need >= 2 classes to train the teacher, got {classes.size}")
    if images.shape[0] != labels.shape[0]:
        raise ValueError("images and labels length mismatch")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(images.shape[0])
    n_val = max(1, int(round(config.val_fraction * images.shape[0])))
    val_idx, train_idx = order[:n_val], order[n_val:]

    x = torch.from_numpy(images.transpose(0, 3, 1, 2)).float()
    y = torch.from_numpy(labels)
    mean = x[train_idx].mean(dim=(0, 2, 3))
    std = x[train_idx].std(dim=(0, 2, 3)).clamp_min(1e-3)

    torch.manual_seed(config.seed)
    model = TeacherModel(num_classes=int(classes.max()) + 1)
    model.set_normalization(mean, std)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )

    g = torch.Generator().manual_seed(config.seed)
    model.train()
    losses = []
    for step in range(config.steps):
        idx = train_idx[torch.randint(len(train_idx), (config.batch_size,), generator=g)]
        batch, target = x[idx], y[idx]
        if int(torch.randint(2, (1,), generator=g)) == 1:
            batch = torch.flip(batch, dims=[3])
        logits = model.logits(batch)
        loss = F.cross_entropy(logits, target)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))

    model.eval()
    with torch.no_grad():
        pred = model.logits(x[val_idx]).argmax(dim=1)
        accuracy = float((pred == y[val_idx]).float().mean())
    model.freeze()

    log = {
        "steps": config.steps,
        "final_train_loss": losses[-1] if losses else None,
        "val_accuracy": accuracy,
        "val_size": int(n_val),
        "num_classes": model.num_classes,
        "chance": 1.0 / model.num_classes,
    }
    logger.info("teacher trained: val top-1 %.3f (chance %.3f)", accuracy, log["chance"])
    return model, log


def save_teacher(path: str | os.PathLike, teacher: TeacherModel, log: dict | None = None) -> None:
    header = {
        "arch_descriptor": teacher.arch_descriptor,
        "num_classes": teacher.num_classes,
        "channels": list(teacher.trunk.channels),
        "normalization": {
            "mean": teacher.input_mean.flatten().tolist(),
            "std": teacher.input_std.flatten().tolist(),
        },
        "train_log": log or {},
    }
    save_checkpoint(path, "teacher", header, {"model": teacher.state_dict()})


def load_teacher(path: str | os.PathLike) -> TeacherModel:
    payload = load_checkpoint(path, expected_kind="teacher")
    header = payload["header"]
    model = TeacherModel(
        num_classes=header["num_classes"], channels=tuple(header["channels"])
    )
    model.load_state_dict(payload["state"]["model"])
    return model.freeze()
