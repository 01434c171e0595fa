"""Optimization harness: config, cosine schedule, training loop, ablation driver."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import torch

from .blur_synth import load_manifest, load_pairs
from .checkpoint import load_checkpoint, save_checkpoint
from .determinism import apply_determinism, resolve_deterministic, stable_seed
from .losses import LossWeights, total_loss
from .system import (
    ABLATION_TABLE,
    AblationConfig,
    DeblurSystem,
    save_system,
    system_header,
)
from .teacher import TeacherModel

logger = logging.getLogger(__name__)

METRICS_HEADER = ("step", "lr", "total", "l1", "perceptual", "prior")


class TrainingDiverged(RuntimeError):
    """Raised when a parameter or loss goes NaN/Inf during optimization."""


@dataclass(frozen=True)
class TrainConfig:
    lr_start: float = 2e-4
    lr_end: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 1e-4
    batch_size: int = 4
    crop: int = 64
    total_steps: int = 2000
    seed: int = 0
    alpha: float = 0.01
    beta: float = 0.1
    checkpoint_interval: int = 0
    deterministic: bool = True
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def validate(self) -> None:
        if self.lr_end > self.lr_start:
            raise ValueError(f"lr_end {self.lr_end} must be <= lr_start {self.lr_start}")
        if self.lr_start <= 0:
            raise ValueError(f"lr_start must be > 0, got {self.lr_start}")
        if self.crop % 8:
            raise ValueError(f"crop must be divisible by 8, got {self.crop}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"alpha/beta must be >= 0, got {self.alpha}/{self.beta}")
        if self.checkpoint_interval < 0:
            raise ValueError(f"checkpoint_interval must be >= 0, got {self.checkpoint_interval}")
        self.ablation.validate()

    @property
    def weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta)

    def to_flat_dict(self) -> dict:
        d = dataclasses.asdict(self)
        ablation = d.pop("ablation")
        d.update(ablation)
        return d

    @classmethod
    def from_flat_dict(cls, data: dict) -> "TrainConfig":
        from .system import ablation_by_name

        data = dict(data)
        if "ablation" in data:
            ablation = ablation_by_name(data.pop("ablation"))
        else:
            ablation_fields = {f.name for f in dataclasses.fields(AblationConfig)}
            kwargs = {k: data.pop(k) for k in list(data) if k in ablation_fields}
            ablation = AblationConfig(**kwargs) if kwargs else AblationConfig()
        known = {f.name for f in dataclasses.fields(cls) if f.name != "ablation"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        config = cls(ablation=ablation, **data)
        config.validate()
        return config


def cosine_lr(step: int, config: TrainConfig) -> float:
    """Cosine-annealed learning rate from lr_start at 0 to lr_end at total_steps."""
    if not 0 <= step <= config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps}]")
    span = config.lr_start - config.lr_end
    return config.lr_end + 0.5 * span * (1.0 + math.cos(math.pi * step / config.total_steps))


@dataclass
class TrainResult:
    run_dir: str
    checkpoint_path: str
    metrics_path: str
    first_breakdown: dict
    final_breakdown: dict
    teacher_checksum_before: str
    teacher_checksum_after: str
    steps: int


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _sample_batch(images, targets, config: TrainConfig, step: int):
    n, _, h, w = images.shape
    crop = min(config.crop, h, w)
    g = torch.Generator().manual_seed(stable_seed("batch", config.seed, step))
    idx = torch.randint(0, n, (config.batch_size,), generator=g)
    ys = torch.randint(0, h - crop + 1, (config.batch_size,), generator=g)
    xs = torch.randint(0, w - crop + 1, (config.batch_size,), generator=g)
    flips = torch.randint(0, 2, (config.batch_size,), generator=g)
    xb, yb = [], []
    for i in range(config.batch_size):
        bx = images[idx[i], :, ys[i] : ys[i] + crop, xs[i] : xs[i] + crop]
        by = targets[idx[i], :, ys[i] : ys[i] + crop, xs[i] : xs[i] + crop]
        if flips[i]:
            bx, by = torch.flip(bx, dims=[-1]), torch.flip(by, dims=[-1])
        xb.append(bx)
        yb.append(by)
    return torch.stack(xb), torch.stack(yb)


def _check_parameters_finite(system: torch.nn.Module, step: int, run_dir: str) -> None:
    bad = {}
    for name, param in system.named_parameters():
        if not torch.isfinite(param).all():
            finite = int(torch.isfinite(param).sum())
            bad[name] = {"numel": param.numel(), "finite": finite}
    if bad:
        dump_path = os.path.join(run_dir, "divergence_dump.json")
        with open(dump_path, "w") as f:
            json.dump({"step": step, "bad_parameters": bad}, f, indent=2)
        raise TrainingDiverged(
            f"non-finite parameters after step {step}; diagnostics in {dump_path}"
        )


def _dump_loss_divergence(run_dir: str, step: int, breakdown: dict) -> None:
    dump_path = os.path.join(run_dir, "divergence_dump.json")
    with open(dump_path, "w") as f:
        json.dump({"step": step, "breakdown": breakdown}, f, indent=2)


def train(
    manifest_path: str | os.PathLike,
    teacher: TeacherModel,
    config: TrainConfig,
    run_dir: str | os.PathLike,
    resume_from: str | os.PathLike | None = None,
) -> TrainResult:
    """Jointly optimize the prior extractor, fusion, and restorer.

    Deterministic given (seed, deterministic mode): batch selection and
    augmentation derive from (seed, step), so resuming from a checkpoint
    reproduces the uninterrupted run.
    """
    config.validate()
    if not teacher.frozen:
        raise ValueError("teacher must be frozen before deblur training")
    run_dir = os.fspath(run_dir)
    os.makedirs(run_dir, exist_ok=True)

    deterministic = resolve_deterministic(config.deterministic)
    apply_determinism(config.seed, deterministic)

    with open(os.path.join(run_dir, "config.json"), "w") as f:
        json.dump(config.to_flat_dict(), f, indent=2)
        f.write("\n")

    log_path = os.path.join(run_dir, "training.log")
    handler = logging.FileHandler(log_path)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO)
    try:
        return _train_inner(manifest_path, teacher, config, run_dir, resume_from)
    finally:
        logger.removeHandler(handler)
        handler.close()


def _train_inner(manifest_path, teacher, config, run_dir, resume_from) -> TrainResult:
    manifest, dataset_dir = load_manifest(manifest_path)
    pairs = load_pairs(manifest, dataset_dir)
    blurry = torch.stack(
        [torch.from_numpy(b.transpose(2, 0, 1)).float() for b, _ in pairs]
    )
    sharp = torch.stack(
        [torch.from_numpy(s.transpose(2, 0, 1)).float() for _, s in pairs]
    )
    h, w = blurry.shape[-2:]
    if min(h, w) < 8:
        raise ValueError(f"dataset images too small: {h}x{w}")
    if config.crop > min(h, w):
        raise ValueError(f"crop {config.crop} exceeds image size {h}x{w}")

    ablation = config.ablation
    if ablation.uses_priors and not ablation.use_hcl:
        logger.warning(
            "configuration feeds priors without distillation supervision; "
            "training is unstable per prior experience with this setup"
        )

    torch.manual_seed(config.seed)
    system = DeblurSystem(ablation)
    optimizer = torch.optim.AdamW(
        system.parameters(),
        lr=config.lr_start,
        betas=(config.beta1, config.beta2),
        weight_decay=config.weight_decay,
    )
    start_step = 0
    if resume_from is not None:
        payload = load_checkpoint(resume_from, expected_kind="deblur_system")
        system.load_state_dict(payload["state"]["system"])
        optimizer.load_state_dict(payload["state"]["optimizer"])
        start_step = int(payload["state"]["step"])
        logger.info("resumed from %s at step %d", resume_from, start_step)

    checksum_before = teacher.parameter_checksum()
    metrics_path = os.path.join(run_dir, "metrics.csv")
    checkpoint_path = os.path.join(run_dir, "checkpoint_final.pt")
    first_breakdown = None
    final_breakdown = None

    logger.info(
        "training %s for %d steps on %d pairs (%dx%d, crop %d, batch %d)",
        ablation, config.total_steps, len(pairs), h, w, config.crop, config.batch_size,
    )

    system.train()
    with open(metrics_path, "w", newline="") as metrics_file:
        writer = csv.writer(metrics_file)
        writer.writerow(METRICS_HEADER)
        for step in range(start_step, config.total_steps):
            lr = cosine_lr(step, config)
            for group in optimizer.param_groups:
                group["lr"] = lr

            xb, yb = _sample_batch(blurry, sharp, config, step)
            pred, f_pri = system(xb)
            f_gt = None
            if ablation.use_hcl:
                with torch.no_grad():
                    f_gt = teacher.forward_pyramid(yb)
            loss, breakdown = total_loss(
                pred, yb, f_pri, f_gt, teacher.perceptual_features,
                config.weights, use_distillation=ablation.use_hcl,
            )
            if not math.isfinite(breakdown["total"]):
                _dump_loss_divergence(run_dir, step, breakdown)
                raise TrainingDiverged(
                    f"non-finite loss at step {step}: {breakdown}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            _check_parameters_finite(system, step, run_dir)

            writer.writerow(
                [step, _format_cell(lr)]
                + [_format_cell(breakdown[k]) for k in ("total", "l1", "perceptual", "prior")]
            )
            if first_breakdown is None:
                first_breakdown = breakdown
            final_breakdown = breakdown

            if config.checkpoint_interval and (step + 1) % config.checkpoint_interval == 0:
                interim = os.path.join(run_dir, f"checkpoint_step{step + 1:06d}.pt")
                save_system(
                    interim, system, config.to_flat_dict(),
                    extra_state={"optimizer": optimizer.state_dict(), "step": step + 1},
                )
                logger.info("checkpoint at step %d -> %s", step + 1, interim)

    save_system(
        checkpoint_path, system, config.to_flat_dict(),
        extra_state={"optimizer": optimizer.state_dict(), "step": config.total_steps},
    )
    checksum_after = teacher.parameter_checksum()
    logger.info("finished: final loss %s", final_breakdown)

    from .reporting import render_training_curves

    render_training_curves(metrics_path, os.path.join(run_dir, "loss_curves.png"))

    return TrainResult(
        run_dir=run_dir,
        checkpoint_path=checkpoint_path,
        metrics_path=metrics_path,
        first_breakdown=first_breakdown or {},
        final_breakdown=final_breakdown or {},
        teacher_checksum_before=checksum_before,
        teacher_checksum_after=checksum_after,
        steps=config.total_steps,
    )


def _dirname_for(net_name: str) -> str:
    return net_name.lower().replace("*", "star")


def run_ablation(
    manifest_path: str | os.PathLike,
    teacher: TeacherModel,
    base_config: TrainConfig,
    run_dir: str | os.PathLike,
    nets: list[str] | None = None,
) -> list[dict]:
    """Train every requested configuration with identical seed and budget.

    Evaluates each trained model on the same manifest (desk-scale toy
    benchmark) and writes a machine-readable table plus a summary figure.
    Per-run failures are recorded in the table without aborting the sweep.
    """
    from .evaluation import evaluate

    run_dir = os.fspath(run_dir)
    os.makedirs(run_dir, exist_ok=True)
    names = list(ABLATION_TABLE) if nets is None else list(nets)
    rows = []
    for name in names:
        if name not in ABLATION_TABLE:
            raise ValueError(f"unknown ablation row {name!r}")
        ablation = ABLATION_TABLE[name]
        config = dataclasses.replace(base_config, ablation=ablation)
        sub_dir = os.path.join(run_dir, _dirname_for(name))
        row = {
            "model": name,
            "hcl": ablation.use_hcl,
            "clc": ablation.use_clc,
            "mla": ablation.use_mla,
            "embedding": ablation.embedding,
            "psnr": None,
            "ssim": None,
            "l1": None,
            "perceptual": None,
            "prior": None,
            "status": "ok",
        }
        try:
            result = train(manifest_path, teacher, config, sub_dir)
            report = evaluate(result.checkpoint_path, manifest_path)
            row["psnr"] = report.aggregate["mean_psnr"]
            row["ssim"] = report.aggregate["mean_ssim"]
            row["l1"] = result.final_breakdown.get("l1")
            row["perceptual"] = result.final_breakdown.get("perceptual")
            row["prior"] = result.final_breakdown.get("prior")
        except TrainingDiverged as exc:
            logger.warning("%s diverged: %s", name, exc)
            row["status"] = "unstable"
        except Exception as exc:  # noqa: BLE001 - sweep must survive per-run failures
            logger.exception("%s failed", name)
            row["status"] = f"failed: {type(exc).__name__}"
        rows.append(row)

    table_path = os.path.join(run_dir, "ablation.csv")
    with open(table_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["model", "hcl", "clc", "mla", "embedding", "psnr", "ssim",
             "l1", "perceptual", "prior", "status"]
        )
        for row in rows:
            writer.writerow(
                [row["model"], row["hcl"], row["clc"], row["mla"], row["embedding"]]
                + [_format_cell(row[k]) for k in ("psnr", "ssim", "l1", "perceptual", "prior")]
                + [row["status"]]
            )

    from .reporting import render_ablation_figure

    render_ablation_figure(rows, os.path.join(run_dir, "ablation.png"))
    return rows
