"""Reconstruction objectives and the weighted total loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch

from .priors import prior_loss


@dataclass(frozen=True)
class LossWeights:
    """alpha scales the perceptual term, beta the prior distillation term."""

    alpha: float = 0.01
    beta: float = 0.1

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be >= 0, got alpha={self.alpha} beta={self.beta}")


def _as_batched(t: torch.Tensor) -> torch.Tensor:
    return t.unsqueeze(0) if t.dim() == 3 else t


def l1_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Absolute error summed over channels, normalized by spatial area."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    pred, gt = _as_batched(pred), _as_batched(gt)
    h, w = pred.shape[-2:]
    return ((gt - pred).abs().flatten(1).sum(dim=1) / (h * w)).mean()


def perceptual_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    phi: Callable[[torch.Tensor], torch.Tensor],
) -> torch.Tensor:
    """Feature-space distance: norm of the stacked feature difference,
    normalized by the feature volume."""
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(gt.shape)}")
    fp = phi(_as_batched(pred))
    with torch.no_grad():
        fg = phi(_as_batched(gt))
    diff = (fg - fp).flatten(1)
    c, hp, wp = fp.shape[-3:]
    return (torch.linalg.vector_norm(diff, dim=1) / (c * hp * wp)).mean()


def total_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    f_pri: list[torch.Tensor] | None,
    f_gt: list[torch.Tensor] | None,
    phi: Callable[[torch.Tensor], torch.Tensor],
    weights: LossWeights,
    use_distillation: bool = True,
) -> tuple[torch.Tensor, dict]:
    """L1 + alpha * perceptual (+ beta * prior when distillation is active).

    Returns the differentiable total plus a float breakdown for logging;
    the prior entry is None when the distillation term is inactive.
    """
    weights.validate()
    l1 = l1_loss(pred, gt)
    perceptual = perceptual_loss(pred, gt, phi)
    total = l1
    if weights.alpha != 0.0:
        total = total + weights.alpha * perceptual
    prior_value = None
    if use_distillation:
        if f_pri is None or f_gt is None:
            raise ValueError("distillation is active but prior pyramids are missing")
        prior = prior_loss(f_pri, f_gt)
        if weights.beta != 0.0:
            total = total + weights.beta * prior
        prior_value = float(prior.detach())
    breakdown = {
        "total": float(total.detach()),
        "l1": float(l1.detach()),
        "perceptual": float(perceptual.detach()),
        "prior": prior_value,
    }
    return total, breakdown
