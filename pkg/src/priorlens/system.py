"""Composite deblurring system and the ablation configuration matrix."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn

from . import PYRAMID_CHANNELS
from .checkpoint import load_checkpoint, save_checkpoint
from .deblur import EMBEDDING_MODES, DeblurNet
from .priors import CrossLevelFusion, StudentNet


@dataclass(frozen=True)
class AblationConfig:
    """Component toggles: distillation loss, cross-level fusion, multi-level
    aggregation, and the prior embedding mode."""

    use_hcl: bool = True
    use_clc: bool = True
    use_mla: bool = True
    embedding: str = "sat"

    def validate(self) -> None:
        if self.embedding not in EMBEDDING_MODES:
            raise ValueError(
                f"embedding must be one of {EMBEDDING_MODES}, got {self.embedding!r}"
            )
        if self.use_hcl and self.embedding == "none":
            raise ValueError("distillation loss requires an active prior embedding")

    @property
    def uses_priors(self) -> bool:
        return self.embedding != "none"


# The eight standard configurations swept by the ablation driver. The
# starred variant feeds priors into the restorer without supervising them,
# which is known to train unstably.
ABLATION_TABLE: dict[str, AblationConfig] = {
    "Net0": AblationConfig(use_hcl=False, use_clc=False, use_mla=False, embedding="none"),
    "Net0*": AblationConfig(use_hcl=False, use_clc=True, use_mla=True, embedding="sat"),
    "Net1": AblationConfig(use_hcl=True, use_clc=False, use_mla=False, embedding="add"),
    "Net2": AblationConfig(use_hcl=True, use_clc=False, use_mla=False, embedding="concat"),
    "Net3": AblationConfig(use_hcl=True, use_clc=False, use_mla=False, embedding="sat"),
    "Net4": AblationConfig(use_hcl=True, use_clc=True, use_mla=False, embedding="sat"),
    "Net5": AblationConfig(use_hcl=True, use_clc=False, use_mla=True, embedding="sat"),
    "Net6": AblationConfig(use_hcl=True, use_clc=True, use_mla=True, embedding="sat"),
}


def ablation_by_name(name: str) -> AblationConfig:
    key = name.strip().lower().replace("_", "").replace("star", "*")
    for canonical, config in ABLATION_TABLE.items():
        if canonical.lower() == key:
            return config
    raise ValueError(
        f"unknown ablation name {name!r}; expected one of {list(ABLATION_TABLE)}"
    )


def canonical_ablation_name(config: AblationConfig) -> str | None:
    for name, candidate in ABLATION_TABLE.items():
        if candidate == config:
            return name
    return None


class DeblurSystem(nn.Module):
    """Prior extractor + fusion + restorer, wired per an AblationConfig."""

    def __init__(
        self,
        ablation: AblationConfig = AblationConfig(),
        channels: tuple[int, ...] = PYRAMID_CHANNELS,
    ):
        super().__init__()
        ablation.validate()
        self.ablation = ablation
        self.channels = tuple(channels)
        self.student = StudentNet(channels) if ablation.uses_priors else None
        self.clc = (
            CrossLevelFusion(channels)
            if (ablation.uses_priors and ablation.use_clc)
            else None
        )
        self.net = DeblurNet(
            embedding=ablation.embedding, use_mla=ablation.use_mla, channels=channels
        )

    def priors(self, blurry: torch.Tensor) -> list[torch.Tensor] | None:
        if self.student is None:
            return None
        m = self.student(blurry)
        return self.clc(m) if self.clc is not None else m

    def forward(
        self, blurry: torch.Tensor
    ) -> tuple[torch.Tensor, list[torch.Tensor] | None]:
        f_pri = self.priors(blurry)
        return self.net(blurry, f_pri), f_pri


def system_header(system: DeblurSystem, train_config: dict | None = None) -> dict:
    return {
        "channels": list(system.channels),
        "ablation": asdict(system.ablation),
        "ablation_name": canonical_ablation_name(system.ablation),
        "train_config": train_config,
    }


def save_system(
    path: str | os.PathLike,
    system: DeblurSystem,
    train_config: dict | None = None,
    extra_state: dict | None = None,
) -> None:
    state = {"system": system.state_dict()}
    if extra_state:
        state.update(extra_state)
    save_checkpoint(path, "deblur_system", system_header(system, train_config), state)


def load_system(path: str | os.PathLike) -> tuple[DeblurSystem, dict]:
    payload = load_checkpoint(path, expected_kind="deblur_system")
    header = payload["header"]
    ablation = AblationConfig(**header["ablation"])
    system = DeblurSystem(ablation, channels=tuple(header["channels"]))
    system.load_state_dict(payload["state"]["system"])
    system.eval()
    return system, payload


@torch.no_grad()
def deblur_image(system: DeblurSystem, blurry: torch.Tensor) -> torch.Tensor:
    """Inference helper: forward pass with [0, 1] clamping."""
    system.eval()
    pred, _ = system(blurry)
    return pred.clamp(0.0, 1.0)
