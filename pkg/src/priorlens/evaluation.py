"""Quality metrics, benchmark reports, and prior-map visualization.

PSNR is computed on RGB over all pixels and channels (convention recorded
in report headers); SSIM uses the standard 11x11 Gaussian window form.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .images import from_tensor, load_image, save_image, to_tensor

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
PSNR_CONVENTION = "rgb-all-channels"


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped at 100."""
    _check_pair(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (offsets / sigma) ** 2)
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    mu_x = signal.convolve2d(x, window, mode="valid")
    mu_y = signal.convolve2d(y, window, mode="valid")
    xx = signal.convolve2d(x * x, window, mode="valid") - mu_x**2
    yy = signal.convolve2d(y * y, window, mode="valid") - mu_y**2
    xy = signal.convolve2d(x * y, window, mode="valid") - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x**2 + mu_y**2 + SSIM_C1) * (xx + yy + SSIM_C2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), per channel averaged."""
    _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError(
            f"image min dim {min(a.shape[:2])} smaller than SSIM window {SSIM_WINDOW}"
        )
    window = _gaussian_window()
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    if x.ndim == 2:
        return _ssim_channel(x, y, window)
    return float(np.mean([_ssim_channel(x[..., c], y[..., c], window) for c in range(x.shape[2])]))


@dataclass
class MetricReport:
    config_digest: str
    per_image: list[dict] = field(default_factory=list)

    @property
    def aggregate(self) -> dict:
        n = len(self.per_image)
        if n == 0:
            return {"mean_psnr": None, "mean_ssim": None, "n": 0}
        return {
            "mean_psnr": float(np.mean([e["psnr"] for e in self.per_image])),
            "mean_ssim": float(np.mean([e["ssim"] for e in self.per_image])),
            "n": n,
        }

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "psnr_convention": PSNR_CONVENTION,
            "per_image": self.per_image,
            "aggregate": self.aggregate,
        }

    def write(self, out_dir: str | os.PathLike) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        with open(os.path.join(out_dir, "report.csv"), "w", newline="") as f:
            f.write("name,psnr,ssim\n")
            for entry in self.per_image:
                f.write(f"{entry['name']},{entry['psnr']!r},{entry['ssim']!r}\n")


def config_digest_for(header: dict) -> str:
    canonical = json.dumps(
        {"channels": header.get("channels"), "ablation": header.get("ablation")},
        sort_keys=True,
    )
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def evaluate(
    checkpoint_path,
    manifest_path,
    out_dir: str | os.PathLike | None = None,
    save_images: bool = False,
) -> MetricReport:
    """Deblur every manifest pair and report per-image and mean PSNR/SSIM.

    checkpoint_path may also be a live (system, header) tuple. When out_dir
    is given, writes report.json, report.csv, a summary figure, and
    (optionally) the deblurred PNGs.
    """
    import torch

    from .blur_synth import load_manifest, load_pairs
    from .images import quantize
    from .system import deblur_image, load_system

    if isinstance(checkpoint_path, tuple):
        system, header = checkpoint_path
    else:
        system, payload = load_system(checkpoint_path)
        header = payload["header"]
    manifest, dataset_dir = load_manifest(manifest_path)
    pairs = load_pairs(manifest, dataset_dir)

    report = MetricReport(config_digest=config_digest_for(header))
    with torch.no_grad():
        for pair_meta, (blurry, sharp) in zip(manifest["pairs"], pairs):
            restored = from_tensor(deblur_image(system, to_tensor(blurry)))
            # metrics describe the 8-bit deliverable, not float32 internals
            restored = quantize(restored).astype(np.float64) / 255.0
            name = os.path.splitext(os.path.basename(pair_meta["blurry"]))[0]
            report.per_image.append(
                {"name": name, "psnr": psnr(restored, sharp), "ssim": ssim(restored, sharp)}
            )
            if out_dir is not None and save_images:
                os.makedirs(out_dir, exist_ok=True)
                save_image(restored, os.path.join(out_dir, f"{name}_deblurred.png"))

    if out_dir is not None:
        report.write(out_dir)
        from .reporting import render_eval_figure

        render_eval_figure(report, os.path.join(out_dir, "report.png"))
    return report


def visualize_priors(
    checkpoint_path,
    blurry,
    out_dir: str | os.PathLike,
    image_id: str | None = None,
    upscale: int = 1,
) -> list[str]:
    """Render each prior level as a colormapped PNG.

    Channel-averages each level, min-max normalizes per level, and applies
    a fixed perceptually-uniform colormap. A constant feature map renders
    as a uniform mid-colormap image with a warning.
    """
    import torch

    from .reporting import save_colormapped
    from .system import load_system

    if isinstance(checkpoint_path, tuple):
        system, _ = checkpoint_path
    else:
        system, _ = load_system(checkpoint_path)
    if system.student is None:
        raise ValueError("checkpoint has no prior branch; nothing to visualize")
    if upscale < 1:
        raise ValueError(f"upscale must be >= 1, got {upscale}")

    if isinstance(blurry, (str, os.PathLike)):
        if image_id is None:
            image_id = os.path.splitext(os.path.basename(os.fspath(blurry)))[0]
        blurry = load_image(blurry)
    if image_id is None:
        image_id = "image"

    os.makedirs(out_dir, exist_ok=True)
    system.eval()
    with torch.no_grad():
        pyramid = system.priors(to_tensor(blurry))

    paths = []
    for i, level in enumerate(pyramid, start=1):
        avg = level[0].mean(dim=0).numpy().astype(np.float64)
        lo, hi = float(avg.min()), float(avg.max())
        if hi - lo < 1e-12:
            logger.warning(
                "prior level %d is constant (value %.6g); rendering mid-colormap", i, lo
            )
            normalized = np.full_like(avg, 0.5)
        else:
            normalized = (avg - lo) / (hi - lo)
        path = os.path.join(out_dir, f"{image_id}_prior_L{i}.png")
        save_colormapped(normalized, path, upscale=upscale)
        paths.append(path)
    return paths
