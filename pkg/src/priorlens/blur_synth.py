"""Synthetic motion-blur degradation: y = k * x + n.

Kernels come from a random smooth camera-shake trajectory rasterized with
bilinear sub-pixel splatting; degradation convolves per channel with
reflective padding, adds white Gaussian noise, and clamps to [0, 1].
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .images import list_images, load_image, quantize, save_image

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

MIN_SUPPORT = 3
MAX_SUPPORT = 63


@dataclass(frozen=True)
class TrajectoryParams:
    """Random-shake trajectory controls for kernel synthesis."""

    num_control_points: int = 6
    max_extent: float = 8.0
    anxiety: float = 0.4
    seed: int = 0

    def validate(self) -> None:
        if self.num_control_points < 2:
            raise ValueError(f"num_control_points must be >= 2, got {self.num_control_points}")
        if self.max_extent < 0:
            raise ValueError(f"max_extent must be >= 0, got {self.max_extent}")
        if self.anxiety < 0:
            raise ValueError(f"anxiety must be >= 0, got {self.anxiety}")


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise level in intensity units."""

    sigma: float = 0.01

    def validate(self) -> None:
        if not 0.0 <= self.sigma <= 0.1:
            raise ValueError(f"sigma must be in [0, 0.1], got {self.sigma}")


def severe_params(image_size: int, seed: int = 0) -> tuple[TrajectoryParams, int]:
    """Severe-blur preset: trajectory extent >= image_size / 8."""
    extent = max(image_size / 8.0, 4.0)
    support = int(2 * np.ceil(extent / 2) + 3)
    support = int(min(max(support, MIN_SUPPORT), MAX_SUPPORT))
    return TrajectoryParams(max_extent=min(extent, support), seed=seed), support


def _validate_support(support: int) -> None:
    if support % 2 == 0:
        raise ValueError(f"kernel support must be odd, got {support}")
    if not MIN_SUPPORT <= support <= MAX_SUPPORT:
        raise ValueError(
            f"kernel support must be in [{MIN_SUPPORT}, {MAX_SUPPORT}], got {support}"
        )


def synthesize_kernel(params: TrajectoryParams, support: int) -> np.ndarray:
    """Rasterize a jittered control-point trajectory into a normalized kernel.

    Deterministic for a given (params, support). The trajectory is scaled so
    its bounding box never exceeds params.max_extent, which itself must fit
    inside the support.
    """
    _validate_support(support)
    params.validate()
    if params.max_extent > support:
        raise ValueError(
            f"max_extent {params.max_extent} exceeds kernel support {support}"
        )

    center = (support - 1) / 2.0
    kernel = np.zeros((support, support))
    if params.max_extent == 0:
        kernel[int(center), int(center)] = 1.0
        return kernel

    rng = np.random.default_rng(params.seed)
    n_ctrl = params.num_control_points
    steps = rng.normal(0.0, 1.0, size=(n_ctrl - 1, 2))
    ctrl = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
    ctrl += params.anxiety * rng.normal(0.0, 1.0, size=ctrl.shape)

    # dense piecewise-linear resampling of the control polyline
    n_dense = max(16 * support, 128)
    t_ctrl = np.linspace(0.0, 1.0, n_ctrl)
    t = np.linspace(0.0, 1.0, n_dense)
    traj = np.column_stack([np.interp(t, t_ctrl, ctrl[:, d]) for d in range(2)])

    # center the bounding box on the origin and scale its longest side to
    # max_extent so the extent parameter controls blur severity directly
    traj -= (traj.min(axis=0) + traj.max(axis=0)) / 2.0
    span = (traj.max(axis=0) - traj.min(axis=0)).max()
    if span > 0:
        traj *= params.max_extent / span

    # bilinear splatting; border-clipped weight is restored by normalization
    for y, x in traj + center:
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < support and 0 <= xx < support and wy * wx > 0:
                    kernel[yy, xx] += wy * wx

    total = kernel.sum()
    if total <= 0:
        kernel[int(center), int(center)] = 1.0
        return kernel
    return kernel / total


def apply_degradation(
    sharp: np.ndarray,
    kernel: np.ndarray,
    noise: NoiseSpec,
    seed: int = 0,
) -> np.ndarray:
    """Blur + noise + clamp. Per-channel convolution with reflective padding."""
    noise.validate()
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must be square 2D, got shape {kernel.shape}")
    if kernel.min() < 0 or abs(kernel.sum() - 1.0) > 1e-6:
        raise ValueError("kernel must be nonnegative and sum to 1")
    h, w = sharp.shape[:2]
    if kernel.shape[0] > min(h, w):
        raise ValueError(
            f"kernel support {kernel.shape[0]} larger than image min dim {min(h, w)}"
        )

    out = np.empty_like(sharp, dtype=np.float64)
    for c in range(sharp.shape[2]):
        out[:, :, c] = ndimage.convolve(sharp[:, :, c].astype(np.float64), kernel, mode="reflect")
    if noise.sigma > 0:
        rng = np.random.default_rng(seed)
        out += noise.sigma * rng.standard_normal(out.shape)
    return np.clip(out, 0.0, 1.0)


def _pair_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def build_dataset(
    sharp_dir: str | os.PathLike,
    out_dir: str | os.PathLike,
    n_pairs: int,
    traj: TrajectoryParams,
    noise: NoiseSpec,
    support: int,
    seed: int = 0,
) -> dict:
    """Write paired blurry/sharp PNGs plus a JSON manifest.

    Each pair gets its own seed derived from (seed, index); the manifest
    records everything needed to regenerate the blurry files bit-for-bit.
    """
    traj.validate()
    noise.validate()
    _validate_support(support)
    sources = list_images(sharp_dir)
    if not sources:
        raise ValueError(f"no readable images in sharp_dir {sharp_dir}")
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")

    os.makedirs(out_dir, exist_ok=True)
    pairs = []
    for j in range(n_pairs):
        src = sources[j % len(sources)]
        pair_seed = _pair_seed(seed, j)
        # degrade the quantized sharp image so the manifest round-trips exactly
        sharp = quantize(load_image(src)).astype(np.float64) / 255.0
        kernel = synthesize_kernel(
            TrajectoryParams(traj.num_control_points, traj.max_extent, traj.anxiety, pair_seed),
            support,
        )
        blurry = apply_degradation(sharp, kernel, noise, seed=pair_seed)
        sharp_name = f"pair{j:04d}_sharp.png"
        blurry_name = f"pair{j:04d}_blurry.png"
        save_image(sharp, os.path.join(out_dir, sharp_name))
        save_image(blurry, os.path.join(out_dir, blurry_name))
        pairs.append(
            {
                "sharp": sharp_name,
                "blurry": blurry_name,
                "kernel_seed": pair_seed,
                "sigma": noise.sigma,
            }
        )

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "support": support,
        "trajectory": asdict(traj),
        "pairs": pairs,
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    return manifest


def load_manifest(path: str | os.PathLike) -> tuple[dict, str]:
    """Load a manifest; returns (manifest, dataset_dir). Accepts dir or file path."""
    path = os.fspath(path)
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    with open(path) as f:
        manifest = json.load(f)
    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {version}")
    return manifest, os.path.dirname(os.path.abspath(path))


def load_pairs(manifest: dict, dataset_dir: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """Load all (blurry, sharp) pairs referenced by a manifest."""
    out = []
    for pair in manifest["pairs"]:
        blurry = load_image(os.path.join(dataset_dir, pair["blurry"]))
        sharp = load_image(os.path.join(dataset_dir, pair["sharp"]))
        out.append((blurry, sharp))
    return out
