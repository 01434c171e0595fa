"""Image array conventions and PNG I/O.

Images are float numpy arrays of shape (H, W, 3) with values in [0, 1].
Network code uses torch tensors of shape (B, 3, H, W); the converters
here are the only place that layout changes.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image as PILImage

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name}: expected (H, W, 3) array, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name}: empty spatial dims {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name}: contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name}: values outside [0, 1] (min={img.min()}, max={img.max()})")
    return img


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to 8-bit the same way save_image does."""
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def load_image(path: str | os.PathLike) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    validate_image(img)
    PILImage.fromarray(quantize(img)).save(path, format="PNG")


def list_images(directory: str | os.PathLike) -> list[str]:
    entries = sorted(
        f for f in os.listdir(directory)
        if f.lower().endswith(IMAGE_EXTENSIONS)
    )
    return [os.path.join(directory, f) for f in entries]


def to_tensor(img: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, 3) numpy -> (1, 3, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1))).to(dtype).unsqueeze(0)


def from_tensor(t: torch.Tensor, clamp: bool = True) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> (H, W, 3) numpy float64."""
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise ValueError(f"expected batch of 1, got {t.shape[0]}")
        t = t[0]
    arr = t.detach().cpu().to(torch.float64).numpy().transpose(1, 2, 0)
    if clamp:
        arr = np.clip(arr, 0.0, 1.0)
    return arr
