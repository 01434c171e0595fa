"""Procedural image factories for desk-scale runs and tests.

Two generators live here: textured "scene" images that stand in for
natural photographs in the blur pipeline, and a 10-class labeled pattern
set used to train the teacher classifier without any external dataset.
"""

from __future__ import annotations

import numpy as np

PATTERN_CLASS_NAMES = (
    "h_stripes",
    "v_stripes",
    "d_stripes",
    "checker",
    "dots",
    "rings",
    "disk",
    "cross",
    "gradient",
    "blobs",
)


def _coordinate_grid(height: int, width: int):
    ys, xs = np.mgrid[0:height, 0:width]
    return ys.astype(np.float64), xs.astype(np.float64)


def random_scene(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Layered synthetic scene: gradient sky, geometric objects, texture."""
    ys, xs = _coordinate_grid(height, width)
    img = np.zeros((height, width, 3))

    # background gradient with random direction per channel
    for c in range(3):
        gx, gy = rng.uniform(-1, 1, size=2)
        base = rng.uniform(0.2, 0.8)
        g = gx * xs / width + gy * ys / height
        img[:, :, c] = base + 0.3 * g

    # a handful of solid shapes
    for _ in range(rng.integers(4, 9)):
        color = rng.uniform(0, 1, size=3)
        kind = rng.integers(0, 3)
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        if kind == 0:  # rectangle
            h = rng.uniform(0.1, 0.45) * height
            w = rng.uniform(0.1, 0.45) * width
            mask = (np.abs(ys - cy) < h / 2) & (np.abs(xs - cx) < w / 2)
        elif kind == 1:  # ellipse
            ry = rng.uniform(0.05, 0.3) * height
            rx = rng.uniform(0.05, 0.3) * width
            mask = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 < 1
        else:  # band
            theta = rng.uniform(0, np.pi)
            t = rng.uniform(2, 0.08 * max(height, width))
            d = (xs - cx) * np.cos(theta) + (ys - cy) * np.sin(theta)
            mask = np.abs(d) < t
        img[mask] = 0.7 * img[mask] + 0.3 * color + 0.4 * (color - 0.5)

    # sinusoidal texture so blur has high-frequency content to destroy
    fy, fx = rng.uniform(0.05, 0.45, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    texture = 0.08 * np.sin(2 * np.pi * (fy * ys + fx * xs) + phase)
    img += texture[:, :, None]

    img += rng.normal(0, 0.01, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def make_scene_set(n: int, height: int, width: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [random_scene(rng, height, width) for _ in range(n)]


def _pattern(rng: np.random.Generator, label: int, size: int) -> np.ndarray:
    ys, xs = _coordinate_grid(size, size)
    freq = rng.uniform(2.0, 5.0) / size
    phase = rng.uniform(0, 2 * np.pi)
    if label == 0:
        field = np.sin(2 * np.pi * freq * ys * 2 + phase)
    elif label == 1:
        field = np.sin(2 * np.pi * freq * xs * 2 + phase)
    elif label == 2:
        field = np.sin(2 * np.pi * freq * (xs + ys) * 1.5 + phase)
    elif label == 3:
        n = rng.integers(3, 7)
        field = np.sign(np.sin(np.pi * n * ys / size) * np.sin(np.pi * n * xs / size))
    elif label == 4:
        n = rng.integers(3, 6)
        yy = (ys * n / size) % 1.0 - 0.5
        xx = (xs * n / size) % 1.0 - 0.5
        field = np.where(yy**2 + xx**2 < rng.uniform(0.04, 0.09), 1.0, -1.0)
    elif label == 5:
        cy, cx = size / 2 + rng.uniform(-3, 3, size=2)
        r = np.hypot(ys - cy, xs - cx)
        field = np.sin(2 * np.pi * r * rng.uniform(3, 6) / size + phase)
    elif label == 6:
        cy, cx = size / 2 + rng.uniform(-4, 4, size=2)
        r = np.hypot(ys - cy, xs - cx)
        field = np.where(r < rng.uniform(0.22, 0.38) * size, 1.0, -1.0)
    elif label == 7:
        cy, cx = size / 2 + rng.uniform(-3, 3, size=2)
        t = rng.uniform(0.06, 0.12) * size
        field = np.where((np.abs(ys - cy) < t) | (np.abs(xs - cx) < t), 1.0, -1.0)
    elif label == 8:
        gx, gy = rng.uniform(-1, 1, size=2)
        field = 2 * (gx * xs + gy * ys) / (size * max(abs(gx) + abs(gy), 1e-6))
    elif label == 9:
        field = -np.ones((size, size))
        for _ in range(rng.integers(4, 8)):
            cy, cx = rng.uniform(0, size, size=2)
            r = rng.uniform(0.05, 0.15) * size
            field = np.maximum(field, np.where(np.hypot(ys - cy, xs - cx) < r, 1.0, -1.0))
    else:
        raise ValueError(f"unknown pattern label {label}")

    lo, hi = sorted(rng.uniform(0.0, 1.0, size=2))
    if hi - lo < 0.3:
        hi = min(1.0, lo + 0.3)
    gray = lo + (hi - lo) * (field - field.min()) / max(field.max() - field.min(), 1e-9)
    tint = rng.uniform(0.85, 1.15, size=3)
    img = np.clip(gray[:, :, None] * tint[None, None, :], 0, 1)
    img = np.clip(img + rng.normal(0, 0.03, size=img.shape), 0, 1)
    return img


def pattern_dataset(n_per_class: int, size: int, seed: int):
    """Labeled 10-class pattern set: returns (images (N,H,W,3), labels (N,))."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in range(len(PATTERN_CLASS_NAMES)):
        for _ in range(n_per_class):
            images.append(_pattern(rng, label, size))
            labels.append(label)
    order = rng.permutation(len(images))
    stack = np.stack(images)[order]
    return stack, np.asarray(labels)[order]
