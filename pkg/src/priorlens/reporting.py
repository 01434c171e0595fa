"""Matplotlib figure rendering for the report paths (train, eval, ablate)."""

from __future__ import annotations

import csv
import os

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_colormapped(values: np.ndarray, path: str | os.PathLike, upscale: int = 1) -> None:
    """Write a [0,1] 2D array as a viridis-colormapped PNG."""
    from matplotlib import cm
    from PIL import Image as PILImage

    rgba = cm.viridis(np.clip(values, 0.0, 1.0))
    rgb = (rgba[..., :3] * 255).round().astype(np.uint8)
    if upscale > 1:
        rgb = np.kron(rgb, np.ones((upscale, upscale, 1), dtype=np.uint8))
    PILImage.fromarray(rgb).save(path, format="PNG")


def render_training_curves(metrics_csv: str | os.PathLike, out_path: str | os.PathLike) -> None:
    steps, series = [], {"total": [], "l1": [], "perceptual": [], "prior": []}
    with open(metrics_csv, newline="") as f:
        for row in csv.DictReader(f):
            steps.append(int(row["step"]))
            for key in series:
                series[key].append(float(row[key]) if row[key] else np.nan)
    if not steps:
        return
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, values in series.items():
        if not np.all(np.isnan(values)):
            ax.plot(steps, values, label=key, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss terms")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_eval_figure(report, out_path: str | os.PathLike) -> None:
    if not report.per_image:
        return
    plt = _pyplot()
    names = [e["name"] for e in report.per_image]
    values = [e["psnr"] for e in report.per_image]
    fig, ax = plt.subplots(figsize=(max(5, 0.4 * len(names)), 4))
    ax.bar(range(len(names)), values, color="#35618f")
    mean = report.aggregate["mean_psnr"]
    ax.axhline(mean, color="crimson", linestyle="--", label=f"mean {mean:.2f} dB")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=90, fontsize=6)
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_ablation_figure(rows: list[dict], out_path: str | os.PathLike) -> None:
    usable = [r for r in rows if r.get("psnr") is not None]
    if not usable:
        return
    plt = _pyplot()
    names = [r["model"] for r in usable]
    values = [r["psnr"] for r in usable]
    fig, ax = plt.subplots(figsize=(max(5, 0.8 * len(names)), 4))
    ax.bar(names, values, color="#4d8f61")
    ax.set_ylabel("mean PSNR (dB)")
    ax.set_title("ablation sweep")
    lo = min(values)
    hi = max(values)
    pad = max(0.2, 0.1 * (hi - lo))
    ax.set_ylim(lo - pad, hi + pad)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
