"""Versioned checkpoint container shared by all model kinds.

Layout: {format_version, kind, header, state}. Headers hold only plain
JSON-compatible values; state holds tensor state_dicts. Loading verifies
version and kind so an evaluation run cannot silently mix architectures.
"""

from __future__ import annotations

import os

import torch

FORMAT_VERSION = 1


def save_checkpoint(path: str | os.PathLike, kind: str, header: dict, state: dict) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "header": header,
        "state": state,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | os.PathLike, expected_kind: str | None = None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version} in {path}")
    if expected_kind is not None and payload.get("kind") != expected_kind:
        raise ValueError(
            f"checkpoint kind mismatch in {path}: expected {expected_kind!r}, "
            f"got {payload.get('kind')!r}"
        )
    return payload
