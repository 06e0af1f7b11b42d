"""Flat binary parameter checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"NAVCKPT\\x01"
    8 bytes   uint64 manifest length M
    M bytes   UTF-8 JSON manifest
    ...       tensor payloads, float32 little-endian, concatenated

The manifest is ``{"format": "navlab-checkpoint", "version": 1,
"header": {...}, "tensors": [{"name", "shape", "offset", "nbytes"}]}`` where
``offset`` counts from the first payload byte. ``header`` carries the
architecture config used for compatibility checks on load.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"NAVCKPT\x01"
FORMAT_NAME = "navlab-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint."""


def save_checkpoint(path: str | Path, tensors: dict[str, torch.Tensor], header: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "header": header or {}, "tensors": entries}
    data = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(data)))
        fh.write(data)
        for raw in blobs:
            fh.write(raw)


def read_manifest(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return _read_manifest(fh)


def _read_manifest(fh) -> dict:
    if fh.read(8) != MAGIC:
        raise CheckpointError("not a navlab checkpoint (bad magic)")
    (length,) = struct.unpack("<Q", fh.read(8))
    manifest = json.loads(fh.read(length).decode("utf-8"))
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')} v{manifest.get('version')}")
    return manifest


def load_checkpoint(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    """Return ``(tensors, header)``; tensors are float32."""
    with open(path, "rb") as fh:
        manifest = _read_manifest(fh)
        payload = fh.read()
    tensors = {}
    for e in manifest["tensors"]:
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CheckpointError(f"truncated payload for {e['name']}")
        arr = np.frombuffer(raw, dtype="<f4").reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.copy())
    return tensors, manifest["header"]


def save_module(path: str | Path, module: torch.nn.Module, header: dict | None = None) -> None:
    save_checkpoint(path, dict(module.state_dict()), header)


def load_into_module(module: torch.nn.Module, tensors: dict[str, torch.Tensor], prefix: str = "",
                     strict: bool = True) -> list[str]:
    """Copy tensors (optionally those under ``prefix``) into ``module``; returns loaded names."""
    own = module.state_dict()
    loaded = []
    for name, t in tensors.items():
        if prefix:
            if not name.startswith(prefix):
                continue
            name = name[len(prefix):]
        if name not in own:
            if strict:
                raise CheckpointError(f"unexpected tensor {name!r}")
            continue
        if tuple(own[name].shape) != tuple(t.shape):
            raise CheckpointError(f"shape mismatch for {name!r}: {tuple(t.shape)} vs {tuple(own[name].shape)}")
        with torch.no_grad():
            own[name].copy_(t.to(own[name].dtype))
        loaded.append(name)
    if strict:
        missing = set(own) - set(loaded)
        if missing:
            raise CheckpointError(f"missing tensors: {sorted(missing)[:5]}")
    return loaded
