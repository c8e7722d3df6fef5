"""Writer for the feature interchange format consumed by the probing toolkit.

This is a standalone implementation of the on-disk contract (binary
``SPB1`` files plus ``manifest.json``); the probing side is consumed
through these files only, never through its Python API.

File layout: 20-byte header (magic ``SPB1``, version, L, T, D as
little-endian u32) followed by L*T*D little-endian float32 values,
layer-major then frame-major.
"""

from __future__ import annotations

import json
import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"SPB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")

FRAME_HOP_S = 0.020
FRAME_WINDOW_S = 0.025
MANIFEST_NAME = "manifest.json"


class StoreError(RuntimeError):
    pass


def write_feature_file(path: str | Path, layers: np.ndarray) -> None:
    layers = np.asarray(layers)
    if layers.ndim != 3:
        raise StoreError(f"expected an (L, T, D) array, got shape {layers.shape}")
    if not np.all(np.isfinite(layers)):
        raise StoreError("refusing to write non-finite features")
    L, T, D = layers.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, L, T, D))
        fh.write(np.ascontiguousarray(layers, dtype="<f4").tobytes(order="C"))


def read_feature_file(path: str | Path) -> np.ndarray:
    """Reader used for self-checks; the probing toolkit has its own."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        magic, version, L, T, D = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != MAGIC or version != VERSION:
            raise StoreError(f"{path}: unrecognized header")
        if size != _HEADER.size + 4 * L * T * D:
            raise StoreError(f"{path}: truncated payload")
        return np.frombuffer(fh.read(), dtype="<f4").reshape(L, T, D)


def safe_filename(utterance_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", utterance_id) + ".spb"


class ManifestWriter:
    """Collects entries during a job and writes manifest.json once at the end."""

    def __init__(self, root: str | Path, *, layer_indexing: str | None = None):
        self.root = Path(root)
        self.layer_indexing = layer_indexing
        self._entries: dict[str, dict] = {}

    def add(
        self,
        utterance_id: str,
        *,
        path: str,
        duration_s: float,
        sample_rate: int,
        layer_count: int,
        dim: int,
    ) -> None:
        # Exactly the keys the probing toolkit's manifest schema defines.
        self._entries[utterance_id] = {
            "path": path,
            "duration_s": float(duration_s),
            "sample_rate": int(sample_rate),
            "layer_count": int(layer_count),
            "dim": int(dim),
            "frame_hop_s": FRAME_HOP_S,
            "frame_window_s": FRAME_WINDOW_S,
        }

    def __len__(self) -> int:
        return len(self._entries)

    def save(self) -> Path:
        payload: dict = {"entries": dict(sorted(self._entries.items()))}
        if self.layer_indexing:
            payload["layer_indexing"] = self.layer_indexing
        path = self.root / MANIFEST_NAME
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest-", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path
