"""Binary interchange format for per-layer frame representations.

One file per utterance: a 20-byte header (magic ``SPB1``, version, layer
count L, frame count T, dimension D as little-endian u32) followed by
L*T*D little-endian float32 values, layer-major then frame-major. The
layer-major layout lets a single layer stream sequentially from disk,
which is what the layer sweep does across the corpus.

A JSON manifest (``manifest.json``) beside the feature files maps each
utterance id to its file and framing metadata.
"""

from __future__ import annotations

import json
import math
import os
import re
import struct
import tempfile
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FeatureFormatError, ManifestError

MAGIC = b"SPB1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")  # magic, version, L, T, D
HEADER_SIZE = _HEADER.size  # 20 bytes

DEFAULT_HOP_S = 0.020
DEFAULT_WINDOW_S = 0.025
MANIFEST_NAME = "manifest.json"


def expected_frame_count(duration_s: float, hop_s: float, window_s: float) -> int:
    """floor((duration - window)/hop) + 1; 0 (with a warning) for too-short audio."""
    if hop_s <= 0 or window_s <= 0:
        raise ValueError("hop and window must be strictly positive")
    if duration_s < window_s:
        warnings.warn(
            f"duration {duration_s}s shorter than analysis window {window_s}s",
            stacklevel=2,
        )
        return 0
    # The epsilon absorbs float noise when duration - window is an exact
    # multiple of the hop.
    return int(math.floor((duration_s - window_s) / hop_s + 1e-9)) + 1


# ---------------------------------------------------------------------------
# file-level reader/writer


def write_feature_file(path: str | Path, layers: np.ndarray) -> None:
    """Write an (L, T, D) float array bit-exactly in the interchange format."""
    layers = np.asarray(layers)
    if layers.ndim != 3:
        raise FeatureFormatError(f"expected an (L, T, D) array, got shape {layers.shape}")
    if not np.all(np.isfinite(layers)):
        raise FeatureFormatError("feature arrays must be finite (no NaN/inf)")
    L, T, D = layers.shape
    data = np.ascontiguousarray(layers, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, L, T, D))
        fh.write(data.tobytes(order="C"))


def read_feature_header(path: str | Path) -> tuple[int, int, int]:
    """Validate magic/version/size and return (L, T, D)."""
    path = Path(path)
    try:
        size = path.stat().st_size
        with open(path, "rb") as fh:
            raw = fh.read(HEADER_SIZE)
    except FileNotFoundError:
        raise FeatureFormatError(f"feature file not found: {path}") from None
    if len(raw) < HEADER_SIZE:
        raise FeatureFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, L, T, D = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FeatureFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FeatureFormatError(f"{path}: unsupported version {version}")
    expected_size = HEADER_SIZE + 4 * L * T * D
    if size != expected_size:
        raise FeatureFormatError(
            f"{path}: size {size} does not match header (expected {expected_size})")
    return L, T, D


def read_layer_file(path: str | Path, layer: int) -> np.ndarray:
    """Read a single layer's (T, D) float32 matrix without touching other layers."""
    L, T, D = read_feature_header(path)
    if not 0 <= layer < L:
        raise FeatureFormatError(f"{path}: layer {layer} out of range [0, {L})")
    count = T * D
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE + 4 * layer * count)
        raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise FeatureFormatError(f"{path}: truncated layer {layer}")
    return np.frombuffer(raw, dtype="<f4").reshape(T, D)


def read_all_layers(path: str | Path) -> np.ndarray:
    L, T, D = read_feature_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        raw = fh.read(4 * L * T * D)
    return np.frombuffer(raw, dtype="<f4").reshape(L, T, D)


def validate_feature_file(path: str | Path) -> tuple[int, int, int]:
    """Full check: header, size formula, and finiteness of every float."""
    shape = read_feature_header(path)
    if not np.all(np.isfinite(read_all_layers(path))):
        raise FeatureFormatError(f"{path}: non-finite values in payload")
    return shape


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ManifestEntry:
    path: str  # relative to the manifest's directory
    duration_s: float
    sample_rate: int
    layer_count: int
    dim: int
    frame_hop_s: float = DEFAULT_HOP_S
    frame_window_s: float = DEFAULT_WINDOW_S

    def __post_init__(self):
        if self.frame_hop_s <= 0 or self.frame_window_s <= 0:
            raise ManifestError("frame hop and window must be strictly positive")


class Manifest:
    """Maps utterance ids to feature files plus framing metadata."""

    def __init__(self, root: str | Path, entries: dict[str, ManifestEntry] | None = None):
        self.root = Path(root)
        self.entries: dict[str, ManifestEntry] = dict(entries or {})

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ManifestError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
        try:
            entries = {uid: ManifestEntry(**entry) for uid, entry in data["entries"].items()}
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"manifest {path} has unexpected structure: {exc}") from None
        return cls(root=path.parent, entries=entries)

    def save(self, path: str | Path | None = None) -> Path:
        """Atomic write (temp file + rename) of the manifest JSON."""
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        payload = {"entries": {uid: asdict(e) for uid, e in sorted(self.entries.items())}}
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
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

    def entry(self, utterance_id: str) -> ManifestEntry:
        try:
            return self.entries[utterance_id]
        except KeyError:
            raise ManifestError(f"utterance {utterance_id!r} not in manifest") from None

    def feature_path(self, utterance_id: str) -> Path:
        return self.root / self.entry(utterance_id).path

    def common_layer_count(self) -> int:
        counts = {e.layer_count for e in self.entries.values()}
        if not counts:
            raise ManifestError("manifest has no entries")
        if len(counts) > 1:
            raise ManifestError(f"entries disagree on layer_count: {sorted(counts)}")
        return counts.pop()


def _safe_filename(utterance_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", utterance_id) + ".spb"


def write_features(
    manifest: Manifest,
    utterance_id: str,
    layers: np.ndarray,
    *,
    duration_s: float,
    sample_rate: int = 16000,
    hop_s: float = DEFAULT_HOP_S,
    window_s: float = DEFAULT_WINDOW_S,
    save_manifest: bool = True,
) -> Path:
    """Write one utterance's (L, T, D) features and register it in the manifest."""
    layers = np.asarray(layers)
    if layers.ndim != 3:
        raise FeatureFormatError(f"expected an (L, T, D) array, got shape {layers.shape}")
    L, _, D = layers.shape
    manifest.root.mkdir(parents=True, exist_ok=True)
    rel = _safe_filename(utterance_id)
    write_feature_file(manifest.root / rel, layers)
    manifest.entries[utterance_id] = ManifestEntry(
        path=rel, duration_s=float(duration_s), sample_rate=int(sample_rate),
        layer_count=int(L), dim=int(D),
        frame_hop_s=float(hop_s), frame_window_s=float(window_s),
    )
    if save_manifest:
        manifest.save()
    return manifest.root / rel


def read_layer(manifest: Manifest, utterance_id: str, layer: int) -> np.ndarray:
    """Read one layer of one utterance through the manifest."""
    entry = manifest.entry(utterance_id)
    if not 0 <= layer < entry.layer_count:
        raise FeatureFormatError(
            f"layer {layer} out of range [0, {entry.layer_count}) for {utterance_id!r}")
    return read_layer_file(manifest.root / entry.path, layer)
