"""Token vectors from frame representations, and probing dataset assembly.

A token owns the frames whose centers fall inside its [start, end) span;
centers rather than edges avoid double-counting boundary frames. Tokens
too short to contain any center fall back to the single frame nearest
their midpoint, so every token yields a vector and no row is dropped.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import deplabel, featurestore, treebank
from .deplabel import LabelVocab
from .errors import DataError

CACHE_ENV_VAR = "SYNTAXPROBE_CACHE_DIR"
TASKS = ("pos", "dep")


def _frames_in_span_ex(
    start_s: float, end_s: float, hop_s: float, window_s: float, frame_count: int
) -> tuple[np.ndarray, bool]:
    if not start_s < end_s:
        raise ValueError(f"empty span [{start_s}, {end_s})")
    if frame_count < 1:
        raise ValueError("frame_count must be at least 1")
    centers = np.arange(frame_count) * hop_s + window_s / 2
    indices = np.nonzero((centers >= start_s) & (centers < end_s))[0]
    if indices.size:
        return indices, False
    midpoint = (start_s + end_s) / 2
    # argmin breaks ties toward the lower index
    return np.array([int(np.argmin(np.abs(centers - midpoint)))]), True


def frames_in_span(
    start_s: float, end_s: float, hop_s: float, window_s: float, frame_count: int
) -> np.ndarray:
    """Indices of frames whose center lies in [start, end), with nearest-frame fallback."""
    indices, _ = _frames_in_span_ex(start_s, end_s, hop_s, window_s, frame_count)
    return indices


def pool_token(frames: np.ndarray) -> np.ndarray:
    """Coordinate-wise mean of a token's frames, accumulated in float64."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError(f"pool_token needs a non-empty (m, D) frame list, got {frames.shape}")
    return frames.mean(axis=0, dtype=np.float64).astype(np.float32)


@dataclass
class ProbeDataset:
    """Pooled token vectors with class ids for one (split, layer, task)."""

    X: np.ndarray  # (N, D) float32
    y: np.ndarray  # (N,) int64 class ids, -1 on OOV rows
    oov_mask: np.ndarray  # (N,) bool
    vocab: LabelVocab
    layer: int
    task: str
    meta: list[tuple[str, int]] | None = None  # (utterance_id, token_index) per row
    gold_labels: list = field(default_factory=list)  # original labels, pre-vocab
    fallback_count: int = 0  # tokens pooled via the nearest-frame fallback

    def __post_init__(self):
        if len(self.X) != len(self.y) or len(self.y) != len(self.oov_mask):
            raise DataError("X, y and oov_mask must have matching lengths")
        if self.meta is not None and len(self.meta) != len(self.y):
            raise DataError("meta must have one entry per row")

    def __len__(self) -> int:
        return len(self.y)


def utterance_labels(utt: treebank.Utterance, task: str) -> list:
    if task == "pos":
        return [t.pos for t in utt.tokens]
    if task == "dep":
        return deplabel.encode_relative_heads(utt.heads)
    raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")


def split_labels(split: treebank.Treebank, task: str) -> list:
    return [label for utt in split for label in utterance_labels(utt, task)]


def _treebank_digest(split: treebank.Treebank) -> str:
    import io

    buf = io.StringIO()
    treebank.serialize_treebank(split, buf)
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


def _pool_split(
    split: treebank.Treebank, manifest: featurestore.Manifest, layer: int
) -> tuple[np.ndarray, int]:
    """Pooled vectors for every token of the split, in corpus order."""
    rows: list[np.ndarray] = []
    fallbacks = 0
    dim: int | None = None
    for utt in split:
        entry = manifest.entry(utt.audio_ref)
        frames = featurestore.read_layer(manifest, utt.audio_ref, layer)
        expected = featurestore.expected_frame_count(
            entry.duration_s, entry.frame_hop_s, entry.frame_window_s)
        if abs(frames.shape[0] - expected) > 1:
            raise DataError(
                f"utterance {utt.id!r}: file has {frames.shape[0]} frames but "
                f"{expected} expected from duration {entry.duration_s}s")
        if dim is None:
            dim = frames.shape[1]
        elif frames.shape[1] != dim:
            raise DataError(f"utterance {utt.id!r}: dimension {frames.shape[1]} != {dim}")
        for tok in utt.tokens:
            try:
                idx, fell_back = _frames_in_span_ex(
                    tok.start_time, tok.end_time,
                    entry.frame_hop_s, entry.frame_window_s, frames.shape[0])
            except ValueError as exc:
                raise DataError(
                    f"utterance {utt.id!r} token {tok.index}: {exc}; "
                    "validate and filter the treebank before pooling") from None
            fallbacks += fell_back
            rows.append(pool_token(frames[idx]))
    if not rows:
        raise DataError("split contains no tokens")
    return np.vstack(rows), fallbacks


class PoolCache:
    """Disk cache of pooled vectors, one featurestore file (L=1) per key."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.manifest_path = self.directory / "cache_manifest.json"

    @staticmethod
    def from_env(cache_dir: str | Path | None = None) -> "PoolCache | None":
        directory = cache_dir or os.environ.get(CACHE_ENV_VAR)
        return PoolCache(directory) if directory else None

    def _load_index(self) -> dict:
        if not self.manifest_path.exists():
            return {}
        with open(self.manifest_path, encoding="utf-8") as fh:
            return json.load(fh)

    def _save_index(self, index: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self.manifest_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(index, fh, indent=2, sort_keys=True)
        os.replace(tmp, self.manifest_path)

    @staticmethod
    def key(treebank_digest: str, layer: int, task: str, vocab_digest: str, standardize: bool) -> str:
        raw = json.dumps([treebank_digest, layer, task, vocab_digest, standardize])
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:32]

    def get(self, key: str) -> tuple[np.ndarray, int] | None:
        record = self._load_index().get(key)
        if record is None:
            return None
        path = self.directory / record["file"]
        if not path.exists():
            return None
        X = featurestore.read_all_layers(path)[0]
        return X, int(record["fallback_count"])

    def put(self, key: str, X: np.ndarray, fallback_count: int, meta: dict) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        filename = key + ".spb"
        featurestore.write_feature_file(self.directory / filename, X[np.newaxis, :, :])
        index = self._load_index()
        index[key] = {"file": filename, "fallback_count": int(fallback_count), **meta}
        self._save_index(index)


def build_probe_dataset(
    split: treebank.Treebank,
    manifest: featurestore.Manifest,
    layer: int,
    task: str,
    vocab: LabelVocab | None = None,
    *,
    standardize: bool = False,
    cache: PoolCache | None = None,
) -> ProbeDataset:
    """One row per token of the split, in corpus order.

    ``vocab=None`` builds the vocabulary from this split (training use);
    dev/test splits must receive the training vocabulary so unseen labels
    surface as OOV rows instead of silently growing the class set.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}, expected one of {TASKS}")
    labels = split_labels(split, task)
    if vocab is None:
        vocab = deplabel.build_label_vocab(labels)
    y, oov_mask = deplabel.map_labels(labels, vocab)
    meta = [(utt.id, tok.index) for utt in split for tok in utt.tokens]

    X: np.ndarray | None = None
    fallback_count = 0
    cache_key = None
    if cache is not None:
        cache_key = PoolCache.key(_treebank_digest(split), layer, task, vocab.digest(), standardize)
        cached = cache.get(cache_key)
        if cached is not None:
            X, fallback_count = cached
    if X is None:
        X, fallback_count = _pool_split(split, manifest, layer)
        if standardize:
            mean = X.mean(axis=0, dtype=np.float64)
            std = X.std(axis=0, dtype=np.float64)
            std[std == 0] = 1.0
            X = ((X - mean) / std).astype(np.float32)
        if cache is not None and cache_key is not None:
            cache.put(cache_key, X, fallback_count,
                      {"layer": layer, "task": task, "vocab": vocab.digest(),
                       "treebank": _treebank_digest(split), "standardize": standardize})

    if len(X) != len(y):
        raise DataError(f"pooled {len(X)} rows for {len(y)} tokens")
    return ProbeDataset(
        X=X, y=y, oov_mask=oov_mask, vocab=vocab, layer=layer, task=task,
        meta=meta, gold_labels=labels, fallback_count=fallback_count,
    )
