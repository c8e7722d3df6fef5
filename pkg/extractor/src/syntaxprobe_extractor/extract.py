"""The extraction job: audio through a frozen encoder into feature files.

Inference never updates weights. Long recordings fall back to chunked
inference: the signal is cut at fixed sample offsets aligned to the conv
stack's stride, each chunk's input is extended by (receptive field -
stride) samples so the concatenated frame counts add up exactly, and
chunk outputs are concatenated without overlap. Chunk-boundary frames
see a truncated transformer context; that is the price of bounded
memory.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import store
from .audio import AudioItem, load_wav, parse_audio_list, resample
from .encoder import (
    EXPECTED_SAMPLE_RATE,
    EncoderInfo,
    conv_output_length,
    conv_stride_and_receptive_field,
    load_encoder,
)

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_S = 80.0


@dataclass
class ExtractionJob:
    audio: list[AudioItem]
    model_ref: str  # checkpoint id/path or "random-init:SEED"
    output_dir: Path
    arch: str = "large"
    layers: list[int] | None = None  # None: all hidden states
    device: str = "cpu"
    chunk_s: float = DEFAULT_CHUNK_S


@dataclass
class ExtractionResult:
    manifest_path: Path
    info: EncoderInfo
    files: list[Path] = field(default_factory=list)
    frame_counts: dict[str, int] = field(default_factory=dict)


def _select_layers(hidden_states: tuple[torch.Tensor, ...], layers: list[int] | None) -> np.ndarray:
    if layers is None:
        picked = hidden_states
    else:
        count = len(hidden_states)
        bad = [l for l in layers if not 0 <= l < count]
        if bad:
            raise ValueError(f"layer selection {bad} outside [0, {count})")
        picked = tuple(hidden_states[l] for l in layers)
    return torch.stack([h[0] for h in picked]).to(torch.float32).cpu().numpy()


def _forward_chunked(
    model, samples: np.ndarray, layers: list[int] | None, chunk_samples: int
) -> np.ndarray:
    stride, field_samples = conv_stride_and_receptive_field(model.config)
    chunk_samples = max(chunk_samples // stride, 2) * stride
    extension = field_samples - stride

    pieces: list[np.ndarray] = []
    for start in range(0, len(samples), chunk_samples):
        chunk = samples[start:start + chunk_samples + extension]
        if len(chunk) < field_samples:
            break  # shorter than one receptive field: no frames
        batch = torch.from_numpy(chunk).unsqueeze(0)
        with torch.no_grad():
            out = model(batch, output_hidden_states=True)
        pieces.append(_select_layers(out.hidden_states, layers))
    if not pieces:
        raise ValueError("audio shorter than the encoder's receptive field")
    return np.concatenate(pieces, axis=1)


def extract_utterance(
    model, samples: np.ndarray, *, layers: list[int] | None, chunk_s: float
) -> np.ndarray:
    """(L, T, D) float32 hidden states for one utterance."""
    chunk_samples = int(chunk_s * EXPECTED_SAMPLE_RATE)
    expected = conv_output_length(len(samples), model.config)
    if len(samples) > chunk_samples:
        features = _forward_chunked(model, samples, layers, chunk_samples)
        if features.shape[1] != expected:
            warnings.warn(
                f"chunked inference produced {features.shape[1]} frames, conv formula "
                f"gives {expected}; keeping the produced count", stacklevel=2)
    else:
        batch = torch.from_numpy(samples).unsqueeze(0)
        with torch.no_grad():
            out = model(batch, output_hidden_states=True)
        features = _select_layers(out.hidden_states, layers)
    return features


def extract(job: ExtractionJob) -> ExtractionResult:
    """Run the whole job; write one feature file per utterance plus the manifest."""
    model, info = load_encoder(job.model_ref, job.arch)
    model.to(job.device)

    job.output_dir.mkdir(parents=True, exist_ok=True)
    layer_count = info.layer_count if job.layers is None else len(job.layers)
    indexing = ("layer 0 = convolutional encoder output (post projection), "
                "layers 1..{} = transformer blocks".format(info.layer_count - 1))
    if job.layers is not None:
        indexing += f"; this job kept indices {job.layers}"
    manifest = store.ManifestWriter(job.output_dir, layer_indexing=indexing)
    result = ExtractionResult(manifest_path=job.output_dir / store.MANIFEST_NAME, info=info)

    for item in job.audio:
        samples, rate = load_wav(item)
        if rate != EXPECTED_SAMPLE_RATE:
            logger.info("resampling %s from %d Hz", item.utterance_id, rate)
            samples = resample(samples, rate, EXPECTED_SAMPLE_RATE)
        duration_s = len(samples) / EXPECTED_SAMPLE_RATE

        features = extract_utterance(model, samples, layers=job.layers, chunk_s=job.chunk_s)
        filename = store.safe_filename(item.utterance_id)
        store.write_feature_file(job.output_dir / filename, features)
        manifest.add(
            item.utterance_id,
            path=filename,
            duration_s=duration_s,
            sample_rate=EXPECTED_SAMPLE_RATE,
            layer_count=layer_count,
            dim=features.shape[2],
        )
        result.files.append(job.output_dir / filename)
        result.frame_counts[item.utterance_id] = features.shape[1]
        logger.info("%s: %s frames x %s dims x %s layers",
                    item.utterance_id, features.shape[1], features.shape[2], features.shape[0])

    manifest.save()
    return result


def run_job_from_list(
    audio_list: str | Path,
    model_ref: str,
    output_dir: str | Path,
    *,
    arch: str = "large",
    layers: list[int] | None = None,
    device: str = "cpu",
    chunk_s: float = DEFAULT_CHUNK_S,
) -> ExtractionResult:
    job = ExtractionJob(
        audio=parse_audio_list(audio_list),
        model_ref=model_ref,
        output_dir=Path(output_dir),
        arch=arch,
        layers=layers,
        device=device,
        chunk_s=chunk_s,
    )
    return extract(job)
