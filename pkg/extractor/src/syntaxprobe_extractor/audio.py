"""Audio loading and the job's audio list format.

The audio list is a TSV with two or three columns per line:
``path<TAB>utterance_id[<TAB>sample_rate]``. A declared sample rate is
checked against the file header; mismatches are errors rather than
silent resampling surprises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


class AudioError(RuntimeError):
    pass


@dataclass(frozen=True)
class AudioItem:
    path: Path
    utterance_id: str
    sample_rate: int | None = None  # None: trust the file header


def parse_audio_list(path: str | Path) -> list[AudioItem]:
    items: list[AudioItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) not in (2, 3):
                raise AudioError(
                    f"{path}:{line_no}: expected 'path<TAB>utterance_id[<TAB>sample_rate]'")
            rate = None
            if len(cols) == 3:
                try:
                    rate = int(cols[2])
                except ValueError:
                    raise AudioError(f"{path}:{line_no}: bad sample rate {cols[2]!r}") from None
            if cols[1] in seen:
                raise AudioError(f"{path}:{line_no}: duplicate utterance id {cols[1]!r}")
            seen.add(cols[1])
            items.append(AudioItem(path=Path(cols[0]), utterance_id=cols[1], sample_rate=rate))
    if not items:
        raise AudioError(f"audio list {path} is empty")
    return items


_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def load_wav(item: AudioItem) -> tuple[np.ndarray, int]:
    """Mono float32 samples in [-1, 1] plus the file's sample rate."""
    try:
        rate, data = wavfile.read(item.path)
    except FileNotFoundError:
        raise AudioError(f"audio file not found: {item.path}") from None
    except ValueError as exc:
        raise AudioError(f"{item.path}: not a readable WAV file ({exc})") from None
    if item.sample_rate is not None and rate != item.sample_rate:
        raise AudioError(
            f"{item.path}: header says {rate} Hz but the audio list declares {item.sample_rate}")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.uint8:
        samples = (data.astype(np.float32) - 128.0) / 128.0
    elif data.dtype in _PCM_SCALE:
        samples = data.astype(np.float32) / _PCM_SCALE[data.dtype]
    else:
        samples = data.astype(np.float32)
    if not np.all(np.isfinite(samples)):
        raise AudioError(f"{item.path}: non-finite samples")
    return samples, int(rate)


def resample(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    if rate == target_rate:
        return samples
    g = math.gcd(rate, target_rate)
    return resample_poly(samples, target_rate // g, rate // g).astype(np.float32)
