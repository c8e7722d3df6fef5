from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from syntaxprobe_extractor.encoder import build_config, reinit_model


@pytest.fixture(scope="session")
def tiny_model():
    model = reinit_model(build_config("tiny"), seed=7)
    model.eval()
    return model


def write_wav(path: Path, seconds: float, rate: int = 16000, *, seed: int = 0,
              silent: bool = False) -> Path:
    n = int(seconds * rate)
    if silent:
        samples = np.zeros(n, dtype=np.int16)
    else:
        rng = np.random.default_rng(seed)
        samples = (rng.uniform(-0.3, 0.3, n) * 32767).astype(np.int16)
    wavfile.write(path, rate, samples)
    return path


def write_audio_list(path: Path, rows) -> Path:
    lines = ["\t".join(str(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
