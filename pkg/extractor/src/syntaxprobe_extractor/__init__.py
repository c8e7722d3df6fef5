"""Per-layer feature extraction from wav2vec2-style encoders."""

from .audio import AudioError, AudioItem, load_wav, parse_audio_list, resample
from .encoder import (
    EXPECTED_SAMPLE_RATE,
    EncoderInfo,
    build_config,
    conv_output_length,
    load_encoder,
    parameter_checksum,
    reinit_model,
)
from .extract import ExtractionJob, ExtractionResult, extract, extract_utterance, run_job_from_list
from .store import ManifestWriter, StoreError, read_feature_file, write_feature_file

__version__ = "0.1.0"

__all__ = [
    "AudioError",
    "AudioItem",
    "EXPECTED_SAMPLE_RATE",
    "EncoderInfo",
    "ExtractionJob",
    "ExtractionResult",
    "ManifestWriter",
    "StoreError",
    "build_config",
    "conv_output_length",
    "extract",
    "extract_utterance",
    "load_encoder",
    "load_wav",
    "parameter_checksum",
    "parse_audio_list",
    "read_feature_file",
    "reinit_model",
    "resample",
    "run_job_from_list",
    "write_feature_file",
]
