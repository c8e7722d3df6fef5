"""Encoder construction: pretrained checkpoints or seeded random re-inits.

The model reference is either a checkpoint (HuggingFace id or local
directory) or ``random-init:SEED``, which builds the architecture with
its standard initializers. The random baseline isolates what
pretraining, rather than architecture plus pooling, contributes to
probe accuracy.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import torch
from transformers import Wav2Vec2Config, Wav2Vec2Model

EXPECTED_SAMPLE_RATE = 16000

# wav2vec2 large hyperparameters; the 24-layer 1024-dim geometry the
# probing pipeline expects from large checkpoints.
ARCH_PRESETS: dict[str, dict] = {
    "large": dict(
        hidden_size=1024, num_hidden_layers=24, num_attention_heads=16,
        intermediate_size=4096, do_stable_layer_norm=True, feat_extract_norm="layer"),
    "base": dict(
        hidden_size=768, num_hidden_layers=12, num_attention_heads=12,
        intermediate_size=3072),
    # smoke-test geometry: same conv stack, tiny transformer
    "tiny": dict(
        hidden_size=32, num_hidden_layers=2, num_attention_heads=2,
        intermediate_size=64, conv_dim=(16, 16, 16, 16, 16, 16, 16)),
}

_RANDOM_INIT = re.compile(r"^random-init:(\d+)$")


@dataclass(frozen=True)
class EncoderInfo:
    model_ref: str
    arch: str
    hidden_size: int
    layer_count: int  # hidden-state count: conv projection (layer 0) + transformer blocks
    seed: int | None = None


def conv_output_length(n_samples: int, config: Wav2Vec2Config) -> int:
    """Frame count produced by the convolutional feature encoder."""
    n = n_samples
    for kernel, stride in zip(config.conv_kernel, config.conv_stride):
        n = (n - kernel) // stride + 1
    return max(n, 0)


def conv_stride_and_receptive_field(config: Wav2Vec2Config) -> tuple[int, int]:
    """Total stride and receptive field of the conv stack, in samples."""
    stride, field = 1, 1
    for kernel, s in zip(config.conv_kernel, config.conv_stride):
        field += (kernel - 1) * stride
        stride *= s
    return stride, field


def build_config(arch: str) -> Wav2Vec2Config:
    if arch in ARCH_PRESETS:
        return Wav2Vec2Config(**ARCH_PRESETS[arch])
    path = Path(arch)
    if path.suffix == ".json" and path.exists():
        with open(path, encoding="utf-8") as fh:
            return Wav2Vec2Config(**json.load(fh))
    raise ValueError(f"unknown architecture {arch!r}; expected one of "
                     f"{sorted(ARCH_PRESETS)} or a config JSON path")


def reinit_model(config: Wav2Vec2Config, seed: int) -> Wav2Vec2Model:
    """Fresh parameters from the architecture's default initializers, deterministic under seed."""
    torch.manual_seed(seed)
    return Wav2Vec2Model(config)


def load_encoder(model_ref: str, arch: str = "large") -> tuple[Wav2Vec2Model, EncoderInfo]:
    """Resolve ``random-init:SEED`` or a checkpoint id/path into a frozen eval-mode model."""
    match = _RANDOM_INIT.match(model_ref)
    if match:
        seed = int(match.group(1))
        config = build_config(arch)
        model = reinit_model(config, seed)
    else:
        seed = None
        model = Wav2Vec2Model.from_pretrained(model_ref)
        config = model.config
        arch = model_ref
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    info = EncoderInfo(
        model_ref=model_ref, arch=arch, hidden_size=config.hidden_size,
        layer_count=config.num_hidden_layers + 1, seed=seed)
    return model, info


def parameter_checksum(model: torch.nn.Module) -> str:
    """Order-stable digest of every parameter and buffer tensor."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        digest.update(name.encode("utf-8"))
        digest.update(state[name].cpu().numpy().tobytes())
    return digest.hexdigest()
