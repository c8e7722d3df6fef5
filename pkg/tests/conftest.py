"""Shared fixtures: tiny treebanks and a synthetic probing corpus.

The synthetic corpus writes a CoNLL-U treebank plus featurestore files
where exactly one layer linearly encodes the token labels and the other
layers are pure noise, so sweep tests can check that informative layers
separate sharply from uninformative ones.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from syntaxprobe import featurestore
from syntaxprobe.treebank import Token, Treebank, Utterance

TINY_CONLLU = """\
# sent_id = u1
1\tAlors\talors\tADV\t_\t_\t4\t_\t_\tstart=0.10|end=0.30
2\tdonc\tdonc\tADV\t_\t_\t4\t_\t_\tstart=0.30|end=0.52
3\tc'\tce\tPRO\t_\t_\t4\t_\t_\tstart=0.52|end=0.60
4\test\têtre\tVRB\t_\t_\t0\t_\t_\tstart=0.60|end=0.84
5\tpour\tpour\tPRE\t_\t_\t4\t_\t_\tstart=0.84|end=1.02
6\teuh\teuh\tINT\t_\t_\t4\t_\t_\tstart=1.02|end=1.20

# sent_id = u2
1\toui\toui\tINT\t_\t_\t0\t_\t_\tstart=0.05|end=0.40
"""


@pytest.fixture
def tiny_conllu_text() -> str:
    return TINY_CONLLU


def make_utterance(uid: str, heads, *, pos=None, token_s=0.2, start=0.0) -> Utterance:
    n = len(heads)
    pos = pos or ["X"] * n
    tokens = tuple(
        Token(index=i + 1, form=f"w{i + 1}", pos=pos[i], head=heads[i],
              start_time=start + i * token_s, end_time=start + (i + 1) * token_s)
        for i in range(n)
    )
    return Utterance(id=uid, tokens=tokens, audio_ref=uid)


def random_tree_heads(n: int, rng: np.random.Generator) -> list[int]:
    """Random recursive tree: each node attaches to an earlier node of a random order."""
    order = rng.permutation(n) + 1
    heads = [0] * n
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        heads[order[k] - 1] = int(parent)
    return heads


def is_valid_tree(heads) -> bool:
    """Independent validity oracle: one root, every token reaches it within n steps."""
    n = len(heads)
    if sum(1 for h in heads if h == 0) != 1:
        return False
    if any(h < 0 or h > n or h == i for i, h in enumerate(heads, start=1)):
        return False
    for i in range(1, n + 1):
        node, steps = i, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n:
                return False
    return True


@dataclass
class SynthCorpus:
    treebank_path: Path
    manifest_path: Path
    tags: list[str]
    n_layers: int
    informative_layer: int
    n_utterances: int


def build_synthetic_corpus(
    root: Path,
    *,
    n_utterances: int = 60,
    n_layers: int = 3,
    dim: int = 16,
    informative_layer: int = 1,
    n_classes: int = 4,
    seed: int = 1234,
    noise: float = 0.3,
    class_sep: float = 3.0,
    min_tokens: int = 3,
    max_tokens: int = 8,
    token_s: float = 0.12,
) -> SynthCorpus:
    rng = np.random.default_rng(seed)
    hop, window = featurestore.DEFAULT_HOP_S, featurestore.DEFAULT_WINDOW_S
    tags = [f"T{i:02d}" for i in range(n_classes)]
    # Skewed priors make the majority-class rate a stable reference for
    # what a probe can milk out of pure-noise layers.
    priors = np.full(n_classes, 0.65 / (n_classes - 1))
    priors[0] = 0.35
    directions = rng.normal(size=(n_classes, dim))
    directions *= class_sep / np.linalg.norm(directions, axis=1, keepdims=True)

    root.mkdir(parents=True, exist_ok=True)
    feature_dir = root / "features"
    manifest = featurestore.Manifest(feature_dir)
    conllu = io.StringIO()

    for u in range(n_utterances):
        uid = f"synth-{u:04d}"
        n = int(rng.integers(min_tokens, max_tokens + 1))
        classes = rng.choice(n_classes, size=n, p=priors)
        heads = random_tree_heads(n, rng)
        duration = n * token_s + 0.04
        frame_count = featurestore.expected_frame_count(duration, hop, window)

        layers = rng.normal(size=(n_layers, frame_count, dim)).astype(np.float32)
        centers = np.arange(frame_count) * hop + window / 2
        owner = np.minimum((centers / token_s).astype(int), n - 1)
        layers[informative_layer] = (
            directions[classes[owner]] + noise * rng.normal(size=(frame_count, dim))
        ).astype(np.float32)

        featurestore.write_features(
            manifest, uid, layers, duration_s=duration, hop_s=hop, window_s=window,
            save_manifest=False)

        conllu.write(f"# sent_id = {uid}\n")
        for i in range(n):
            misc = f"start={i * token_s:.3f}|end={(i + 1) * token_s:.3f}"
            cols = [str(i + 1), f"w{i + 1}", "_", tags[classes[i]], "_", "_",
                    str(heads[i]), "_", "_", misc]
            conllu.write("\t".join(cols) + "\n")
        conllu.write("\n")

    manifest.save()
    treebank_path = root / "corpus.conllu"
    treebank_path.write_text(conllu.getvalue(), encoding="utf-8")
    return SynthCorpus(
        treebank_path=treebank_path,
        manifest_path=feature_dir / featurestore.MANIFEST_NAME,
        tags=tags,
        n_layers=n_layers,
        informative_layer=informative_layer,
        n_utterances=n_utterances,
    )


@pytest.fixture(scope="session")
def small_synth_corpus(tmp_path_factory) -> SynthCorpus:
    return build_synthetic_corpus(tmp_path_factory.mktemp("synth_small"), n_utterances=120)


def majority_rate(treebank: Treebank, task: str) -> float:
    from syntaxprobe.pooling import split_labels

    labels = split_labels(treebank, task)
    values, counts = np.unique(np.array(labels, dtype=object), return_counts=True)
    return counts.max() / counts.sum()
