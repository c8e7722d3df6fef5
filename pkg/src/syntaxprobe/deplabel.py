"""Relative-head-position labels and label vocabularies.

A dependency tree over n tokens becomes one integer label per token: the
signed offset ``head_index - token_index``, with 0 reserved for the root.
Token-level accuracy on these labels is exactly the unlabeled attachment
score, which is what makes the encoding attractive for probing.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import DataError

ROOT_LABEL = 0
OOV_ID = -1


def encode_relative_heads(heads: Sequence[int], n: int | None = None) -> list[int]:
    """Map a head array (0 = root, else 1-based head index) to relative labels."""
    if n is not None and len(heads) != n:
        raise DataError(f"expected {n} heads, got {len(heads)}")
    return [0 if h == 0 else h - i for i, h in enumerate(heads, start=1)]


def is_well_formed_labels(labels: Sequence[int]) -> bool:
    """True iff decoding needs no repair: one 0-label root, all offsets land in range."""
    n = len(labels)
    if sum(1 for l in labels if l == 0) != 1:
        return False
    for i, label in enumerate(labels, start=1):
        if label == 0:
            continue
        head = i + label
        if head < 1 or head > n or head == i:
            return False
    return True


def decode_relative_heads(
    labels: Sequence[int], n: int | None = None, repair: str = "root-fallback"
) -> list[int]:
    """Invert :func:`encode_relative_heads`, repairing ill-formed predictions.

    Under the default ``root-fallback`` policy any out-of-range or
    self-pointing offset becomes a root candidate; if nothing decodes to
    root the first token is forced to be it, and with several candidates
    all but the leftmost re-attach to the leftmost. ``repair="strict"``
    raises on ill-formed input instead.
    """
    if n is not None and len(labels) != n:
        raise DataError(f"expected {n} labels, got {len(labels)}")
    n = len(labels)
    if repair not in ("root-fallback", "strict"):
        raise ValueError(f"unknown repair policy {repair!r}")
    if repair == "strict" and not is_well_formed_labels(labels):
        raise DataError("ill-formed label sequence under strict decoding")

    heads = []
    for i, label in enumerate(labels, start=1):
        head = 0 if label == 0 else i + label
        if head < 0 or head > n or head == i:
            head = 0
        heads.append(head)

    roots = [i for i, h in enumerate(heads) if h == 0]
    if not roots:
        heads[0] = 0
        roots = [0]
    leftmost = roots[0]
    for i in roots[1:]:
        heads[i] = leftmost + 1
    return heads


@dataclass(frozen=True)
class LabelVocab:
    """Bijection between the training labels and class ids 0..K-1.

    Labels are kept in sorted order (lexicographic for POS strings,
    numeric for relative-head integers) so ids are stable across runs.
    """

    labels: tuple
    counts: tuple[int, ...]
    index: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.labels)

    def id_of(self, label) -> int:
        return self.index[label]

    def digest(self) -> str:
        payload = json.dumps([str(l) for l in self.labels]).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def to_dict(self) -> dict:
        kind = "int" if self.labels and isinstance(self.labels[0], (int, np.integer)) else "str"
        return {"labels": [int(l) if kind == "int" else str(l) for l in self.labels],
                "counts": list(self.counts), "label_type": kind}

    @classmethod
    def from_dict(cls, data: dict) -> "LabelVocab":
        caster = int if data.get("label_type") == "int" else str
        labels = tuple(caster(l) for l in data["labels"])
        counts = tuple(data.get("counts", [0] * len(labels)))
        return cls(labels=labels, counts=counts, index={l: i for i, l in enumerate(labels)})


def build_label_vocab(labels: Iterable) -> LabelVocab:
    """Sorted distinct training labels with their frequencies."""
    counter = Counter(labels)
    if not counter:
        raise DataError("cannot build a label vocabulary from no labels")
    kinds = {isinstance(l, str) for l in counter}
    if len(kinds) > 1:
        raise DataError("label vocabulary mixes string and integer labels")
    ordered = sorted(counter)
    return LabelVocab(
        labels=tuple(ordered),
        counts=tuple(counter[l] for l in ordered),
        index={l: i for i, l in enumerate(ordered)},
    )


def map_labels(labels: Sequence, vocab: LabelVocab) -> tuple[np.ndarray, np.ndarray]:
    """Map labels to class ids; unseen labels get id -1 and a True OOV flag.

    OOV rows are never dropped: downstream evaluation counts them as errors.
    """
    ids = np.empty(len(labels), dtype=np.int64)
    oov = np.zeros(len(labels), dtype=bool)
    for i, label in enumerate(labels):
        class_id = vocab.index.get(label)
        if class_id is None:
            ids[i] = OOV_ID
            oov[i] = True
        else:
            ids[i] = class_id
    return ids, oov


def write_label_tsv(
    stream: IO[str],
    rows: Iterable[tuple[str, int, object, object]],
) -> None:
    """Debug export: one `utterance_id  token_index  gold  pred` line per token."""
    for utt_id, token_index, gold, pred in rows:
        stream.write(f"{utt_id}\t{token_index}\t{gold}\t{pred}\n")
