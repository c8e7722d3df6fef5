"""Accuracy/UAS, per-label precision/recall/F1, and report emission.

On relative-head labels, token accuracy is the unlabeled attachment
score. Gold labels unseen in training (OOV) stay in the denominator and
always count as errors; they appear as a single aggregate row in
per-label breakdowns.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import IO, Sequence

import numpy as np

from .deplabel import LabelVocab

OOV_ROW_LABEL = "OOV"


@dataclass(frozen=True)
class LabelScore:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    per_label: tuple[LabelScore, ...]
    n_items: int
    oov_errors: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_items": self.n_items,
            "oov_errors": self.oov_errors,
            "per_label": [asdict(s) for s in self.per_label],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            accuracy=data["accuracy"],
            per_label=tuple(LabelScore(**s) for s in data["per_label"]),
            n_items=data["n_items"],
            oov_errors=data["oov_errors"],
        )


def _as_arrays(pred: Sequence, gold: Sequence, oov_mask: Sequence | None):
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape or pred.ndim != 1:
        raise ValueError(f"pred/gold shape mismatch: {pred.shape} vs {gold.shape}")
    if oov_mask is None:
        oov = np.zeros(len(gold), dtype=bool)
    else:
        oov = np.asarray(oov_mask, dtype=bool)
        if oov.shape != gold.shape:
            raise ValueError("oov_mask must match pred/gold length")
    return pred, gold, oov


def accuracy(pred: Sequence, gold: Sequence, oov_mask: Sequence | None = None) -> float:
    """Fraction of positions with pred == gold; OOV-gold positions count as wrong."""
    pred, gold, oov = _as_arrays(pred, gold, oov_mask)
    if len(gold) == 0:
        raise ValueError("cannot compute accuracy of zero items")
    correct = (pred == gold) & ~oov
    return float(correct.sum()) / len(gold)


def uas(pred_heads: Sequence[int], gold_heads: Sequence[int]) -> float:
    """Unlabeled attachment score: fraction of tokens with the correct head."""
    pred = np.asarray(pred_heads)
    gold = np.asarray(gold_heads)
    if pred.shape != gold.shape:
        raise ValueError("head arrays must have equal length")
    if len(gold) == 0:
        raise ValueError("cannot compute UAS of zero tokens")
    return float((pred == gold).sum()) / len(gold)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def per_label_prf(
    pred: Sequence, gold: Sequence, vocab: LabelVocab, oov_mask: Sequence | None = None
) -> list[LabelScore]:
    """Per-label precision/recall/F1/support over class ids.

    Rows appear in vocabulary order for every label seen in gold or
    predictions; OOV gold positions are collected into one trailing row
    whose support keeps the total equal to the item count.
    """
    pred, gold, oov = _as_arrays(pred, gold, oov_mask)
    scores: list[LabelScore] = []
    for class_id, label in enumerate(vocab.labels):
        predicted = pred == class_id
        actual = (gold == class_id) & ~oov
        tp = int((predicted & actual).sum())
        fp = int((predicted & ~actual).sum())
        fn = int((~predicted & actual).sum())
        support = int(actual.sum())
        if support == 0 and tp + fp == 0:
            continue
        precision, recall, f1 = _prf(tp, fp, fn)
        scores.append(LabelScore(str(label), precision, recall, f1, support))
    oov_count = int(oov.sum())
    if oov_count:
        scores.append(LabelScore(OOV_ROW_LABEL, 0.0, 0.0, 0.0, oov_count))
    return scores


def evaluate(
    pred: Sequence, gold: Sequence, vocab: LabelVocab, oov_mask: Sequence | None = None
) -> EvalReport:
    pred, gold, oov = _as_arrays(pred, gold, oov_mask)
    return EvalReport(
        accuracy=accuracy(pred, gold, oov),
        per_label=tuple(per_label_prf(pred, gold, vocab, oov)),
        n_items=len(gold),
        oov_errors=int(oov.sum()),
    )


def write_report_json(report: EvalReport, stream: IO[str]) -> None:
    json.dump(report.to_dict(), stream, indent=2)
    stream.write("\n")


def write_per_label_csv(report: EvalReport, stream: IO[str]) -> None:
    """Rows `label,precision,recall,f1,support`, ready for bar-chart plotting."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["label", "precision", "recall", "f1", "support"])
    for score in report.per_label:
        writer.writerow([score.label, repr(score.precision), repr(score.recall),
                         repr(score.f1), score.support])
