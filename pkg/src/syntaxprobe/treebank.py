"""CoNLL-U treebank ingestion, validation, filtering and splitting.

Utterances are identified by their ``# sent_id`` comment and tokens carry
audio timecodes in the MISC column as ``start=<seconds>|end=<seconds>``.
Parsing is strict about structure (column counts, contiguous indices,
unique ids) and lenient about content: head sanity, timecode sanity and
tagset membership are checked separately by :func:`validate_utterance` so
that bad utterances can be discarded instead of aborting ingestion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import IO, Iterable, Iterator

import numpy as np

from .errors import DataError, TreebankParseError

COLUMN_COUNT = 10
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(COLUMN_COUNT)


@dataclass(frozen=True)
class ColumnLayout:
    """Which CoNLL-U columns carry the fields we retain."""

    pos: int = UPOS
    head: int = HEAD
    misc: int = MISC


@dataclass(frozen=True)
class Token:
    index: int  # 1-based position within the utterance
    form: str
    pos: str
    head: int  # 0 = root, otherwise 1-based index of the head token
    start_time: float  # seconds
    end_time: float


@dataclass(frozen=True)
class Utterance:
    id: str
    tokens: tuple[Token, ...]
    audio_ref: str

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]


@dataclass(frozen=True)
class Treebank:
    utterances: tuple[Utterance, ...]

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    @property
    def tagset(self) -> set[str]:
        """POS tags observed anywhere in the treebank."""
        return {t.pos for u in self.utterances for t in u.tokens}

    def token_count(self) -> int:
        return sum(len(u) for u in self.utterances)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    dev_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.dev_frac, self.test_frac)
        if not all(0.0 < f < 1.0 for f in fracs):
            raise DataError(f"split fractions must lie in (0,1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise DataError(f"split fractions must sum to 1, got {sum(fracs)}")
        if self.seed < 0:
            raise DataError("split seed must be non-negative")


@dataclass(frozen=True)
class Violation:
    code: str  # timecode | token_order | head_range | root_count | head_cycle | unknown_pos
    token: int | None  # 1-based token index, None for utterance-level violations
    message: str

    def to_dict(self) -> dict:
        return {"code": self.code, "token": self.token, "message": self.message}


@dataclass(frozen=True)
class FilterRecord:
    id: str
    violations: tuple[Violation, ...]


# ---------------------------------------------------------------------------
# parsing / serialization


def _parse_misc_times(misc: str, line_no: int) -> tuple[float, float]:
    fields = {}
    for part in misc.split("|"):
        if "=" in part:
            key, value = part.split("=", 1)
            fields[key.strip()] = value.strip()
    times = []
    for key in ("start", "end"):
        if key not in fields:
            raise TreebankParseError(f"MISC column lacks '{key}=' timecode", line_no)
        try:
            value = float(fields[key])
        except ValueError:
            raise TreebankParseError(
                f"unparsable '{key}=' timecode {fields[key]!r}", line_no
            ) from None
        if not math.isfinite(value):
            raise TreebankParseError(f"non-finite '{key}=' timecode", line_no)
        times.append(value)
    return times[0], times[1]


def parse_treebank(source: Iterable[str] | IO[str], layout: ColumnLayout | None = None) -> Treebank:
    """Parse CoNLL-U text into a :class:`Treebank`.

    ``source`` is any iterable of lines (an open file works). Structural
    problems (wrong column count, non-numeric ID/HEAD, missing timecodes,
    duplicate or missing sent_id) raise :class:`TreebankParseError` naming
    the offending line.
    """
    layout = layout or ColumnLayout()
    utterances: list[Utterance] = []
    seen_ids: set[str] = set()

    sent_id: str | None = None
    audio_ref: str | None = None
    tokens: list[Token] = []
    block_line = 0

    def close_block(line_no: int):
        nonlocal sent_id, audio_ref, tokens
        if sent_id is None and not tokens:
            return  # stray blank line
        if sent_id is None:
            raise TreebankParseError("utterance lacks a '# sent_id =' comment", block_line)
        if not tokens:
            raise TreebankParseError(f"utterance {sent_id!r} has no tokens", line_no)
        utterances.append(Utterance(id=sent_id, tokens=tuple(tokens), audio_ref=audio_ref or sent_id))
        sent_id, audio_ref, tokens = None, None, []

    line_no = 0
    for line_no, raw in enumerate(source, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            close_block(line_no)
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = (s.strip() for s in body.split("=", 1))
                if key == "sent_id":
                    if value in seen_ids:
                        raise TreebankParseError(f"duplicate sent_id {value!r}", line_no)
                    seen_ids.add(value)
                    sent_id = value
                    block_line = line_no
                elif key == "audio_ref":
                    audio_ref = value
            continue
        cols = line.split("\t")
        if len(cols) != COLUMN_COUNT:
            raise TreebankParseError(
                f"expected {COLUMN_COUNT} tab-separated columns, got {len(cols)}", line_no
            )
        if sent_id is None:
            raise TreebankParseError("token line before any '# sent_id =' comment", line_no)
        try:
            index = int(cols[ID])
        except ValueError:
            raise TreebankParseError(f"non-numeric token ID {cols[ID]!r}", line_no) from None
        if index != len(tokens) + 1:
            raise TreebankParseError(
                f"token indices must be contiguous from 1, got {index} at position {len(tokens) + 1}",
                line_no,
            )
        try:
            head = int(cols[layout.head])
        except ValueError:
            raise TreebankParseError(f"non-numeric HEAD {cols[layout.head]!r}", line_no) from None
        start, end = _parse_misc_times(cols[layout.misc], line_no)
        tokens.append(
            Token(index=index, form=cols[FORM], pos=cols[layout.pos], head=head,
                  start_time=start, end_time=end)
        )
    close_block(line_no + 1)
    return Treebank(utterances=tuple(utterances))


def _format_seconds(value: float) -> str:
    s = repr(float(value))
    if "e" in s or "E" in s:
        s = format(Decimal(s), "f")
    return s


def serialize_treebank(treebank: Treebank, stream: IO[str]) -> None:
    """Write ``treebank`` as CoNLL-U, inverse of :func:`parse_treebank` on the retained fields."""
    for utt in treebank:
        stream.write(f"# sent_id = {utt.id}\n")
        if utt.audio_ref != utt.id:
            stream.write(f"# audio_ref = {utt.audio_ref}\n")
        for tok in utt.tokens:
            misc = f"start={_format_seconds(tok.start_time)}|end={_format_seconds(tok.end_time)}"
            cols = [str(tok.index), tok.form, "_", tok.pos, "_", "_", str(tok.head), "_", "_", misc]
            stream.write("\t".join(cols) + "\n")
        stream.write("\n")


# ---------------------------------------------------------------------------
# validation / filtering


def validate_utterance(utt: Utterance, tagset: set[str] | None = None) -> list[Violation]:
    """Check one utterance; an empty result means it passes.

    Violations cover (a) per-token timecode sanity, (b) reversed token
    ordering, (c) head range, (d) root count, (e) head cycles and
    (f) tags outside ``tagset`` when one is supplied.
    """
    violations: list[Violation] = []
    n = len(utt.tokens)

    for tok in utt.tokens:
        if tok.start_time >= tok.end_time or tok.start_time < 0:
            violations.append(Violation(
                "timecode", tok.index,
                f"token {tok.index}: start={tok.start_time} end={tok.end_time}"))
    for prev, cur in zip(utt.tokens, utt.tokens[1:]):
        if cur.start_time < prev.start_time:
            violations.append(Violation(
                "token_order", cur.index,
                f"token {cur.index} starts at {cur.start_time} before token "
                f"{prev.index} at {prev.start_time}"))

    heads_ok = True
    for tok in utt.tokens:
        if tok.head < 0 or tok.head > n or tok.head == tok.index:
            heads_ok = False
            violations.append(Violation(
                "head_range", tok.index,
                f"token {tok.index}: head {tok.head} out of range for length {n}"))

    roots = [tok.index for tok in utt.tokens if tok.head == 0]
    if len(roots) != 1:
        violations.append(Violation(
            "root_count", None, f"expected exactly one root, found {len(roots)}"))

    if heads_ok:
        # Parent-following from every token must reach the (a) root within n steps.
        state = [0] * (n + 1)  # 0 unknown, 1 on current path, 2 resolved
        for start in range(1, n + 1):
            if state[start]:
                continue
            path = []
            node = start
            while node != 0 and state[node] == 0:
                state[node] = 1
                path.append(node)
                node = utt.tokens[node - 1].head
            if node != 0 and state[node] == 1:
                # Closed a loop: report the cycle members.
                cycle = path[path.index(node):]
                violations.append(Violation(
                    "head_cycle", min(cycle),
                    "cycle between tokens " + ", ".join(str(i) for i in sorted(cycle))))
            for visited in path:
                state[visited] = 2

    if tagset:
        for tok in utt.tokens:
            if tok.pos not in tagset:
                violations.append(Violation(
                    "unknown_pos", tok.index, f"token {tok.index}: POS {tok.pos!r} not in tagset"))

    return violations


def filter_treebank(
    treebank: Treebank, tagset: set[str] | None = None
) -> tuple[Treebank, list[FilterRecord]]:
    """Keep utterances that pass validation; log the rest with their violations."""
    kept: list[Utterance] = []
    log: list[FilterRecord] = []
    for utt in treebank:
        violations = validate_utterance(utt, tagset)
        if violations:
            log.append(FilterRecord(id=utt.id, violations=tuple(violations)))
        else:
            kept.append(utt)
    return Treebank(utterances=tuple(kept)), log


def write_filter_log(log: list[FilterRecord], stream: IO[str]) -> None:
    """One JSON object per discarded utterance: {"id": ..., "violations": [...]}."""
    for record in log:
        obj = {"id": record.id, "violations": [v.to_dict() for v in record.violations]}
        stream.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# splitting


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_dataset(treebank: Treebank, spec: SplitSpec) -> tuple[Treebank, Treebank, Treebank]:
    """Deterministic utterance-level train/dev/test partition.

    Utterances are shuffled by a permutation drawn from ``spec.seed``, then
    train takes the first round(train_frac*n), dev the next
    round(dev_frac*n) (round half up), test the remainder.
    """
    n = len(treebank)
    if n == 0:
        raise DataError("cannot split an empty treebank")
    n_train = _round_half_up(spec.train_frac * n)
    n_dev = _round_half_up(spec.dev_frac * n)
    n_test = n - n_train - n_dev
    if min(n_train, n_dev, n_test) < 1:
        raise DataError(
            f"split of {n} utterances leaves an empty partition "
            f"(train={n_train}, dev={n_dev}, test={n_test})")
    perm = np.random.default_rng(spec.seed).permutation(n)
    shuffled = [treebank.utterances[i] for i in perm]
    return (
        Treebank(tuple(shuffled[:n_train])),
        Treebank(tuple(shuffled[n_train:n_train + n_dev])),
        Treebank(tuple(shuffled[n_train + n_dev:])),
    )
