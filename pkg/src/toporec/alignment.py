"""Word-piece tokenization, label propagation onto pieces, and merging back."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import TaggedSentence
from .labels import IGNORE, LABELS, label_ids

logger = logging.getLogger(__name__)

CONTINUATION = "##"
CLS, SEP, PAD, UNK = "[CLS]", "[SEP]", "[PAD]", "[UNK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)


class PieceVocab:
    """Immutable piece -> id table; line order of the vocab file gives the ids."""

    def __init__(self, pieces: Sequence[str], max_chars_per_word: int = 100):
        self._pieces = list(pieces)
        self._ids = {}
        for i, p in enumerate(self._pieces):
            if p in self._ids:
                raise ValueError(f"duplicate piece {p!r} at id {i}")
            self._ids[p] = i
        missing = [t for t in SPECIAL_TOKENS if t not in self._ids]
        if missing:
            raise ValueError(f"vocabulary lacks special tokens {missing}")
        self.max_chars_per_word = max_chars_per_word

    @classmethod
    def from_file(cls, path: str | Path) -> "PieceVocab":
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f])

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(p + "\n" for p in self._pieces), encoding="utf-8")

    def __len__(self) -> int:
        return len(self._pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, PieceVocab) and self._pieces == other._pieces

    def id(self, piece: str) -> int:
        return self._ids.get(piece, self._ids[UNK])

    def piece(self, piece_id: int) -> str:
        return self._pieces[piece_id]

    @property
    def pieces(self) -> list[str]:
        return list(self._pieces)

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def cls_id(self) -> int:
        return self._ids[CLS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]


def build_toy_vocab(words: Iterable[str]) -> PieceVocab:
    """Deterministic small vocabulary for the miniature encoder.

    Holds every character (bare and ``##``-prefixed) plus every full word and
    its ``##`` form, so any word made of seen characters tokenizes without UNK.
    """
    chars: set[str] = set()
    full: set[str] = set()
    for w in words:
        chars.update(w)
        full.add(w)
    entries = set()
    for item in chars | full:
        entries.add(item)
        entries.add(CONTINUATION + item)
    entries -= set(SPECIAL_TOKENS)
    return PieceVocab(list(SPECIAL_TOKENS) + sorted(entries))


def tokenize_word(word: str, vocab: PieceVocab) -> list[str]:
    """Greedy longest-match-first decomposition of a single word."""
    if len(word) > vocab.max_chars_per_word:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        match = None
        while start < end:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION + candidate
            if candidate in vocab:
                match = candidate
                break
            end -= 1
        if match is None:
            return [UNK]
        pieces.append(match)
        start = end
    return pieces


@dataclass(frozen=True)
class PieceSequence:
    """One padded model input plus the bookkeeping needed to undo it.

    ``word_spans[i]`` is the half-open piece range of word ``i``; only the
    first ``len(word_spans)`` input words survived truncation.
    """

    piece_ids: tuple[int, ...]
    piece_labels: tuple[int, ...]
    mask: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]
    pieces: tuple[str, ...]
    words: tuple[str, ...]
    dropped_words: int = 0

    @property
    def max_len(self) -> int:
        return len(self.piece_ids)


def _align(
    words: Sequence[str],
    labels: Sequence[int] | None,
    vocab: PieceVocab,
    max_len: int,
) -> PieceSequence:
    if max_len < 3:
        raise ValueError("max_len must leave room for at least one content piece")
    capacity = max_len - 2
    pieces: list[str] = [CLS]
    piece_labels: list[int] = [IGNORE]
    spans: list[tuple[int, int]] = []
    kept = 0
    for i, word in enumerate(words):
        word_pieces = tokenize_word(word, vocab)
        if len(pieces) - 1 + len(word_pieces) > capacity:
            break
        start = len(pieces)
        pieces.extend(word_pieces)
        label = IGNORE if labels is None else labels[i]
        piece_labels.extend([label] * len(word_pieces))
        spans.append((start, len(pieces)))
        kept += 1
    dropped = len(words) - kept
    if dropped:
        logger.debug("truncated %d of %d words to fit max_len=%d", dropped, len(words), max_len)
    pieces.append(SEP)
    piece_labels.append(IGNORE)
    real = len(pieces)
    pad = max_len - real
    ids = [vocab.id(p) for p in pieces] + [vocab.pad_id] * pad
    return PieceSequence(
        piece_ids=tuple(ids),
        piece_labels=tuple(piece_labels + [IGNORE] * pad),
        mask=tuple([1] * real + [0] * pad),
        word_spans=tuple(spans),
        pieces=tuple(pieces + [PAD] * pad),
        words=tuple(words[:kept]),
        dropped_words=dropped,
    )


def align(sentence: TaggedSentence, vocab: PieceVocab, max_len: int = 128) -> PieceSequence:
    """Expand a labelled sentence into pieces, copying each word's label to all its pieces.

    Words that would push the content past ``max_len - 2`` pieces are dropped
    whole, together with everything after them; ``dropped_words`` says how many.
    """
    return _align(sentence.words, label_ids(sentence.labels), vocab, max_len)


def align_words(words: Sequence[str], vocab: PieceVocab, max_len: int = 128) -> PieceSequence:
    """Unlabelled variant used at inference time; every position carries IGNORE."""
    return _align(words, None, vocab, max_len)


def window_words(words: Sequence[str], vocab: PieceVocab, max_len: int = 128) -> list[list[str]]:
    """Split a word list into consecutive chunks that each fit in ``max_len``.

    A word too long to fit even on its own is replaced by the unknown piece's
    text so that no chunk is ever empty.
    """
    capacity = max_len - 2
    if capacity < 1:
        raise ValueError("max_len must leave room for at least one content piece")
    windows: list[list[str]] = []
    current: list[str] = []
    used = 0
    for word in words:
        n = len(tokenize_word(word, vocab))
        if n > capacity:
            word, n = UNK, 1
        if used + n > capacity:
            windows.append(current)
            current, used = [], 0
        current.append(word)
        used += n
    if current:
        windows.append(current)
    return windows


def merge(
    pieces: PieceSequence,
    predicted_labels: Sequence[int],
    confidences: Sequence[float] | None = None,
) -> list[tuple[str, str, float]]:
    """Collapse piece-level predictions to ``(word, label, confidence)`` records.

    The word text is its pieces joined with the ``##`` marker stripped; label
    and confidence come from the word's first piece. A word containing the
    unknown piece falls back to its original surface form.
    """
    n = len(pieces.piece_ids)
    if len(predicted_labels) != n or (confidences is not None and len(confidences) != n):
        raise AssertionError(
            f"predictions cover {len(predicted_labels)} positions, sequence has {n}"
        )
    records = []
    for (start, end), original in zip(pieces.word_spans, pieces.words):
        if not (0 < start < end <= n) or not all(pieces.mask[start:end]):
            raise AssertionError(f"word span {(start, end)} outside the content region")
        parts = pieces.pieces[start:end]
        if UNK in parts:
            text = original
        else:
            text = "".join(p[len(CONTINUATION):] if p.startswith(CONTINUATION) else p for p in parts)
        label = int(predicted_labels[start])
        conf = 1.0 if confidences is None else float(confidences[start])
        records.append((text, LABELS[label], conf))
    return records
