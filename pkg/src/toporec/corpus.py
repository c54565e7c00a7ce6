"""CoNLL-style corpus reading, label unification, merging and statistics."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .labels import B_LOC, I_LOC, LABELS, O

logger = logging.getLogger(__name__)

DOCSTART = "-DOCSTART-"


class CorpusError(ValueError):
    pass


class ConllParseError(CorpusError):
    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class UnmappedLabelError(CorpusError):
    def __init__(self, labels: Iterable[str]):
        self.labels = sorted(set(labels))
        super().__init__("no mapping for source labels: " + ", ".join(self.labels))


class BIOViolationError(CorpusError):
    def __init__(self, violations: list[tuple[int, int]]):
        self.violations = violations
        head = ", ".join(f"sentence {s} word {w}" for s, w in violations[:5])
        super().__init__(f"{len(violations)} I-LOC tags without a preceding location tag ({head})")


@dataclass
class TaggedSentence:
    words: list[str]
    labels: list[str]
    source: str = ""

    def __post_init__(self):
        if len(self.words) != len(self.labels):
            raise CorpusError(
                f"{len(self.words)} words but {len(self.labels)} labels"
            )
        for word in self.words:
            if not word or any(ch.isspace() for ch in word):
                raise CorpusError(f"invalid word {word!r}")

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class LabelScheme:
    """Source label vocabulary plus its translation into the unified tags.

    The unified tags always map to themselves, which is what makes
    unification idempotent.
    """

    name: str
    mapping: Mapping[str, str]

    def __post_init__(self):
        full = {label: label for label in LABELS}
        full.update(self.mapping)
        bad = {t for t in full.values() if t not in LABELS}
        if bad:
            raise CorpusError(f"scheme {self.name!r} maps onto unknown targets {sorted(bad)}")
        object.__setattr__(self, "mapping", full)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.mapping)

    @property
    def location_positive(self) -> tuple[str, ...]:
        return tuple(src for src, tgt in self.mapping.items() if tgt in (B_LOC, I_LOC))

    @classmethod
    def from_json(cls, path: str | Path, name: str | None = None) -> "LabelScheme":
        with open(path, encoding="utf-8") as f:
            mapping = json.load(f)
        if not isinstance(mapping, dict):
            raise CorpusError(f"{path}: mapping file must hold a JSON object")
        return cls(name or Path(path).stem, mapping)


def _entity_scheme(name: str, types: Sequence[str], location: str) -> LabelScheme:
    mapping = {O: O}
    for t in types:
        for prefix in ("B-", "I-"):
            mapping[prefix + t] = O
    mapping["B-" + location] = B_LOC
    mapping["I-" + location] = I_LOC
    return LabelScheme(name, mapping)


UNIFIED = LabelScheme("unified", {})
CONLL2003 = _entity_scheme("conll2003", ["PER", "ORG", "MISC", "LOC"], "LOC")
WNUT2017 = _entity_scheme(
    "wnut2017",
    ["person", "location", "corporation", "product", "creative-work", "group"],
    "location",
)

SCHEMES = {s.name: s for s in (UNIFIED, CONLL2003, WNUT2017)}

# (token column, label column) used when reading each preset's files
DEFAULT_COLUMNS = {"unified": (0, 1), "conll2003": (0, 3), "wnut2017": (0, 1)}


@dataclass
class Corpus:
    name: str
    sentences: list[TaggedSentence] = field(default_factory=list)
    scheme: LabelScheme | None = None

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def label_set(self) -> set[str]:
        return {label for s in self.sentences for label in s.labels}


def parse_conll(
    file_text: str,
    token_column: int = 0,
    label_column: int = 3,
    *,
    name: str = "corpus",
    source_column: int | None = None,
) -> Corpus:
    """Parse whitespace-separated columns into sentences.

    Blank lines end a sentence; ``-DOCSTART-`` lines are dropped. When
    ``source_column`` is given and present, it fills each sentence's
    provenance tag (the first token's value wins).
    """
    sentences: list[TaggedSentence] = []
    words: list[str] = []
    labels: list[str] = []
    source = ""

    def flush():
        nonlocal words, labels, source
        if words:
            sentences.append(TaggedSentence(words, labels, source or name))
        words, labels, source = [], [], ""

    needed = max(token_column, label_column) + 1
    for lineno, line in enumerate(file_text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            flush()
            continue
        if fields[0] == DOCSTART:
            continue
        if len(fields) < needed:
            raise ConllParseError(
                f"expected at least {needed} columns, found {len(fields)}", lineno
            )
        words.append(fields[token_column])
        labels.append(fields[label_column])
        if source_column is not None and not words[1:] and len(fields) > source_column:
            source = fields[source_column]
    flush()
    return Corpus(name, sentences)


def read_conll(path: str | Path, token_column: int = 0, label_column: int = 3, **kwargs) -> Corpus:
    path = Path(path)
    kwargs.setdefault("name", path.stem)
    return parse_conll(path.read_text(encoding="utf-8"), token_column, label_column, **kwargs)


def format_conll(corpus: Corpus, provenance: bool = False) -> str:
    """Serialize as ``token<TAB>label[<TAB>source]`` with blank-line separators."""
    blocks = []
    for sent in corpus.sentences:
        if provenance:
            rows = (f"{w}\t{l}\t{sent.source or corpus.name}" for w, l in zip(sent.words, sent.labels))
        else:
            rows = (f"{w}\t{l}" for w, l in zip(sent.words, sent.labels))
        blocks.append("\n".join(rows) + "\n")
    return "\n".join(blocks)


def bio_violations(corpus: Corpus) -> list[tuple[int, int]]:
    """(sentence, word) positions where I-LOC follows O or sentence start."""
    found = []
    for si, sent in enumerate(corpus.sentences):
        prev = O
        for wi, label in enumerate(sent.labels):
            if label == I_LOC and prev not in (B_LOC, I_LOC):
                found.append((si, wi))
            prev = label
    return found


def unify_labels(corpus: Corpus, scheme: LabelScheme, strict: bool = False) -> Corpus:
    """Map every source label onto {O, B-LOC, I-LOC}.

    Raises ``UnmappedLabelError`` listing every label the scheme lacks. BIO
    irregularities are reported (``strict=True`` raises) but never repaired.
    """
    missing = corpus.label_set() - set(scheme.mapping)
    if missing:
        raise UnmappedLabelError(missing)
    table = scheme.mapping
    sentences = [
        replace(s, words=list(s.words), labels=[table[l] for l in s.labels])
        for s in corpus.sentences
    ]
    out = Corpus(corpus.name, sentences, UNIFIED)
    violations = bio_violations(out)
    if violations:
        if strict:
            raise BIOViolationError(violations)
        logger.warning(
            "%s: %d I-LOC tags without a preceding location tag", corpus.name, len(violations)
        )
    return out


def merge_corpora(corpora: Sequence[Corpus], name: str = "combined") -> Corpus:
    if not corpora:
        return Corpus(name, [], UNIFIED)
    if len(corpora) == 1:
        return corpora[0]
    names = [c.name for c in corpora]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise CorpusError(f"corpus names must be unique within a merge: {dupes}")
    scheme = corpora[0].scheme
    for c in corpora[1:]:
        if c.scheme != scheme:
            raise CorpusError(
                f"scheme mismatch: {corpora[0].name!r} uses "
                f"{getattr(scheme, 'name', None)!r}, {c.name!r} uses {getattr(c.scheme, 'name', None)!r}"
            )
    sentences = [
        replace(s, words=list(s.words), labels=list(s.labels), source=s.source or c.name)
        for c in corpora
        for s in c.sentences
    ]
    return Corpus(name, sentences, scheme)


@dataclass
class LabelHistogram:
    counts: dict[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def fractions(self) -> dict[str, float]:
        total = self.total
        return {k: (v / total if total else 0.0) for k, v in self.counts.items()}

    @property
    def location_fraction(self) -> float:
        total = self.total
        loc = self.counts.get(B_LOC, 0) + self.counts.get(I_LOC, 0)
        return loc / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "counts": dict(self.counts),
            "fractions": self.fractions,
            "location_fraction": self.location_fraction,
        }


def corpus_stats(corpus: Corpus) -> LabelHistogram:
    counter = Counter(label for s in corpus.sentences for label in s.labels)
    # unified labels first in canonical order, anything else after
    ordered = {label: counter[label] for label in LABELS if label in counter}
    ordered.update({k: counter[k] for k in sorted(counter) if k not in ordered})
    return LabelHistogram(ordered)
