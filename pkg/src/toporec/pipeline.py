"""Raw post -> cleaned words -> toponym spans, zip codes, geocodes -> JSON."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

from .geocoding import GeocodeCache, GeocodeFailure, GeocodeProvider, GeocodeResult, TokenBucket, geocode
from .labels import O, location_spans

URL_TOKEN = "<URL>"
USER_TOKEN = "<USER>"
PLACEHOLDERS = (URL_TOKEN, USER_TOKEN)

_CLEAN_RE = re.compile(
    r"(?P<url>(?:https?://|www\.)\S+)|(?P<user>(?<![\w@])@\w+)|(?P<ws>\s+)",
    re.IGNORECASE,
)
_WORD_RE = re.compile(r"<URL>|<USER>|\w+(?:['’.\-&]\w+)*|[^\w\s]")
ZIP_RE = re.compile(r"(?<![\w\-.])[0-9]{5}(?:-[0-9]{4})?(?![\w])(?![\-.,][0-9])")

Tagger = Callable[[Sequence[str]], list[tuple[str, str, float]]]


@dataclass
class OffsetMap:
    """For every character of the clean text, the original span it came from."""

    starts: list[int] = field(default_factory=list)
    ends: list[int] = field(default_factory=list)

    def to_original(self, start: int, end: int) -> tuple[int, int]:
        return self.starts[start], self.ends[end - 1]


def preprocess(text: str) -> tuple[str, OffsetMap]:
    """Replace URLs and @mentions with placeholders and collapse whitespace.

    Case is left untouched. The offset map sends each clean character back to
    the original text; a placeholder covers the whole text it replaced.
    """
    out: list[str] = []
    offsets = OffsetMap()

    def emit(s: str, start: int, end: int | None = None):
        for k, ch in enumerate(s):
            out.append(ch)
            if end is None:
                offsets.starts.append(start + k)
                offsets.ends.append(start + k + 1)
            else:
                offsets.starts.append(start)
                offsets.ends.append(end)

    pos = 0
    for m in _CLEAN_RE.finditer(text):
        emit(text[pos:m.start()], pos)
        if m.group("url"):
            emit(URL_TOKEN, m.start(), m.end())
        elif m.group("user"):
            emit(USER_TOKEN, m.start(), m.end())
        elif out and m.end() < len(text):
            emit(" ", m.start(), m.start() + 1)
        pos = m.end()
    emit(text[pos:], pos)
    return "".join(out), offsets


def split_words(clean: str) -> list[tuple[str, int, int]]:
    """Words with clean-text offsets; punctuation marks become their own words."""
    return [(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(clean)]


@dataclass(frozen=True)
class ZipMatch:
    code: str
    start_char: int
    end_char: int


def extract_zipcodes(text: str) -> list[ZipMatch]:
    """Five digits with an optional ``-dddd`` extension, standing alone."""
    return [ZipMatch(m.group(), m.start(), m.end()) for m in ZIP_RE.finditer(text)]


@dataclass(frozen=True)
class ToponymSpan:
    text: str
    start_char: int
    end_char: int
    confidence: float
    word_labels: tuple[tuple[str, str, float], ...] = ()


@dataclass
class Extraction:
    text: str
    words: list[tuple[str, str, float]]
    toponyms: list[ToponymSpan]
    zipcodes: list[ZipMatch]
    geocodes: list[GeocodeResult] = field(default_factory=list)
    failures: list[GeocodeFailure] = field(default_factory=list)


def _tag_text(text: str, tagger: Tagger):
    clean, offsets = preprocess(text)
    words = split_words(clean)
    records = tagger([w for w, _, _ in words]) if words else []
    records = [
        (word, O, 1.0) if word in PLACEHOLDERS else (word, label, conf)
        for (word, _, _), (_, label, conf) in zip(words, records)
    ]
    return words, records, offsets


def _spans_from_records(text, words, records, offsets) -> list[ToponymSpan]:
    spans = []
    for first, last in location_spans([label for _, label, _ in records]):
        start, _ = offsets.to_original(words[first][1], words[first][2])
        _, end = offsets.to_original(words[last - 1][1], words[last - 1][2])
        members = tuple(records[first:last])
        spans.append(ToponymSpan(text[start:end], start, end, min(c for _, _, c in members), members))
    return spans


def extract_toponyms(text: str, tagger: Tagger) -> list[ToponymSpan]:
    """Label the cleaned words and group ``B-LOC I-LOC*`` runs into spans with
    offsets in the original text. Span confidence is its weakest word's."""
    words, records, offsets = _tag_text(text, tagger)
    return _spans_from_records(text, words, records, offsets)


def extract(
    text: str,
    tagger: Tagger,
    provider: GeocodeProvider | None = None,
    cache: GeocodeCache | None = None,
    limiter: TokenBucket | None = None,
) -> Extraction:
    words, records, offsets = _tag_text(text, tagger)
    spans = _spans_from_records(text, words, records, offsets)
    result = Extraction(text, records, spans, extract_zipcodes(text))
    if provider is not None and spans:
        result.geocodes, result.failures = geocode([s.text for s in spans], provider, cache, limiter)
    return result


def _num(x: float) -> float:
    return round(float(x), 6)


def to_document(
    text: str,
    spans: Sequence[ToponymSpan],
    zips: Sequence[ZipMatch],
    geocodes: Sequence[GeocodeResult],
    words: Sequence[tuple[str, str, float]],
) -> dict:
    return {
        "text": text,
        "tokens": [{"word": w, "label": l, "confidence": _num(c)} for w, l, c in words],
        "toponyms": [
            {"text": s.text, "start_char": s.start_char, "end_char": s.end_char, "confidence": _num(s.confidence)}
            for s in spans
        ],
        "zipcodes": [{"code": z.code, "start_char": z.start_char, "end_char": z.end_char} for z in zips],
        "geocodes": [
            {
                "toponym": g.query,
                "latitude": _num(g.latitude),
                "longitude": _num(g.longitude),
                "provider": g.provider,
                "match_confidence": _num(g.match_confidence),
            }
            for g in geocodes
        ],
    }


def to_json(text, spans, zips, geocodes, words) -> str:
    return json.dumps(to_document(text, spans, zips, geocodes, words), ensure_ascii=False)


def read_posts(path: str | Path, fmt: str = "auto") -> Iterator[dict]:
    """Yield ``{"id", "text", ...}`` from NDJSON or one-post-per-line text."""
    path = Path(path)
    if fmt == "auto":
        fmt = "ndjson" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "text"
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if fmt == "text":
                yield {"id": lineno, "text": line}
                continue
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict) or not isinstance(record.get("text"), str):
                raise ValueError(f"{path}:{lineno}: record needs a string 'text' field")
            record.setdefault("id", lineno)
            yield record


def process_record(
    record: dict,
    tagger: Tagger,
    provider: GeocodeProvider | None = None,
    cache: GeocodeCache | None = None,
    limiter: TokenBucket | None = None,
) -> tuple[dict, list[GeocodeFailure]]:
    """Output envelope for one input post; any geotag it carried passes through untouched."""
    result = extract(record["text"], tagger, provider, cache, limiter)
    geotag = None
    if "latitude" in record and "longitude" in record:
        geotag = {"latitude": record["latitude"], "longitude": record["longitude"]}
    doc = {"id": record.get("id"), "retained_geotag": geotag}
    doc.update(to_document(result.text, result.toponyms, result.zipcodes, result.geocodes, result.words))
    return doc, result.failures
