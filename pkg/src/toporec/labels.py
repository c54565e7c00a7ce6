"""Unified label set shared by every module.

The label order is fixed: ``O=0, B-LOC=1, I-LOC=2``. Positions that must not
contribute to loss or metrics (special pieces, padding) carry ``IGNORE``.
"""
from __future__ import annotations

from typing import Sequence

O = "O"
B_LOC = "B-LOC"
I_LOC = "I-LOC"

LABELS: tuple[str, ...] = (O, B_LOC, I_LOC)
LOCATION_LABELS: tuple[str, ...] = (B_LOC, I_LOC)
LABEL_TO_ID: dict[str, int] = {label: i for i, label in enumerate(LABELS)}

# same value torch's cross-entropy uses for its ignore_index
IGNORE = -100


def label_ids(labels: Sequence[str]) -> list[int]:
    try:
        return [LABEL_TO_ID[label] for label in labels]
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is not one of {LABELS}") from None


def location_spans(labels: Sequence[str]) -> list[tuple[int, int]]:
    """Group word labels into half-open ``(start, end)`` location runs.

    A run is ``B-LOC I-LOC*``. An I-LOC that does not continue a run opens a
    new one rather than being discarded.
    """
    spans: list[tuple[int, int]] = []
    start = None
    for i, label in enumerate(labels):
        if label == B_LOC or (label == I_LOC and start is None):
            if start is not None:
                spans.append((start, i))
            start = i
        elif label != I_LOC:
            if start is not None:
                spans.append((start, i))
            start = None
    if start is not None:
        spans.append((start, len(labels)))
    return spans
