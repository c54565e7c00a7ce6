"""Score external systems' token/label prediction files against a gold file."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import LabelScheme, UnmappedLabelError
from .labels import LABELS
from .metrics import EvalReport, evaluate_labels


class AlignmentMismatchError(ValueError):
    pass


def _rows(path: Path, label_column: int) -> list[tuple[int, str, str] | None]:
    """Content rows as (lineno, token, label); ``None`` marks a sentence break."""
    rows: list[tuple[int, str, str] | None] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        fields = line.split()
        if not fields:
            rows.append(None)
            continue
        if fields[0] == "-DOCSTART-":
            continue
        if len(fields) <= label_column:
            raise ValueError(f"{path}:{lineno}: expected a label in column {label_column}")
        rows.append((lineno, fields[0], fields[label_column]))
    return rows


def read_aligned(
    gold_path: str | Path,
    pred_path: str | Path,
    gold_label_column: int = 1,
    pred_label_column: int = 1,
) -> tuple[list[list[str]], list[list[str]]]:
    """Pair gold and predicted labels token by token, split at the gold file's sentence breaks."""
    gold_path, pred_path = Path(gold_path), Path(pred_path)
    gold_rows = _rows(gold_path, gold_label_column)
    pred_rows = [r for r in _rows(pred_path, pred_label_column) if r is not None]
    gold_tokens = [r for r in gold_rows if r is not None]
    for g, p in zip(gold_tokens, pred_rows):
        if g[1] != p[1]:
            raise AlignmentMismatchError(
                f"{pred_path}:{p[0]}: token {p[1]!r} does not match gold {gold_path}:{g[0]} token {g[1]!r}"
            )
    if len(gold_tokens) != len(pred_rows):
        if len(pred_rows) < len(gold_tokens):
            g = gold_tokens[len(pred_rows)]
            raise AlignmentMismatchError(f"{pred_path} ends before gold {gold_path}:{g[0]} token {g[1]!r}")
        p = pred_rows[len(gold_tokens)]
        raise AlignmentMismatchError(f"{pred_path}:{p[0]}: extra token {p[1]!r} beyond the end of gold")

    gold: list[list[str]] = [[]]
    pred: list[list[str]] = [[]]
    k = 0
    for row in gold_rows:
        if row is None:
            if gold[-1]:
                gold.append([])
                pred.append([])
            continue
        gold[-1].append(row[2])
        pred[-1].append(pred_rows[k][2])
        k += 1
    if not gold[-1]:
        gold.pop()
        pred.pop()
    return gold, pred


def _apply_mapping(sentences: list[list[str]], scheme: LabelScheme | None) -> list[list[str]]:
    if scheme is None:
        bad = {l for s in sentences for l in s} - set(LABELS)
        if bad:
            raise UnmappedLabelError(bad)
        return sentences
    missing = {l for s in sentences for l in s} - set(scheme.mapping)
    if missing:
        raise UnmappedLabelError(missing)
    return [[scheme.mapping[l] for l in s] for s in sentences]


@dataclass
class SystemScore:
    name: str
    report: EvalReport

    def to_dict(self) -> dict:
        return {"system": self.name, **self.report.to_dict()}


def score_systems(
    gold_path: str | Path,
    predictions: Sequence[tuple[str, str | Path]],
    mapping: LabelScheme | None = None,
    gold_label_column: int = 1,
    pred_label_column: int = 1,
) -> list[SystemScore]:
    """Micro P/R/F1 per system, best F1 first (ties keep input order)."""
    scores = []
    for name, path in predictions:
        gold, pred = read_aligned(gold_path, path, gold_label_column, pred_label_column)
        gold = _apply_mapping(gold, None)
        pred = _apply_mapping(pred, mapping)
        scores.append(SystemScore(name, evaluate_labels(gold, pred)))
    return sorted(scores, key=lambda s: -s.report.f1)


def format_table(scores: Sequence[SystemScore]) -> str:
    width = max([len("System")] + [len(s.name) for s in scores])
    lines = [f"{'System':<{width}}  Precision  Recall  F1-score"]
    for s in scores:
        r = s.report
        lines.append(f"{s.name:<{width}}  {r.precision:9.3f}  {r.recall:6.3f}  {r.f1:8.3f}")
    return "\n".join(lines)
