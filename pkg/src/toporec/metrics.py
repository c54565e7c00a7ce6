"""Word-level confusion counts over B-LOC / I-LOC and micro-averaged P/R/F1."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

from .labels import LOCATION_LABELS, location_spans


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


@dataclass
class ConfusionCounts:
    tp: dict[str, int] = field(default_factory=lambda: dict.fromkeys(LOCATION_LABELS, 0))
    fp: dict[str, int] = field(default_factory=lambda: dict.fromkeys(LOCATION_LABELS, 0))
    fn: dict[str, int] = field(default_factory=lambda: dict.fromkeys(LOCATION_LABELS, 0))

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            {c: self.tp[c] + other.tp[c] for c in LOCATION_LABELS},
            {c: self.fp[c] + other.fp[c] for c in LOCATION_LABELS},
            {c: self.fn[c] + other.fn[c] for c in LOCATION_LABELS},
        )

    @property
    def totals(self) -> tuple[int, int, int]:
        return sum(self.tp.values()), sum(self.fp.values()), sum(self.fn.values())

    def to_dict(self) -> dict:
        return {c: {"tp": self.tp[c], "fp": self.fp[c], "fn": self.fn[c]} for c in LOCATION_LABELS}


def count_confusion(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> ConfusionCounts:
    """Per-class TP/FP/FN over sentences of word labels; O only ever counts as "not c"."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    counts = ConfusionCounts()
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    for i, (g_sent, p_sent) in enumerate(zip(gold, pred)):
        if len(g_sent) != len(p_sent):
            raise ValueError(f"sentence {i}: {len(g_sent)} gold labels but {len(p_sent)} predicted")
        for g, p in zip(g_sent, p_sent):
            if g == p:
                if g in tp:
                    tp[g] += 1
                continue
            if p in fp:
                fp[p] += 1
            if g in fn:
                fn[g] += 1
    return counts


def _ratio(num: int, den: int) -> tuple[float, bool]:
    return (num / den, False) if den else (0.0, True)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def micro_prf(counts: ConfusionCounts) -> PRF:
    tp, fp, fn = counts.totals
    precision, p_degenerate = _ratio(tp, tp + fp)
    recall, r_degenerate = _ratio(tp, tp + fn)
    return PRF(precision, recall, f1_score(precision, recall), p_degenerate or r_degenerate)


def consistency_check(p: float, r: float, f_reported: float, tol: float = 0.002) -> bool:
    """Does a published (P, R, F1) row agree with the harmonic mean of P and R?"""
    # slack so a difference of exactly ``tol`` survives binary rounding
    return abs(f1_score(p, r) - f_reported) <= tol + 1e-12


@dataclass
class EvalReport:
    counts: ConfusionCounts
    precision: float
    recall: float
    f1: float
    degenerate: bool

    @property
    def per_class(self) -> dict[str, PRF]:
        out = {}
        for c in LOCATION_LABELS:
            p, pd = _ratio(self.counts.tp[c], self.counts.tp[c] + self.counts.fp[c])
            r, rd = _ratio(self.counts.tp[c], self.counts.tp[c] + self.counts.fn[c])
            out[c] = PRF(p, r, f1_score(p, r), pd or rd)
        return out

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": self.counts.to_dict(),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_counts(cls, counts: ConfusionCounts) -> "EvalReport":
        return cls(counts, *micro_prf(counts))


def evaluate_labels(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> EvalReport:
    return EvalReport.from_counts(count_confusion(gold, pred))


def span_prf(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> PRF:
    """Exact-match location span scores.

    Diagnostic only: the headline metric is the per-word count above.
    """
    tp = n_gold = n_pred = 0
    for g, p in zip(gold, pred):
        g_spans, p_spans = set(location_spans(g)), set(location_spans(p))
        tp += len(g_spans & p_spans)
        n_gold += len(g_spans)
        n_pred += len(p_spans)
    precision, pd = _ratio(tp, n_pred)
    recall, rd = _ratio(tp, n_gold)
    return PRF(precision, recall, f1_score(precision, recall), pd or rd)
