"""Fine-tuning loop: cross-entropy, AdamW, linear warmup/decay, early stopping."""
from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .alignment import PieceVocab, align
from .corpus import Corpus
from .labels import IGNORE
from .metrics import EvalReport, evaluate_labels
from .model import TokenClassifier, collate, save_checkpoint
from .tagger import WordTagger

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class TrainingDivergedError(TrainingError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 2e-5
    batch_size: int = 32
    max_epochs: int = 50
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01
    patience: int = 3
    min_delta: float = 1e-4
    seed: int = 0
    max_len: int = 128

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_len < 3:
            raise ValueError("max_len must be at least 3")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown training config keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    wall_time: float = 0.0
    truncated_words: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def cross_entropy(logits: torch.Tensor, gold: torch.Tensor, ignore_marker: int = IGNORE) -> torch.Tensor:
    """Mean negative log-likelihood of the gold labels over non-ignored positions."""
    keep = gold != ignore_marker
    if not bool(keep.any()):
        raise ValueError("every position in the batch is ignored")
    kept = logits[keep]
    log_probs = kept - torch.logsumexp(kept, dim=-1, keepdim=True)
    return -log_probs.gather(-1, gold[keep].unsqueeze(-1)).mean()


def warmup_steps(total_steps: int, cfg: TrainConfig) -> int:
    return int(cfg.warmup_fraction * total_steps)


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear ramp from 0 to the peak rate, then linear decay to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warm = warmup_steps(total_steps, cfg)
    if step < warm:
        return cfg.learning_rate * step / warm
    return cfg.learning_rate * (total_steps - step) / (total_steps - warm)


class EarlyStopping:
    """Stop once the monitored score fails to beat the best by ``min_delta``
    for ``patience`` consecutive epochs."""

    def __init__(self, patience: int = 3, min_delta: float = 1e-4):
        self.patience = patience
        self.min_delta = min_delta
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        """Record an epoch's score; returns True when training should stop."""
        if score > self.best + self.min_delta:
            self.best = score
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    @property
    def improved(self) -> bool:
        return self.bad_epochs == 0


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    # Philox is counter-based: (seed, epoch) fully determines the permutation
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, epoch])))
    return rng.permutation(n)


def _param_groups(model: torch.nn.Module, weight_decay: float) -> list[dict]:
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if name.endswith("bias") or "LayerNorm" in name:
            no_decay.append(p)
        else:
            decay.append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def evaluate_checkpoint(
    classifier: TokenClassifier,
    test: Corpus,
    vocab: PieceVocab,
    max_len: int = 128,
    batch_size: int = 32,
) -> EvalReport:
    """Align, predict and merge every sentence, then score at word level."""
    unknown = test.label_set() - set(classifier.labels)
    if unknown:
        raise ValueError(f"corpus labels {sorted(unknown)} are not in the classifier's label order")
    tagger = WordTagger(classifier, vocab, max_len, batch_size)
    records = tagger.tag_many([s.words for s in test.sentences])
    gold = [s.labels for s in test.sentences]
    pred = [[label for _, label, _ in sent] for sent in records]
    return evaluate_labels(gold, pred)


def fine_tune(
    classifier: TokenClassifier,
    train: Corpus,
    val: Corpus,
    cfg: TrainConfig,
    vocab: PieceVocab,
    out_dir: str | Path | None = None,
) -> tuple[TokenClassifier, TrainReport]:
    """Train in place and return the classifier restored to its best validation epoch."""
    if not len(val):
        raise TrainingError("validation corpus is empty")
    if not len(train):
        raise TrainingError("training corpus is empty")
    start_time = time.perf_counter()
    report = TrainReport()

    seqs = [align(s, vocab, cfg.max_len) for s in train.sentences]
    report.truncated_words = sum(s.dropped_words for s in seqs)
    if report.truncated_words:
        logger.warning("truncated %d words that did not fit max_len=%d", report.truncated_words, cfg.max_len)
    seqs = [s for s in seqs if any(l != IGNORE for l in s.piece_labels)]
    if not seqs:
        raise TrainingError("no training sentence has a supervised piece")

    steps_per_epoch = math.ceil(len(seqs) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.max_epochs
    optimizer = torch.optim.AdamW(
        _param_groups(classifier, cfg.weight_decay),
        lr=cfg.learning_rate,
        betas=(0.9, 0.999),
        eps=1e-8,
    )
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    best_state = copy.deepcopy(classifier.state_dict())
    step = 0

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        for epoch in range(1, cfg.max_epochs + 1):
            classifier.train()
            order = epoch_order(len(seqs), cfg.seed, epoch)
            losses = []
            for b in range(steps_per_epoch):
                batch = collate([seqs[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]], trim=True)
                lr = lr_at(step + 1, total_steps, cfg)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                optimizer.zero_grad()
                logits = classifier(batch.input_ids, batch.attention_mask)
                loss = cross_entropy(logits, batch.labels)
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite loss {loss.item()} at epoch {epoch}, step {step + 1}")
                loss.backward()
                optimizer.step()
                step += 1
                losses.append(loss.item())
                report.lr_trace.append(lr)

            mean_loss = float(np.mean(losses))
            val_f1 = evaluate_checkpoint(classifier, val, vocab, cfg.max_len, cfg.batch_size).f1
            report.train_loss.append(mean_loss)
            report.val_f1.append(val_f1)
            report.stopped_epoch = epoch
            logger.info(json.dumps({"epoch": epoch, "mean_loss": mean_loss, "val_f1": val_f1, "lr": lr}))

            stop = stopper.update(epoch, val_f1)
            if stopper.improved:
                best_state = copy.deepcopy(classifier.state_dict())
                if out_dir is not None:
                    save_checkpoint(classifier, Path(out_dir) / "best", vocab, {"epoch": epoch, "val_f1": val_f1})
            if stop:
                break

    classifier.load_state_dict(best_state)
    classifier.eval()
    report.best_epoch = stopper.best_epoch
    report.wall_time = time.perf_counter() - start_time
    if out_dir is not None:
        (Path(out_dir) / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return classifier, report
