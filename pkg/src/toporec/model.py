"""Token classifier: BERT-style encoder with a Linear, MLP or CNN1D head."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from torch.nn import functional as F

from .alignment import PieceSequence, PieceVocab
from .labels import LABELS

VARIANTS = {
    # layers, hidden, heads
    "pretrained-base-cased": (12, 768, 12),
    "pretrained-large-cased": (24, 1024, 16),
    "miniature": (2, 64, 4),
}
VARIANT_ALIASES = {"base": "pretrained-base-cased", "large": "pretrained-large-cased", "miniature": "miniature"}
CASED_VOCAB_SIZE = 28996
HEAD_KINDS = ("linear", "mlp", "cnn1d")

MANIFEST = "manifest.json"
WEIGHTS = "model.safetensors"
VOCAB = "vocab.txt"


class CheckpointError(RuntimeError):
    pass


@dataclass
class EncoderConfig:
    variant: str = "miniature"
    layers: int = 2
    hidden_size: int = 64
    attention_heads: int = 4
    vocab_size: int = CASED_VOCAB_SIZE
    max_positions: int = 128
    intermediate_size: int | None = None
    dropout: float = 0.0

    def __post_init__(self):
        self.variant = VARIANT_ALIASES.get(self.variant, self.variant)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.variant != "miniature":
            expected = VARIANTS[self.variant]
            got = (self.layers, self.hidden_size, self.attention_heads)
            if got != expected:
                raise ValueError(f"{self.variant} requires (layers, hidden, heads) = {expected}, got {got}")
        if self.max_positions < 128:
            raise ValueError("max_positions must be at least 128")
        if self.hidden_size % self.attention_heads:
            raise ValueError("hidden_size must be divisible by attention_heads")
        if self.intermediate_size is None:
            self.intermediate_size = 4 * self.hidden_size

    @classmethod
    def for_variant(cls, variant: str, **overrides) -> "EncoderConfig":
        variant = VARIANT_ALIASES.get(variant, variant)
        layers, hidden, heads = VARIANTS[variant]
        kwargs = dict(variant=variant, layers=layers, hidden_size=hidden, attention_heads=heads)
        if variant != "miniature":
            kwargs.update(max_positions=512, dropout=0.1)
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class HeadConfig:
    kind: str = "linear"
    num_labels: int = len(LABELS)
    mlp_hidden: int = 256
    cnn_kernel: int = 3
    cnn_channels: int = 16
    cnn_pool: int = 2
    cnn_hidden: int = 128

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"head kind must be one of {HEAD_KINDS}, got {self.kind!r}")
        sizes = (self.num_labels, self.mlp_hidden, self.cnn_kernel, self.cnn_channels, self.cnn_pool, self.cnn_hidden)
        if min(sizes) < 1:
            raise ValueError("head sizes must be positive")


def _bert_config(cfg: EncoderConfig):
    from transformers import BertConfig

    return BertConfig(
        vocab_size=cfg.vocab_size,
        hidden_size=cfg.hidden_size,
        num_hidden_layers=cfg.layers,
        num_attention_heads=cfg.attention_heads,
        intermediate_size=cfg.intermediate_size,
        max_position_embeddings=cfg.max_positions,
        hidden_dropout_prob=cfg.dropout,
        attention_probs_dropout_prob=cfg.dropout,
        type_vocab_size=2,
    )


def make_encoder(cfg: EncoderConfig) -> nn.Module:
    from transformers import BertModel

    return BertModel(_bert_config(cfg), add_pooling_layer=False)


def count_encoder_parameters(cfg: EncoderConfig) -> int:
    """Parameter count of the encoder, computed without allocating weights."""
    with torch.device("meta"):
        encoder = make_encoder(cfg)
    return sum(p.numel() for p in encoder.parameters())


class LinearHead(nn.Module):
    def __init__(self, hidden_size: int, cfg: HeadConfig):
        super().__init__()
        self.hidden_size = hidden_size
        self.out = nn.Linear(hidden_size, cfg.num_labels)

    def forward(self, x):
        return self.out(x)


class MLPHead(nn.Module):
    def __init__(self, hidden_size: int, cfg: HeadConfig):
        super().__init__()
        self.hidden_size = hidden_size
        self.fc1 = nn.Linear(hidden_size, cfg.mlp_hidden)
        self.fc2 = nn.Linear(cfg.mlp_hidden, cfg.num_labels)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


class CNN1DHead(nn.Module):
    """Each position's encoder vector is read as a 1-channel signal of length H."""

    def __init__(self, hidden_size: int, cfg: HeadConfig):
        super().__init__()
        self.hidden_size = hidden_size
        self.conv = nn.Conv1d(1, cfg.cnn_channels, cfg.cnn_kernel, stride=1, padding=cfg.cnn_kernel // 2)
        self.pool = nn.MaxPool1d(cfg.cnn_pool)
        self.flat_size = cfg.cnn_channels * (hidden_size // cfg.cnn_pool)
        self.fc1 = nn.Linear(self.flat_size, cfg.cnn_hidden)
        self.fc2 = nn.Linear(cfg.cnn_hidden, cfg.num_labels)

    def forward(self, x):
        lead = x.shape[:-1]
        signal = x.reshape(-1, 1, self.hidden_size)
        feats = self.pool(F.relu(self.conv(signal))).flatten(1)
        out = self.fc2(F.relu(self.fc1(feats)))
        return out.reshape(*lead, -1)


HEADS = {"linear": LinearHead, "mlp": MLPHead, "cnn1d": CNN1DHead}


def make_head(cfg: HeadConfig, hidden_size: int) -> nn.Module:
    return HEADS[cfg.kind](hidden_size, cfg)


def head_forward(head: nn.Module, vectors: torch.Tensor) -> torch.Tensor:
    """Per-position logits ``(..., num_labels)`` from encoder vectors ``(..., H)``."""
    if vectors.shape[-1] != head.hidden_size:
        raise ValueError(f"head expects vectors of size {head.hidden_size}, got {vectors.shape[-1]}")
    return head(vectors)


class TokenClassifier(nn.Module):
    def __init__(self, encoder_config: EncoderConfig, head_config: HeadConfig, labels: Sequence[str] = LABELS):
        super().__init__()
        if len(labels) != head_config.num_labels:
            raise ValueError("label order and head size disagree")
        self.encoder_config = encoder_config
        self.head_config = head_config
        self.labels = tuple(labels)
        self.encoder = make_encoder(encoder_config)
        self.head = make_head(head_config, encoder_config.hidden_size)

    def encode(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        if input_ids.shape[1] > self.encoder_config.max_positions:
            raise ValueError(
                f"sequence length {input_ids.shape[1]} exceeds max_positions {self.encoder_config.max_positions}"
            )
        if int(input_ids.max()) >= self.encoder_config.vocab_size:
            raise ValueError("piece id outside the encoder vocabulary")
        return self.encoder(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return head_forward(self.head, self.encode(input_ids, attention_mask))

    def head_parameters(self) -> dict[str, torch.Tensor]:
        return {name: p for name, p in self.head.named_parameters()}


@dataclass
class Batch:
    input_ids: torch.Tensor
    attention_mask: torch.Tensor
    labels: torch.Tensor
    sequences: list[PieceSequence] = field(default_factory=list)


def collate(sequences: Sequence[PieceSequence], trim: bool = False) -> Batch:
    """Stack sequences into tensors.

    ``trim`` cuts the trailing all-padding columns; attention masks them out
    anyway, so outputs at real positions are unchanged.
    """
    width = max(sum(s.mask) for s in sequences) if trim else len(sequences[0].piece_ids)
    return Batch(
        input_ids=torch.tensor([s.piece_ids[:width] for s in sequences], dtype=torch.long),
        attention_mask=torch.tensor([s.mask[:width] for s in sequences], dtype=torch.long),
        labels=torch.tensor([s.piece_labels[:width] for s in sequences], dtype=torch.long),
        sequences=list(sequences),
    )


def _as_batch(batch) -> Batch:
    return batch if isinstance(batch, Batch) else collate(batch)


def build_classifier(
    enc: EncoderConfig,
    head: HeadConfig,
    seed: int = 0,
    checkpoint: str | Path | None = None,
    dtype: torch.dtype = torch.float32,
) -> TokenClassifier:
    """Seeded construction; pretrained variants need ``checkpoint`` to hold encoder weights."""
    if enc.variant != "miniature" and checkpoint is None:
        raise CheckpointError(f"{enc.variant} needs a pretrained checkpoint directory or weights file")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = TokenClassifier(enc, head)
    if checkpoint is not None:
        load_encoder_weights(model.encoder, checkpoint)
    return model.to(dtype)


def _read_state_dict(path: Path) -> dict[str, torch.Tensor]:
    if path.is_dir():
        for fname in ("model.safetensors", "pytorch_model.bin"):
            if (path / fname).exists():
                path = path / fname
                break
        else:
            raise CheckpointError(f"no model.safetensors or pytorch_model.bin under {path}")
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    if path.suffix == ".safetensors":
        from safetensors.torch import load_file

        return load_file(str(path))
    return torch.load(path, map_location="cpu", weights_only=True)


def _normalize_key(key: str) -> str:
    for prefix in ("bert.", "encoder."):
        if key.startswith(prefix) and not key.startswith("encoder.layer"):
            key = key[len(prefix):]
    if key.endswith(".gamma"):
        key = key[: -len("gamma")] + "weight"
    elif key.endswith(".beta"):
        key = key[: -len("beta")] + "bias"
    return key


def load_encoder_weights(encoder: nn.Module, path: str | Path) -> None:
    """Copy published encoder arrays into ``encoder``, checking every name and shape."""
    source = {_normalize_key(k): v for k, v in _read_state_dict(Path(path)).items()}
    target = encoder.state_dict()
    for name, tensor in target.items():
        if name not in source:
            if name.endswith("position_ids"):
                continue
            raise CheckpointError(f"checkpoint lacks encoder array {name!r}")
        if tuple(source[name].shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"array {name!r} has shape {tuple(source[name].shape)}, expected {tuple(tensor.shape)}"
            )
    encoder.load_state_dict({k: source[k] for k in target if k in source}, strict=False)


def encode(classifier: TokenClassifier, batch) -> torch.Tensor:
    batch = _as_batch(batch)
    with torch.no_grad():
        return classifier.encode(batch.input_ids, batch.attention_mask)


def softmax(logits: torch.Tensor) -> torch.Tensor:
    shifted = logits - logits.max(dim=-1, keepdim=True).values
    exp = shifted.exp()
    return exp / exp.sum(dim=-1, keepdim=True)


def confidences_from_logits(logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Argmax label (lowest index wins ties) and its softmax probability."""
    probs = softmax(logits)
    labels = torch.argmax(logits, dim=-1)
    return labels, probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)


def predict(classifier: TokenClassifier, batch) -> tuple[torch.Tensor, torch.Tensor]:
    """Inference-mode labels and confidences, each shaped ``(batch, max_len)``."""
    batch = _as_batch(batch)
    was_training = classifier.training
    classifier.eval()
    try:
        with torch.no_grad():
            logits = classifier(batch.input_ids, batch.attention_mask)
    finally:
        classifier.train(was_training)
    return confidences_from_logits(logits)


def save_checkpoint(
    classifier: TokenClassifier,
    directory: str | Path,
    vocab: PieceVocab | None = None,
    provenance: dict | None = None,
) -> Path:
    from safetensors.torch import save_file

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    state = {k: v.detach().contiguous().cpu() for k, v in classifier.state_dict().items()}
    manifest = {
        "format": 1,
        "encoder": asdict(classifier.encoder_config),
        "head": asdict(classifier.head_config),
        "labels": list(classifier.labels),
        "dtype": str(next(classifier.parameters()).dtype).replace("torch.", ""),
        "arrays": {k: list(v.shape) for k, v in state.items()},
        "provenance": provenance or {},
    }
    save_file(state, str(directory / WEIGHTS))
    if vocab is not None:
        vocab.save(directory / VOCAB)
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[TokenClassifier, PieceVocab | None, dict]:
    from safetensors.torch import load_file

    directory = Path(directory)
    manifest_path = directory / MANIFEST
    if not manifest_path.exists():
        raise CheckpointError(f"{directory} has no {MANIFEST}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    enc = EncoderConfig(**manifest["encoder"])
    head = HeadConfig(**manifest["head"])
    state = load_file(str(directory / WEIGHTS))
    declared = manifest["arrays"]
    for name, shape in declared.items():
        if name not in state:
            raise CheckpointError(f"weights file lacks array {name!r}")
        if list(state[name].shape) != list(shape):
            raise CheckpointError(f"array {name!r} has shape {list(state[name].shape)}, manifest says {shape}")
    model = TokenClassifier(enc, head, manifest["labels"])
    expected = model.state_dict()
    for name, tensor in expected.items():
        if name not in state:
            raise CheckpointError(f"weights file lacks array {name!r}")
        if tuple(state[name].shape) != tuple(tensor.shape):
            raise CheckpointError(f"array {name!r} has shape {tuple(state[name].shape)}, expected {tuple(tensor.shape)}")
    model.load_state_dict(state)
    model.to(getattr(torch, manifest.get("dtype", "float32")))
    model.eval()
    vocab = PieceVocab.from_file(directory / VOCAB) if (directory / VOCAB).exists() else None
    return model, vocab, manifest
