"""Toponym recognition: BERT-style token classification with Linear, MLP and
CNN1D heads, plus the surrounding corpus, training, evaluation and
extraction tooling."""

from .labels import B_LOC, I_LOC, IGNORE, LABELS, O

__version__ = "0.1.0"

__all__ = ["B_LOC", "I_LOC", "IGNORE", "LABELS", "O", "__version__"]
