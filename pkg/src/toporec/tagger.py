"""Word-level inference: window, align, predict, merge."""
from __future__ import annotations

from typing import Sequence

from .alignment import PieceVocab, align_words, merge, window_words
from .model import TokenClassifier, collate, predict

WordRecord = tuple[str, str, float]


class WordTagger:
    """Labels arbitrary-length word lists with a trained classifier.

    Long inputs are cut into consecutive windows of at most ``max_len - 2``
    pieces so every word receives a prediction.
    """

    def __init__(self, classifier: TokenClassifier, vocab: PieceVocab, max_len: int = 128, batch_size: int = 32):
        self.classifier = classifier
        self.vocab = vocab
        self.max_len = max_len
        self.batch_size = batch_size

    def __call__(self, words: Sequence[str]) -> list[WordRecord]:
        return self.tag_many([words])[0]

    def tag_many(self, sentences: Sequence[Sequence[str]]) -> list[list[WordRecord]]:
        chunks = []
        owners = []
        for i, words in enumerate(sentences):
            for window in window_words(words, self.vocab, self.max_len):
                chunks.append(align_words(window, self.vocab, self.max_len))
                owners.append(i)
        results: list[list[WordRecord]] = [[] for _ in sentences]
        for start in range(0, len(chunks), self.batch_size):
            seqs = chunks[start:start + self.batch_size]
            labels, confs = predict(self.classifier, collate(seqs, trim=True))
            pad = self.max_len - labels.shape[1]
            for j, seq in enumerate(seqs):
                results[owners[start + j]].extend(
                    merge(seq, labels[j].tolist() + [0] * pad, confs[j].tolist() + [0.0] * pad)
                )
        # windowing may have swapped an over-long word for [UNK]; restore the text
        for words, records in zip(sentences, results):
            for k, word in enumerate(words):
                if records[k][0] != word:
                    records[k] = (word, records[k][1], records[k][2])
        return results
