"""Synthetic labelled data shared by the tests and the fixture builder."""
import random

from toporec.corpus import UNIFIED, Corpus, TaggedSentence

PLACES = [
    ["Houston"], ["Austin"], ["Dallas"], ["Tampa"], ["Buffalo"], ["Texas"],
    ["College", "Station"], ["New", "York"], ["Corpus", "Christi"], ["Port", "Arthur"],
]
FILLERS = [
    "flooding", "Flooding", "in", "near", "the", "help", "need", "we", "water",
    "at", "today", "rain", "roads", "Roads", "closed", "call", "area", "and",
    "again", "shelter", "from", "to", "is", "open", "<URL>", "<USER>", ".", ",",
]


def synthetic_sentences(n, seed=0, min_len=4, max_len=10):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        words, labels = [], []
        for _ in range(rng.randint(min_len, max_len)):
            if rng.random() < 0.3:
                place = rng.choice(PLACES)
                words.extend(place)
                labels.extend(["B-LOC"] + ["I-LOC"] * (len(place) - 1))
            else:
                words.append(rng.choice(FILLERS))
                labels.append("O")
        out.append(TaggedSentence(words, labels))
    return out


def synthetic_corpus(n, seed=0, name="synthetic"):
    return Corpus(name, synthetic_sentences(n, seed), UNIFIED)
