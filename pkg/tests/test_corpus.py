import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toporec.corpus import (
    CONLL2003, UNIFIED, WNUT2017, BIOViolationError, ConllParseError, Corpus, CorpusError,
    LabelScheme, TaggedSentence, UnmappedLabelError, bio_violations, corpus_stats,
    format_conll, merge_corpora, parse_conll, unify_labels,
)
from toporec.labels import LABELS


def test_parse_reads_requested_columns():
    corpus = parse_conll("EU NNP B-NP B-ORG\n. . O O\n\n", 0, 3)
    assert len(corpus) == 1
    assert corpus.sentences[0].words == ["EU", "."]
    assert corpus.sentences[0].labels == ["B-ORG", "O"]


def test_blank_lines_separate_sentences():
    corpus = parse_conll("a O\nb O\n\nc B-LOC\n", 0, 1)
    assert [s.words for s in corpus] == [["a", "b"], ["c"]]


def test_docstart_dropped_and_empty_file_ok(conll_sample):
    assert all("-DOCSTART-" not in s.words for s in conll_sample)
    assert len(conll_sample) == 5
    assert len(parse_conll("", 0, 3)) == 0
    assert len(parse_conll("\n\n\n", 0, 3)) == 0


def test_ragged_line_reports_line_number():
    with pytest.raises(ConllParseError) as err:
        parse_conll("EU NNP B-NP B-ORG\nrejects VBZ\n", 0, 3)
    assert err.value.lineno == 2
    assert "line 2" in str(err.value)


def test_unify_conll_maps_non_locations_to_o(conll_sample):
    unified = unify_labels(conll_sample, CONLL2003)
    assert unified.label_set() <= set(LABELS)
    pairs = {w: l for s in unified for w, l in zip(s.words, s.labels)}
    assert pairs["Canadian"] == "O"
    assert pairs["BRUSSELS"] == "B-LOC"
    assert (pairs["New"], pairs["York"]) == ("B-LOC", "I-LOC")
    assert (pairs["Orchard"], pairs["Academy"]) == ("O", "O")


def test_unify_wnut_location_tags(wnut_sample):
    unified = unify_labels(wnut_sample, WNUT2017)
    pairs = [(w, l) for s in unified for w, l in zip(s.words, s.labels)]
    assert ("Empire", "B-LOC") in pairs and ("Building", "I-LOC") in pairs
    assert ("Justin", "O") in pairs and ("Apple", "O") in pairs
    # source noise is kept as-is, not repaired
    assert ("Canadian", "B-LOC") in pairs and ("Planet", "B-LOC") in pairs


def test_unmapped_labels_all_listed():
    corpus = parse_conll("a B-FOO\nb B-BAR\nc O\n", 0, 1)
    with pytest.raises(UnmappedLabelError) as err:
        unify_labels(corpus, CONLL2003)
    assert err.value.labels == ["B-BAR", "B-FOO"]


def test_unify_is_idempotent_and_preserves_words(conll_sample):
    once = unify_labels(conll_sample, CONLL2003)
    twice = unify_labels(once, CONLL2003)
    assert [s.labels for s in once] == [s.labels for s in twice]
    assert [s.words for s in once] == [s.words for s in conll_sample]
    assert len(once) == len(conll_sample)


def test_strict_mode_rejects_orphan_i_loc():
    corpus = parse_conll("in O\nYork I-LOC\n", 0, 1)
    assert bio_violations(corpus) == [(0, 1)]
    unify_labels(corpus, UNIFIED)  # lenient: warns only
    with pytest.raises(BIOViolationError):
        unify_labels(corpus, UNIFIED, strict=True)


def test_merge_counts_and_provenance():
    a = unify_labels(parse_conll("\n\n".join(["x O"] * 10), 0, 1, name="a"), UNIFIED)
    b = unify_labels(parse_conll("\n\n".join(["y B-LOC"] * 5), 0, 1, name="b"), UNIFIED)
    merged = merge_corpora([a, b])
    assert len(merged) == 15
    assert [s.source for s in merged][:10] == ["a"] * 10
    assert [s.source for s in merged][10:] == ["b"] * 5
    assert merge_corpora([a]) is a


def test_merge_rejects_scheme_mismatch_and_duplicate_names():
    a = unify_labels(parse_conll("x O\n", 0, 1, name="a"), UNIFIED)
    raw = parse_conll("x O\n", 0, 1, name="raw")
    with pytest.raises(CorpusError):
        merge_corpora([a, raw])
    with pytest.raises(CorpusError):
        merge_corpora([a, a])


def test_stats_counts_and_fractions():
    corpus = Corpus("t", [TaggedSentence(["a", "b"], ["O", "B-LOC"])], UNIFIED)
    hist = corpus_stats(corpus)
    assert hist.counts == {"O": 1, "B-LOC": 1}
    assert sum(hist.fractions.values()) == pytest.approx(1.0, abs=1e-9)
    json.dumps(hist.to_dict())


def test_format_parse_round_trip_with_provenance(conll_sample):
    unified = unify_labels(conll_sample, CONLL2003)
    text = format_conll(unified, provenance=True)
    back = parse_conll(text, 0, 1, source_column=2, name="other")
    assert [(s.words, s.labels, s.source) for s in back] == [
        (s.words, s.labels, s.source or unified.name) for s in unified
    ]


def test_scheme_from_mapping_file(tmp_path):
    path = tmp_path / "broad.json"
    path.write_text(json.dumps({"B-ORG": "B-LOC", "I-ORG": "I-LOC", "B-PER": "O"}))
    scheme = LabelScheme.from_json(path)
    assert scheme.mapping["B-ORG"] == "B-LOC"
    assert scheme.mapping["B-LOC"] == "B-LOC"
    with pytest.raises(CorpusError):
        LabelScheme("bad", {"B-ORG": "B-ORGANIZATION"})


word = st.text(alphabet=st.characters(blacklist_categories=("Z", "C")), min_size=1, max_size=8).filter(
    lambda w: w != "-DOCSTART-" and not any(c.isspace() for c in w)
)
sentence = st.lists(st.tuples(word, st.sampled_from(LABELS)), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(st.lists(sentence, min_size=0, max_size=6))
def test_serialize_round_trip_property(rows):
    corpus = Corpus("p", [TaggedSentence([w for w, _ in s], [l for _, l in s]) for s in rows], UNIFIED)
    back = parse_conll(format_conll(corpus), 0, 1)
    assert [(s.words, s.labels) for s in back] == [(s.words, s.labels) for s in corpus]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(sentence, min_size=1, max_size=4), min_size=1, max_size=4))
def test_stats_of_merge_is_sum_of_stats(groups):
    corpora = [
        Corpus(f"c{i}", [TaggedSentence([w for w, _ in s], [l for _, l in s]) for s in g], UNIFIED)
        for i, g in enumerate(groups)
    ]
    merged = corpus_stats(merge_corpora(corpora)).counts
    expected = {}
    for c in corpora:
        for k, v in corpus_stats(c).counts.items():
            expected[k] = expected.get(k, 0) + v
    assert merged == expected
