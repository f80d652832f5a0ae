import warnings

import pytest
from hypothesis import given, settings, strategies as st

from medseq import corpus
from medseq.corpus import (ENTITY_CLASSES, LABELS, NUM_LABELS, OUTSIDE, Annotation, Document,
                           EntityClass, IOBLabel, Token, iob_to_spans, read_standoff, segment,
                           spans_to_iob, tokenize, write_standoff)
from medseq.errors import AnnotationWarning, BoundsError, ParseError, UnknownLabelError
from medseq.synthetic import SyntheticConfig, generate_synthetic

E = EntityClass


def test_entity_classes_roundtrip():
    assert len(ENTITY_CLASSES) == 9
    for c in ENTITY_CLASSES:
        assert EntityClass(c.value) is c
        assert EntityClass.parse(str(c.value)).value == c.value


def test_label_set_has_19_entries():
    assert NUM_LABELS == 19 == 2 * 9 + 1
    assert LABELS[0] == OUTSIDE
    assert len(set(LABELS)) == 19


@pytest.mark.parametrize("s", ["O", "B-Drug", "I-ADE", "I-Duration"])
def test_label_string_roundtrip(s):
    assert str(IOBLabel.parse(s)) == s


def test_unknown_label():
    with pytest.raises(UnknownLabelError):
        IOBLabel.parse("B-Dose")


# ---------------------------------------------------------------- standoff

def test_read_one_drug():
    doc = read_standoff("Take 1 aspirin daily", "T1\tDrug 7 14\taspirin")
    (a,) = doc.annotations
    assert (a.cls, a.fragments, a.text) == (E.DRUG, ((7, 14),), "aspirin")


def test_read_empty_ann():
    assert read_standoff("anything at all", "").annotations == ()


def test_fragment_surface_mismatch_keeps_offsets():
    text = "q4h (every) needed"
    with pytest.warns(AnnotationWarning):
        doc = read_standoff(text, "T2\tFrequency 0 3;9 14\tq4h needed")
    (a,) = doc.annotations
    assert a.fragments == ((0, 3), (9, 14))
    assert a.text == "q4h y) ne"


def test_multi_fragment_surface_matches_without_warning():
    text = "q4h (every) needed"
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        doc = read_standoff(text, "T2\tFrequency 0 3;12 18\tq4h needed\n")
    assert doc.annotations[0].fragments == ((0, 3), (12, 18))


def test_non_textbound_lines_ignored():
    doc = read_standoff("aspirin", "T1\tDrug 0 7\taspirin\nR1\tReason-Drug Arg1:T1 Arg2:T1\n#1\tnote")
    assert len(doc.annotations) == 1


@pytest.mark.parametrize("ann,err,line", [
    ("T1\tDrug 0 7", ParseError, 1),
    ("T1\tDrug 5 12\taspirin\nT2\tDrug x 7\taspirin", ParseError, 2),
    ("T1\tDrug 7 3\taspirin", ParseError, 1),
])
def test_parse_errors_carry_line(ann, err, line):
    with pytest.raises(err) as info:
        read_standoff("Take aspirin", ann)
    assert info.value.line == line


def test_bounds_and_unknown_class():
    with pytest.raises(BoundsError):
        read_standoff("short", "T1\tDrug 0 70\tshort")
    with pytest.raises(UnknownLabelError):
        read_standoff("aspirin", "T1\tMedicine 0 7\taspirin")


def test_write_standoff_examples():
    doc = Document("d", "Take 1 aspirin daily", (Annotation("T1", E.DRUG, ((7, 14),), "aspirin"),))
    assert write_standoff(doc) == "T1\tDrug 7 14\taspirin\n"
    assert write_standoff(Document("d", "x")) == ""
    two = Document("d", "q4h (every) needed",
                   (Annotation("T1", E.FREQUENCY, ((0, 3), (12, 18))),))
    assert write_standoff(two) == "T1\tFrequency 0 3;12 18\tq4h needed\n"


def test_file_roundtrip(tmp_path):
    text = "Line one.\r\nTake aspirin 81 mg\n"
    doc = Document("d1", text, (Annotation("T1", E.DRUG, ((16, 23),), "aspirin"),))
    corpus.write_document(doc, tmp_path)
    back = corpus.load_document(tmp_path / "d1.txt")
    assert back == doc
    assert corpus.list_doc_ids(tmp_path) == ["d1"]


# ---------------------------------------------------------------- tokens

def _tok(text):
    return [tuple(t) for t in tokenize(text)]


@pytest.mark.parametrize("text,expected", [
    ("aspirin 81 mg", [("aspirin", 0, 7), ("81", 8, 10), ("mg", 11, 13)]),
    ("q4h (every 4 hours)", [("q4h", 0, 3), ("(", 4, 5), ("every", 5, 10), ("4", 11, 12),
                             ("hours", 13, 18), (")", 18, 19)]),
    ("", []),
    ("2.5 mg p.o. q.d.", [("2.5", 0, 3), ("mg", 4, 6), ("p.o.", 7, 11), ("q.d.", 12, 16)]),
    ("pain.", [("pain", 0, 4), (".", 4, 5)]),
])
def test_tokenize_examples(text, expected):
    assert _tok(text) == expected


@given(st.text(alphabet=st.sampled_from("ab 1.,;(-\n\tXé"), max_size=40))
def test_token_offsets_exact(text):
    toks = tokenize(text)
    prev = 0
    for t in toks:
        assert text[t.start:t.end] == t.surface
        assert t.start >= prev
        prev = t.end


# ---------------------------------------------------------------- segments

def test_two_lines_two_segments():
    assert len(segment(Document("d", "take aspirin\nfor pain"))) == 2


def test_one_line_one_segment():
    assert len(segment(Document("d", "take aspirin for pain"))) == 1


def test_crossing_annotation_merges_lines():
    text = "shortness of\nbreath noted"
    doc = Document("d", text, (Annotation("T1", E.ADE, ((0, 19),)),))
    (seg,) = segment(doc)
    assert [t.surface for t in seg.tokens] == ["shortness", "of", "breath", "noted"]
    assert [str(x) for x in seg.labels] == ["B-ADE", "I-ADE", "I-ADE", "O"]


def test_cap_splits_at_free_boundary():
    text = " ".join("w%d" % i for i in range(10))
    # w3 w4 form one mention; a cap of 4 must not cut between them
    s = text.index("w3")
    doc = Document("d", text, (Annotation("T1", E.DRUG, ((s, s + 5),)),))
    segs = segment(doc, max_tokens=4)
    assert [len(x) for x in segs] == [3, 4, 3]
    assert all(len(x) <= 4 for x in segs)


@given(st.lists(st.sampled_from(["take", "aspirin", "daily", "\n", ".", "5 mg"]), max_size=30),
       st.integers(1, 7))
def test_segments_partition_tokens(words, cap):
    text = " ".join(words)
    doc = Document("d", text)
    segs = segment(doc, max_tokens=cap)
    flat = [t for s in segs for t in s.tokens]
    assert flat == tokenize(text)
    assert all(0 < len(s) <= cap for s in segs)


# ---------------------------------------------------------------- IOB

TEXT = "aspirin 81 mg daily"
GOLD = (Annotation("T1", E.DRUG, ((0, 7),)), Annotation("T2", E.STRENGTH, ((8, 13),)),
        Annotation("T3", E.FREQUENCY, ((14, 19),)))


def test_spans_to_iob_example():
    labels = spans_to_iob(tokenize(TEXT), GOLD)
    assert [str(x) for x in labels] == ["B-Drug", "B-Strength", "I-Strength", "B-Frequency"]
    assert spans_to_iob(tokenize(TEXT), ()) == [OUTSIDE] * 4


def test_partial_overlap_labels_token():
    labels = spans_to_iob(tokenize("aspirin daily"), (Annotation("T1", E.DRUG, ((0, 3),)),))
    assert [str(x) for x in labels] == ["B-Drug", "O"]


def test_overlap_longest_wins_with_warning():
    anns = (Annotation("T1", E.DRUG, ((0, 7),)), Annotation("T2", E.STRENGTH, ((0, 13),)))
    with pytest.warns(AnnotationWarning):
        labels = spans_to_iob(tokenize(TEXT), anns)
    assert [str(x) for x in labels[:3]] == ["B-Strength", "I-Strength", "I-Strength"]


def test_iob_to_spans_examples():
    toks = tokenize(TEXT)
    labels = [IOBLabel.parse(s) for s in ("B-Drug", "B-Strength", "I-Strength", "B-Frequency")]
    spans = iob_to_spans(toks, labels, TEXT)
    assert [(a.cls, a.start, a.end, a.text) for a in spans] == [
        (E.DRUG, 0, 7, "aspirin"), (E.STRENGTH, 8, 13, "81 mg"), (E.FREQUENCY, 14, 19, "daily")]
    assert iob_to_spans(toks, [OUTSIDE] * 4) == []


def test_orphan_inside_opens_entity():
    toks = [Token("po", 0, 2)]
    (a,) = iob_to_spans(toks, [IOBLabel("I", E.ROUTE)])
    assert (a.cls, a.fragments) == (E.ROUTE, ((0, 2),))


@st.composite
def aligned_annotations(draw):
    n = draw(st.integers(0, 25))
    words = draw(st.lists(st.sampled_from(["aspirin", "81", "mg", "po", "(", "daily"]),
                          min_size=n, max_size=n))
    text = " ".join(words)
    toks = tokenize(text)
    anns, i = [], 0
    while i < len(toks):
        if draw(st.booleans()):
            j = draw(st.integers(i + 1, min(len(toks), i + 4)))
            cls = draw(st.sampled_from(ENTITY_CLASSES))
            anns.append(Annotation("T%d" % (len(anns) + 1), cls,
                                   ((toks[i].start, toks[j - 1].end),),
                                   text[toks[i].start:toks[j - 1].end]))
            i = j
        else:
            i += 1
    return Document("d", text, tuple(anns))


@settings(max_examples=1000, deadline=None)
@given(aligned_annotations())
def test_iob_roundtrip(doc):
    toks = tokenize(doc.text)
    back = iob_to_spans(toks, spans_to_iob(toks, doc.annotations), doc.text)
    assert back == list(doc.annotations)


@settings(max_examples=1000, deadline=None)
@given(aligned_annotations())
def test_standoff_roundtrip(doc):
    assert read_standoff(doc.text, write_standoff(doc), doc.id) == doc


# ---------------------------------------------------------------- synthetic

def test_synthetic_single_drug():
    rates = {c: 0.0 for c in ENTITY_CLASSES}
    rates[E.DRUG] = 1.0
    docs, _ = generate_synthetic(SyntheticConfig(seed=7, n_docs=1, rates=rates))
    assert len(docs) == 1
    assert [a.cls for a in docs[0].annotations] == [E.DRUG]


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticConfig(seed=3, n_docs=4))
    b = generate_synthetic(SyntheticConfig(seed=3, n_docs=4))
    assert a == b


def test_synthetic_drug_rate_matches_corpus_average():
    docs, _ = generate_synthetic(SyntheticConfig(seed=11, n_docs=100))
    total = sum(a.cls == E.DRUG for d in docs for a in d.annotations)
    assert abs(total - 5355) <= 0.10 * 5355


def test_synthetic_annotations_consistent():
    docs, feats = generate_synthetic(SyntheticConfig(seed=5, n_docs=3))
    for d in docs:
        assert read_standoff(d.text, write_standoff(d), d.id) == d
        for row in feats[d.id]:
            assert 0 <= row.start < row.end <= len(d.text)
