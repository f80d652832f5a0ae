import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medseq.corpus import ENTITY_CLASSES, Annotation, Document, EntityClass, IOBLabel
from medseq.evaluation import (CONFUSION_ORDER, ClassCounts, MatchMode, Scores, count_document,
                               document_confusion, evaluate_documents, match_spans,
                               parse_report, render_report, score, token_confusion)

E = EntityClass
S, LEN = MatchMode.STRICT, MatchMode.LENIENT


def ann(cls, s, e, i=1):
    return Annotation("T%d" % i, cls, ((s, e),))


@pytest.mark.parametrize("pred,strict,lenient", [
    ((10, 20), (1, 0, 0), (1, 0, 0)),
    ((12, 18), (0, 1, 1), (1, 0, 0)),
    ((20, 25), (0, 1, 1), (0, 1, 1)),
])
def test_match_examples(pred, strict, lenient):
    g, p = [ann(E.DRUG, 10, 20)], [ann(E.DRUG, *pred)]
    for mode, expected in ((S, strict), (LEN, lenient)):
        c = match_spans(g, p, mode, cls=E.DRUG)
        assert (c.tp, c.fp, c.fn) == expected


def test_class_must_agree():
    counts = count_document([ann(E.DRUG, 10, 20)], [ann(E.REASON, 10, 20)], LEN)
    assert (counts[E.DRUG].tp, counts[E.DRUG].fn) == (0, 1)
    assert (counts[E.REASON].tp, counts[E.REASON].fp) == (0, 1)


def test_matching_is_one_to_one():
    g = [ann(E.DRUG, 0, 10)]
    p = [ann(E.DRUG, 0, 4, 1), ann(E.DRUG, 5, 10, 2)]
    c = match_spans(g, p, LEN, cls=E.DRUG)
    assert (c.tp, c.fp, c.fn) == (1, 1, 0)


def test_greedy_versus_bipartite():
    # the first gold claims the only prediction the second gold overlaps
    g = [ann(E.DRUG, 0, 12, 1), ann(E.DRUG, 10, 11, 2)]
    p = [ann(E.DRUG, 10, 11, 1), ann(E.DRUG, 11, 12, 2)]
    assert match_spans(g, p, LEN, E.DRUG).tp == 1
    assert match_spans(g, p, LEN, E.DRUG, bipartite=True).tp == 2
    assert match_spans(g, p, S, E.DRUG).tp == match_spans(g, p, S, E.DRUG, bipartite=True).tp


def test_single_class_scores():
    r = score([ClassCounts(E.DRUG, 2, 1, 1)], LEN, classes=[E.DRUG])
    s = r.per_class[E.DRUG]
    assert (round(s.p, 2), round(s.r, 2), round(s.f1, 2)) == (66.67, 66.67, 66.67)
    assert r.micro.f1 == s.f1


def test_two_class_fixture():
    r = score([ClassCounts(E.DRUG, 1, 0, 1), ClassCounts(E.ADE, 3, 1, 0)], LEN,
              classes=[E.DRUG, E.ADE])
    assert (r.micro.tp, r.micro.fp, r.micro.fn) == (4, 1, 1)
    assert [round(v, 2) for v in (r.micro.p, r.micro.r, r.micro.f1)] == [80.0, 80.0, 80.0]
    assert round(r.per_class[E.DRUG].f1, 2) == 66.67
    assert round(r.per_class[E.ADE].f1, 2) == 85.71
    assert round(r.macro[2], 2) == 76.19


def test_macro_over_all_nine_classes_by_default():
    r = score([ClassCounts(E.DRUG, 1, 0, 0)], LEN)
    assert len(r.per_class) == 9
    assert r.macro[2] == pytest.approx(100 / 9)


def test_no_predictions():
    s = Scores.from_counts(0, 0, 5)
    assert (s.p, s.r, s.f1) == (0.0, 0.0, 0.0)


def lab(s):
    return IOBLabel.parse(s)


def cell(m, a, b):
    return m[CONFUSION_ORDER.index(a), CONFUSION_ORDER.index(b)]


def test_confusion_examples():
    m = token_confusion([lab("B-Drug"), lab("O")], [lab("B-Drug"), lab("O")])
    assert cell(m, E.DRUG, E.DRUG) == 1 and cell(m, "O", "O") == 1 and m.sum() == 2
    m = token_confusion([lab("B-ADE")], [lab("B-Reason")])
    assert cell(m, E.ADE, E.REASON) == 1
    m = token_confusion([lab("B-Reason"), lab("I-Reason")], [lab("O"), lab("O")])
    assert cell(m, E.REASON, "O") == 2
    with pytest.raises(ValueError):
        token_confusion([lab("O")], [])


def test_confusion_order():
    assert [str(c) for c in CONFUSION_ORDER] == ["Strength", "Frequency", "Form", "Route",
                                                 "Drug", "Dosage", "Duration", "Reason",
                                                 "ADE", "O"]


def test_render_rows_and_roundtrip():
    r = score([ClassCounts(E.DRUG, 2, 1, 1)], LEN)
    text, obj = render_report(r)
    assert "66.67   66.67   66.67" in text
    back = parse_report(__import__("json").dumps(obj))
    drug = next(row for row in back["per_class"] if row["class"] == "Drug")
    assert (drug["p"], drug["r"], drug["f1"]) == (66.67, 66.67, 66.67)
    assert back["micro"]["f1"] == pytest.approx(r.micro.f1, abs=0.005)


def test_render_empty_report():
    text, obj = render_report(score([], S))
    assert len(obj["per_class"]) == 9
    assert all(row["f1"] == 0 for row in obj["per_class"])
    assert text.count("\n") == 2 + 9 + 2


def test_gold_against_itself():
    doc = Document("d", "aspirin 81 mg daily for pain",
                   (ann(E.DRUG, 0, 7, 1), ann(E.STRENGTH, 8, 13, 2), ann(E.REASON, 24, 28, 3)))
    for mode in (S, LEN):
        r = evaluate_documents([doc], [doc], mode)
        assert r.micro.f1 == 100.0
        assert all(s.f1 == 100.0 for c, s in r.per_class.items() if s.tp)
    m = document_confusion([doc], [doc])
    assert np.trace(m) == m.sum()


# ---------------------------------------------------------------- properties

@st.composite
def gold_pred(draw, disjoint=False):
    def spans(n):
        out, pos = [], 0
        for i in range(n):
            if disjoint:
                s = pos + draw(st.integers(0, 3))
                e = s + draw(st.integers(1, 6))
                pos = e
            else:
                s = draw(st.integers(0, 40))
                e = s + draw(st.integers(1, 8))
            out.append(Annotation("T%d" % (i + 1), draw(st.sampled_from(ENTITY_CLASSES[:3])),
                                  ((s, e),)))
        return out
    gold = spans(draw(st.integers(0, 8)))
    pred = []
    for a in gold:
        # perturb a copy: drop, shift, resize or relabel
        op = draw(st.sampled_from(["keep", "drop", "shift", "relabel", "grow"]))
        s, e = a.fragments[0]
        if op == "drop":
            continue
        if op == "shift":
            d = draw(st.integers(-3, 3))
            s, e = max(0, s + d), max(0, s + d) + (e - s)
        if op == "grow":
            e += draw(st.integers(1, 3))
        cls = draw(st.sampled_from(ENTITY_CLASSES[:3])) if op == "relabel" else a.cls
        pred.append(Annotation("T%d" % (len(pred) + 1), cls, ((s, e),)))
    pred += spans(draw(st.integers(0, 3)))
    return gold, pred


@settings(max_examples=1000, deadline=None)
@given(gold_pred())
def test_lenient_dominates_strict(gp):
    gold, pred = gp
    cs, cl = count_document(gold, pred, S), count_document(gold, pred, LEN)
    rs, rl = score(cs.values(), S), score(cl.values(), LEN)
    for c in ENTITY_CLASSES:
        assert cl[c].tp >= cs[c].tp
        assert cl[c].tp + cl[c].fn == cs[c].tp + cs[c].fn
        assert cl[c].tp + cl[c].fp == cs[c].tp + cs[c].fp
        assert cl[c].tp <= min(cl[c].tp + cl[c].fn, cl[c].tp + cl[c].fp)
        for k in ("p", "r", "f1"):
            assert getattr(rl.per_class[c], k) >= getattr(rs.per_class[c], k) - 1e-12
    for k in ("p", "r", "f1"):
        assert getattr(rl.micro, k) >= getattr(rs.micro, k) - 1e-12


@settings(max_examples=300, deadline=None)
@given(gold_pred(disjoint=True), st.sampled_from([S, LEN]))
def test_swap_exchanges_precision_and_recall(gp, mode):
    gold, pred = gp
    # within-side spans are disjoint, as in real annotation sets
    pred = [p for i, p in enumerate(pred)
            if not any(p.overlaps(q) for q in pred[:i])]
    a = score(count_document(gold, pred, mode).values(), mode).micro
    b = score(count_document(pred, gold, mode).values(), mode).micro
    assert (a.p, a.r, a.f1) == pytest.approx((b.r, b.p, b.f1))


@settings(max_examples=300, deadline=None)
@given(gold_pred(), st.sampled_from([S, LEN]))
def test_swap_with_bipartite_matching(gp, mode):
    gold, pred = gp
    a = score(count_document(gold, pred, mode, bipartite=True).values(), mode).micro
    b = score(count_document(pred, gold, mode, bipartite=True).values(), mode).micro
    assert (a.p, a.r) == pytest.approx((b.r, b.p))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["O", "B-Drug", "I-Drug", "B-ADE", "B-Reason", "I-Form"]),
                min_size=1, max_size=12), st.randoms())
def test_confusion_totals(labels, rnd):
    gold = [lab(s) for s in labels]
    pred = list(gold)
    rnd.shuffle(pred)
    m1 = token_confusion(gold, gold)
    m2 = token_confusion(gold, pred)
    assert m2.sum() == len(gold)
    np.testing.assert_array_equal(m1.sum(axis=1), m2.sum(axis=1))
