"""Span-level scoring in strict and lenient modes plus token confusion matrices.

Strict matching needs the same class and identical fragment offsets; lenient
matching needs the same class and at least one shared character. Pairing is
one-to-one, greedy in ascending gold start order, with maximum bipartite
matching available for comparison.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import ENTITY_CLASSES, Annotation, Document, EntityClass, IOBLabel, spans_to_iob, tokenize


class MatchMode(str, enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"

    def __str__(self):
        return self.value


E = EntityClass
# row/column order of the token confusion matrix; O last
CONFUSION_ORDER = (E.STRENGTH, E.FREQUENCY, E.FORM, E.ROUTE, E.DRUG, E.DOSAGE,
                   E.DURATION, E.REASON, E.ADE, "O")
_CONF_INDEX = {c: i for i, c in enumerate(CONFUSION_ORDER)}


@dataclass
class ClassCounts:
    cls: EntityClass
    tp: int = 0
    fp: int = 0
    fn: int = 0
    pairs: tuple = field(default=(), compare=False, repr=False)

    def __iadd__(self, other):
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self


def spans_match(gold: Annotation, pred: Annotation, mode: MatchMode) -> bool:
    if gold.cls != pred.cls:
        return False
    if mode == MatchMode.STRICT:
        return gold.fragments == pred.fragments
    return gold.overlaps(pred)


def match_spans(gold: Sequence[Annotation], pred: Sequence[Annotation], mode,
                cls: EntityClass | None = None, bipartite: bool = False) -> ClassCounts:
    """Pair gold and predicted mentions of one class one-to-one."""
    mode = MatchMode(mode)
    if cls is None:
        cls = (gold or pred)[0].cls if (gold or pred) else None
    gold = [a for a in gold if cls is None or a.cls == cls]
    pred = [a for a in pred if cls is None or a.cls == cls]
    g_order = sorted(range(len(gold)), key=lambda i: (gold[i].start, gold[i].end, i))
    p_order = sorted(range(len(pred)), key=lambda i: (pred[i].start, pred[i].end, i))
    if bipartite and gold and pred:
        adj = np.array([[spans_match(gold[i], pred[j], mode) for j in p_order] for i in g_order])
        rows, cols = linear_sum_assignment(-adj.astype(np.float64))
        pairs = [(g_order[r], p_order[c]) for r, c in zip(rows, cols) if adj[r, c]]
    else:
        used = set()
        pairs = []
        for i in g_order:
            for j in p_order:
                if j not in used and spans_match(gold[i], pred[j], mode):
                    used.add(j)
                    pairs.append((i, j))
                    break
    tp = len(pairs)
    return ClassCounts(cls, tp, len(pred) - tp, len(gold) - tp,
                       tuple((gold[i], pred[j]) for i, j in pairs))


def count_document(gold: Iterable[Annotation], pred: Iterable[Annotation], mode,
                   bipartite: bool = False) -> dict:
    gold, pred = list(gold), list(pred)
    return {c: match_spans([a for a in gold if a.cls == c], [a for a in pred if a.cls == c],
                           mode, cls=c, bipartite=bipartite)
            for c in ENTITY_CLASSES}


def pool_counts(per_document: Iterable[Mapping]) -> dict:
    total = {c: ClassCounts(c) for c in ENTITY_CLASSES}
    for counts in per_document:
        for c, cc in counts.items():
            total.setdefault(c, ClassCounts(c))
            total[c] += cc
    return total


@dataclass
class Scores:
    tp: int
    fp: int
    fn: int
    p: float
    r: float
    f1: float

    @classmethod
    def from_counts(cls, tp, fp, fn) -> "Scores":
        p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        return cls(tp, fp, fn, p, r, f1(p, r))


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class EvalReport:
    mode: MatchMode
    per_class: dict
    micro: Scores
    macro: tuple  # (p, r, f1)


def score(counts, mode=MatchMode.LENIENT, classes: Sequence = ENTITY_CLASSES) -> EvalReport:
    """Per-class, micro (pooled counts) and macro (unweighted mean) P/R/F1 in percent.

    ``counts`` is a mapping or iterable of :class:`ClassCounts` already pooled
    over documents; ``classes`` fixes the rows, so absent classes score 0.
    """
    if isinstance(counts, Mapping):
        counts = counts.values()
    pooled = {c: ClassCounts(c) for c in classes}
    for cc in counts:
        if cc.cls in pooled:
            pooled[cc.cls] += cc
    per_class = {c: Scores.from_counts(cc.tp, cc.fp, cc.fn) for c, cc in pooled.items()}
    tp = sum(s.tp for s in per_class.values())
    fp = sum(s.fp for s in per_class.values())
    fn = sum(s.fn for s in per_class.values())
    n = len(per_class)
    macro = tuple(sum(getattr(s, k) for s in per_class.values()) / n if n else 0.0
                  for k in ("p", "r", "f1"))
    return EvalReport(MatchMode(mode), per_class, Scores.from_counts(tp, fp, fn), macro)


def evaluate_documents(gold: Sequence[Document], pred: Sequence[Document], mode,
                       bipartite: bool = False) -> EvalReport:
    """Score predicted documents against gold documents with the same ids."""
    by_id = {d.id: d for d in pred}
    per_doc = [count_document(g.annotations, by_id[g.id].annotations if g.id in by_id else (),
                              mode, bipartite) for g in gold]
    return score(pool_counts(per_doc).values(), mode)


# ---------------------------------------------------------------- tokens

def token_confusion(gold: Sequence[IOBLabel], pred: Sequence[IOBLabel]) -> np.ndarray:
    """10 x 10 counts; rows are actual classes, columns predicted, in CONFUSION_ORDER."""
    if len(gold) != len(pred):
        raise ValueError("label sequences differ in length (%d vs %d)" % (len(gold), len(pred)))
    m = np.zeros((len(CONFUSION_ORDER), len(CONFUSION_ORDER)), dtype=np.int64)
    for g, p in zip(gold, pred):
        m[_CONF_INDEX[g.cls or "O"], _CONF_INDEX[p.cls or "O"]] += 1
    return m


def document_confusion(gold: Sequence[Document], pred: Sequence[Document]) -> np.ndarray:
    by_id = {d.id: d for d in pred}
    total = np.zeros((len(CONFUSION_ORDER),) * 2, dtype=np.int64)
    for g in gold:
        tokens = tokenize(g.text)
        p = by_id.get(g.id)
        total += token_confusion(spans_to_iob(tokens, g.annotations),
                                 spans_to_iob(tokens, p.annotations if p else ()))
    return total


# ---------------------------------------------------------------- output

def report_object(report: EvalReport, confusion=None) -> dict:
    def row(s):
        return {"tp": s.tp, "fp": s.fp, "fn": s.fn,
                "p": round(s.p, 2), "r": round(s.r, 2), "f1": round(s.f1, 2)}

    obj = {"mode": str(report.mode),
           "per_class": [dict({"class": str(c)}, **row(s)) for c, s in report.per_class.items()],
           "micro": row(report.micro),
           "macro": {k: round(v, 2) for k, v in zip(("p", "r", "f1"), report.macro)}}
    if confusion is not None:
        obj["confusion_order"] = [str(c) for c in CONFUSION_ORDER]
        obj["confusion"] = np.asarray(confusion).tolist()
    return obj


def render_report(report: EvalReport, confusion=None) -> tuple[str, dict]:
    """Text table (classes by descending F1, then micro and macro rows) and a JSON-able dict."""
    lines = ["%s evaluation" % str(report.mode).capitalize(),
             "%-12s %7s %7s %7s" % ("Class", "P", "R", "F1")]
    order = list(report.per_class)
    ranked = sorted(report.per_class.items(), key=lambda kv: (-round(kv[1].f1, 2), order.index(kv[0])))
    for c, s in ranked:
        lines.append("%-12s %7.2f %7.2f %7.2f" % (c, s.p, s.r, s.f1))
    lines.append("%-12s %7.2f %7.2f %7.2f" % ("Overall (micro)", report.micro.p,
                                               report.micro.r, report.micro.f1))
    lines.append("%-12s %7.2f %7.2f %7.2f" % (("Overall (macro)",) + tuple(report.macro)))
    if confusion is not None:
        lines.append("")
        lines.append("Token confusion (rows actual, columns predicted)")
        names = [str(c)[:5] for c in CONFUSION_ORDER]
        lines.append("%-10s" % "" + "".join("%7s" % n for n in names))
        for name, r in zip(CONFUSION_ORDER, np.asarray(confusion)):
            lines.append("%-10s" % name + "".join("%7d" % v for v in r))
    return "\n".join(lines) + "\n", report_object(report, confusion)


def parse_report(text: str) -> dict:
    return json.loads(text)
