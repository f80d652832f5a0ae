"""Documents, standoff annotations, tokenization, segmentation and IOB coding.

Character offsets everywhere are Python string indices, i.e. Unicode scalar
values of the ``.txt`` file read without newline translation.
"""

from __future__ import annotations

import enum
import os
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

from .errors import AnnotationWarning, BoundsError, ParseError, UnknownLabelError


class EntityClass(str, enum.Enum):
    DRUG = "Drug"
    STRENGTH = "Strength"
    FORM = "Form"
    FREQUENCY = "Frequency"
    ROUTE = "Route"
    DOSAGE = "Dosage"
    REASON = "Reason"
    ADE = "ADE"
    DURATION = "Duration"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, name: str) -> "EntityClass":
        try:
            return cls(name)
        except ValueError:
            raise UnknownLabelError("unknown entity class %r" % name) from None


ENTITY_CLASSES = tuple(EntityClass)


@dataclass(frozen=True)
class Annotation:
    id: str
    cls: EntityClass
    fragments: tuple[tuple[int, int], ...]
    text: str = ""

    def __post_init__(self):
        frags = tuple((int(s), int(e)) for s, e in self.fragments)
        if not frags:
            raise ValueError("annotation %s has no fragments" % self.id)
        prev_end = None
        for s, e in frags:
            if s >= e:
                raise ValueError("annotation %s: empty fragment (%d, %d)" % (self.id, s, e))
            if prev_end is not None and s < prev_end:
                raise ValueError("annotation %s: fragments overlap or are unsorted" % self.id)
            prev_end = e
        object.__setattr__(self, "fragments", frags)
        object.__setattr__(self, "cls", EntityClass(self.cls))

    @property
    def start(self) -> int:
        return self.fragments[0][0]

    @property
    def end(self) -> int:
        return self.fragments[-1][1]

    @property
    def length(self) -> int:
        """Total number of annotated characters over all fragments."""
        return sum(e - s for s, e in self.fragments)

    def key(self):
        return (self.cls, self.fragments)

    def overlaps(self, other: "Annotation") -> bool:
        return any(s1 < e2 and s2 < e1
                   for s1, e1 in self.fragments for s2, e2 in other.fragments)


def surface_of(text: str, fragments: Iterable[tuple[int, int]]) -> str:
    return " ".join(text[s:e] for s, e in fragments)


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    annotations: tuple[Annotation, ...] = field(default_factory=tuple)

    def __post_init__(self):
        anns = tuple(self.annotations)
        n = len(self.text)
        for a in anns:
            if a.end > n or a.start < 0:
                raise BoundsError("annotation %s (%d, %d) outside text of length %d"
                                  % (a.id, a.start, a.end, n))
        object.__setattr__(self, "annotations", anns)


class Token(NamedTuple):
    surface: str
    start: int
    end: int


class IOBLabel(NamedTuple):
    tag: str
    cls: EntityClass | None = None

    def __str__(self):
        return "O" if self.tag == "O" else "%s-%s" % (self.tag, self.cls.value)

    @classmethod
    def parse(cls, s: str) -> "IOBLabel":
        if s == "O":
            return OUTSIDE
        tag, _, name = s.partition("-")
        if tag not in ("B", "I") or not name:
            raise UnknownLabelError("malformed IOB label %r" % s)
        return cls(tag, EntityClass.parse(name))


OUTSIDE = IOBLabel("O", None)

# Index 0 is O, then B-/I- pairs in EntityClass order.
LABELS: tuple[IOBLabel, ...] = (OUTSIDE,) + tuple(
    IOBLabel(tag, c) for c in ENTITY_CLASSES for tag in ("B", "I"))
LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}
NUM_LABELS = len(LABELS)


@dataclass(frozen=True)
class Segment:
    doc_id: str
    tokens: tuple[Token, ...]
    labels: tuple[IOBLabel, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != len(self.tokens):
                raise ValueError("segment has %d tokens but %d labels"
                                 % (len(self.tokens), len(self.labels)))

    def __len__(self):
        return len(self.tokens)


# ---------------------------------------------------------------- standoff

_SPANS_RE = re.compile(r"^\d+ \d+(?:;\d+ \d+)*$")


def read_standoff(text: str, ann: str, doc_id: str = "") -> Document:
    """Parse a standoff ``.ann`` string against its document text.

    Only textbound (``T``) lines are read. When the recorded surface does not
    match the text at the given offsets, an :class:`AnnotationWarning` is
    issued and the offsets are kept.
    """
    annotations = []
    for lineno, line in enumerate(ann.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.startswith("T"):
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise ParseError("expected 3 tab-separated fields, got %d" % len(parts), lineno)
        ann_id, middle, surface = parts[0], parts[1], "\t".join(parts[2:])
        name, _, span_str = middle.partition(" ")
        if not _SPANS_RE.match(span_str):
            raise ParseError("bad offsets %r" % span_str, lineno)
        cls = EntityClass.parse(name)
        frags = tuple(tuple(int(x) for x in piece.split(" ")) for piece in span_str.split(";"))
        for s, e in frags:
            if e > len(text):
                raise BoundsError("line %d: offset %d beyond text length %d"
                                  % (lineno, e, len(text)))
        try:
            a = Annotation(ann_id, cls, frags, surface)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        expected = surface_of(text, frags)
        if _normalize_ws(expected) != _normalize_ws(surface):
            warnings.warn("%s: surface %r does not match text %r; keeping offsets"
                          % (ann_id, surface, expected), AnnotationWarning, stacklevel=2)
            a = Annotation(ann_id, cls, frags, expected)
        annotations.append(a)
    return Document(doc_id, text, tuple(annotations))


def _normalize_ws(s: str) -> str:
    return re.sub(r"\s", " ", s)


def write_standoff(doc: Document) -> str:
    lines = []
    for a in doc.annotations:
        spans = ";".join("%d %d" % f for f in a.fragments)
        surface = _normalize_ws(surface_of(doc.text, a.fragments))
        lines.append("%s\t%s %s\t%s\n" % (a.id, a.cls.value, spans, surface))
    return "".join(lines)


def read_text_file(path) -> str:
    with open(path, encoding="utf-8", newline="") as f:
        return f.read()


def write_text_file(path, content: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(content)


def load_document(txt_path, ann_path=None) -> Document:
    doc_id = os.path.splitext(os.path.basename(txt_path))[0]
    text = read_text_file(txt_path)
    if ann_path is None:
        ann_path = os.path.splitext(txt_path)[0] + ".ann"
    ann = read_text_file(ann_path) if os.path.exists(ann_path) else ""
    return read_standoff(text, ann, doc_id)


def list_doc_ids(directory, ext=".txt") -> list[str]:
    return sorted(f[: -len(ext)] for f in os.listdir(directory) if f.endswith(ext))


def read_corpus(directory) -> list[Document]:
    return [load_document(os.path.join(directory, d + ".txt"))
            for d in list_doc_ids(directory)]


def write_document(doc: Document, directory) -> None:
    write_text_file(os.path.join(directory, doc.id + ".txt"), doc.text)
    write_text_file(os.path.join(directory, doc.id + ".ann"), write_standoff(doc))


# ---------------------------------------------------------------- tokens

# Abbreviations of single letters ("p.o.") and decimal numbers stay whole;
# any other punctuation character is its own token.
_TOKEN_RE = re.compile(r"(?:[^\W\d_]\.){2,}|\d+(?:[.,]\d+)+|\w+|[^\w\s]")


def tokenize(text: str) -> list[Token]:
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def normalize_word(surface: str) -> str:
    return surface.lower()


MAX_SEGMENT_TOKENS = 120


def segment(doc: Document, max_tokens: int = MAX_SEGMENT_TOKENS,
            with_labels: bool = True) -> list[Segment]:
    """Split a document into line segments.

    Lines joined by an annotation fragment are merged; segments longer than
    ``max_tokens`` are cut at the last boundary no fragment crosses.
    """
    tokens = tokenize(doc.text)
    if not tokens:
        return []
    line_starts = [0] + [m.end() for m in re.finditer("\n", doc.text)]

    def line_of(offset):
        lo, hi = 0, len(line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo

    # group[i] is the first line of the merged block containing line i
    group = list(range(len(line_starts)))
    fragments = [f for a in doc.annotations for f in a.fragments]
    for s, e in fragments:
        first, last = line_of(s), line_of(e - 1)
        for ln in range(first + 1, last + 1):
            group[ln] = group[first]
    # propagate chains (line 3 merged into 2 which was merged into 1)
    for ln in range(len(group)):
        group[ln] = group[group[ln]]

    blocks: dict[int, list[Token]] = {}
    for tok in tokens:
        blocks.setdefault(group[line_of(tok.start)], []).append(tok)

    segments = []
    for key in sorted(blocks):
        for chunk in _cap(blocks[key], fragments, max_tokens):
            labels = spans_to_iob(chunk, doc.annotations) if with_labels else None
            segments.append(Segment(doc.id, tuple(chunk), labels))
    return segments


def _cap(tokens, fragments, max_tokens):
    while len(tokens) > max_tokens:
        cut = max_tokens
        for j in range(max_tokens, 0, -1):
            left, right = tokens[j - 1], tokens[j]
            if not any(s < left.end and e > right.start for s, e in fragments):
                cut = j
                break
        else:
            warnings.warn("no annotation-free boundary within %d tokens; splitting hard"
                          % max_tokens, AnnotationWarning, stacklevel=3)
        yield tokens[:cut]
        tokens = tokens[cut:]
    if tokens:
        yield tokens


# ---------------------------------------------------------------- IOB

def spans_to_iob(tokens: Sequence[Token], annotations: Sequence[Annotation]) -> list[IOBLabel]:
    """Label tokens with the IOB scheme.

    A token overlapping any fragment of an annotation belongs to it. When two
    annotations claim one token the one with more annotated characters wins
    (ties go to the earlier start) and an :class:`AnnotationWarning` is issued.
    """
    owner: list[int | None] = [None] * len(tokens)
    if annotations:
        rank = sorted(range(len(annotations)),
                      key=lambda k: (-annotations[k].length, annotations[k].start, k))
        priority = {k: r for r, k in enumerate(rank)}
        for ti, tok in enumerate(tokens):
            claims = [k for k, a in enumerate(annotations)
                      if a.start < tok.end and a.end > tok.start
                      and any(s < tok.end and e > tok.start for s, e in a.fragments)]
            if not claims:
                continue
            if len(claims) > 1:
                warnings.warn("token %r (%d, %d) claimed by %s; keeping the longest"
                              % (tok.surface, tok.start, tok.end,
                                 ", ".join(annotations[k].id for k in claims)),
                              AnnotationWarning, stacklevel=2)
            owner[ti] = min(claims, key=priority.__getitem__)
    labels = []
    seen = set()
    for k in owner:
        if k is None:
            labels.append(OUTSIDE)
        else:
            labels.append(IOBLabel("I" if k in seen else "B", annotations[k].cls))
            seen.add(k)
    return labels


def iob_to_spans(tokens: Sequence[Token], labels: Sequence[IOBLabel],
                 text: str | None = None, start_id: int = 1) -> list[Annotation]:
    """Merge B-/I- runs of one class into single-fragment annotations.

    An I-X that does not continue an X entity opens a new one. Surface text is
    taken from ``text`` when given, otherwise rebuilt from token surfaces.
    """
    if len(tokens) != len(labels):
        raise ValueError("got %d tokens and %d labels" % (len(tokens), len(labels)))
    runs = []
    current = None
    for tok, lab in zip(tokens, labels):
        if lab.tag == "O":
            current = None
            continue
        if lab.tag == "I" and current is not None and current[0] == lab.cls:
            current[2] = tok.end
            current[3].append(tok)
        else:
            current = [lab.cls, tok.start, tok.end, [tok]]
            runs.append(current)
    out = []
    for n, (cls, s, e, toks) in enumerate(runs):
        if text is not None:
            surface = text[s:e]
        else:
            buf = [" "] * (e - s)
            for t in toks:
                buf[t.start - s:t.end - s] = t.surface
            surface = "".join(buf)
        out.append(Annotation("T%d" % (start_id + n), cls, ((s, e),), surface))
    return out
