"""Token-level semantic tags from external clinical pipelines.

The tags arrive in a sidecar file per document (``<docid>.feat``), a UTF-8
TSV with columns ``start``, ``end``, ``clamp[:assertion]`` and ``ctakes``
where ``-`` stands for "no tag from this pipeline".
"""

from __future__ import annotations

import bisect
from typing import NamedTuple, Sequence

from .corpus import Token, read_text_file, write_text_file
from .errors import ParseError, UnknownLabelError

CLAMP_TAGS = ("problem", "treatment", "test", "temporal", "negation",
              "severity_degree", "body_location", "change", "uncertainty", "O")
ASSERTIONS = ("present", "absent", "none")
CTAKES_TAGS = ("Medication", "DiseaseDisorder", "SignSymptom", "AnatomicalSite",
               "Procedure", "O")


class ClampTag(NamedTuple):
    tag: str = "O"
    assertion: str = "none"

    def __str__(self):
        if self.tag == "O":
            return "-"
        return self.tag if self.assertion == "none" else "%s:%s" % self


CLAMP_O = ClampTag()


class TokenFeatures(NamedTuple):
    clamp: ClampTag = CLAMP_O
    ctakes: str = "O"


NO_FEATURES = TokenFeatures()


def parse_clamp(s: str) -> ClampTag:
    if s in ("-", "O"):
        return CLAMP_O
    tag, _, assertion = s.partition(":")
    if tag not in CLAMP_TAGS or tag == "O":
        raise UnknownLabelError("unknown CLAMP tag %r" % tag)
    assertion = assertion or "none"
    if assertion not in ("present", "absent", "none"):
        raise UnknownLabelError("unknown assertion %r" % assertion)
    return ClampTag(tag, assertion)


def parse_ctakes(s: str) -> str:
    if s in ("-", "O"):
        return "O"
    if s not in CTAKES_TAGS:
        raise UnknownLabelError("unknown cTAKES tag %r" % s)
    return s


class FeatureRow(NamedTuple):
    start: int
    end: int
    clamp: ClampTag
    ctakes: str

    @classmethod
    def parse(cls, start, end, clamp: str, ctakes: str) -> "FeatureRow":
        return cls(int(start), int(end), parse_clamp(clamp), parse_ctakes(ctakes))

    def format(self) -> str:
        return "%d\t%d\t%s\t%s" % (self.start, self.end, self.clamp,
                                   "-" if self.ctakes == "O" else self.ctakes)


def parse_token_features(content: str) -> list[FeatureRow]:
    rows = []
    for lineno, line in enumerate(content.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ParseError("expected 4 tab-separated columns, got %d" % len(cols), lineno)
        try:
            start, end = int(cols[0]), int(cols[1])
        except ValueError:
            raise ParseError("non-numeric offsets %r %r" % (cols[0], cols[1]), lineno) from None
        if start >= end or start < 0:
            raise ParseError("empty or negative span (%d, %d)" % (start, end), lineno)
        rows.append(FeatureRow(start, end, parse_clamp(cols[2]), parse_ctakes(cols[3])))
    return rows


def read_token_features(path) -> list[FeatureRow]:
    return parse_token_features(read_text_file(path))


def format_token_features(rows: Sequence[FeatureRow]) -> str:
    return "".join(r.format() + "\n" for r in rows)


def write_token_features(path, rows: Sequence[FeatureRow]) -> None:
    write_text_file(path, format_token_features(rows))


def align_features(tokens: Sequence[Token], rows: Sequence[FeatureRow]) -> list[TokenFeatures]:
    """Give each token the tags of the rows overlapping it.

    Each stream is resolved on its own: among rows carrying a tag for that
    stream, the one with the most overlapping characters wins, ties going to
    the row that sorts first.
    """
    rows = sorted(rows, key=lambda r: (r.start, r.end, str(r.clamp), r.ctakes))
    starts = [r.start for r in rows]
    out = []
    for tok in tokens:
        best_clamp, best_ctakes = (0, CLAMP_O), (0, "O")
        for r in rows[:bisect.bisect_left(starts, tok.end)]:
            overlap = min(r.end, tok.end) - max(r.start, tok.start)
            if overlap <= 0:
                continue
            if r.clamp != CLAMP_O and overlap > best_clamp[0]:
                best_clamp = (overlap, r.clamp)
            if r.ctakes != "O" and overlap > best_ctakes[0]:
                best_ctakes = (overlap, r.ctakes)
        out.append(TokenFeatures(best_clamp[1], best_ctakes[1]))
    return out


class TagVocab:
    """Closed-world index over tag units; the O unit is always index 0."""

    def __init__(self, units):
        self.units = list(units)
        self.index = {u: i for i, u in enumerate(self.units)}

    def __len__(self):
        return len(self.units)

    def __getitem__(self, unit):
        return self.index[unit]

    def __eq__(self, other):
        return isinstance(other, TagVocab) and self.units == other.units


def clamp_unit(tag: ClampTag) -> ClampTag:
    # an asserted tag without an explicit attribute counts as present
    if tag.tag != "O" and tag.assertion == "none":
        return ClampTag(tag.tag, "present")
    return tag


CLAMP_UNITS = (CLAMP_O,) + tuple(ClampTag(t, a) for t in CLAMP_TAGS if t != "O"
                                 for a in ("present", "absent"))
CTAKES_UNITS = ("O",) + tuple(t for t in CTAKES_TAGS if t != "O")


def build_tag_vocab(feature_sequences=()):
    """Return ``(clamp_vocab, ctakes_vocab)``.

    The tag sets are closed, so the result does not depend on the input; the
    sequences are only checked for units outside the closed sets.
    """
    clamp, ctakes = TagVocab(CLAMP_UNITS), TagVocab(CTAKES_UNITS)
    for seq in feature_sequences:
        for f in seq:
            if clamp_unit(f.clamp) not in clamp.index:
                raise UnknownLabelError("unknown CLAMP unit %r" % (f.clamp,))
            if f.ctakes not in ctakes.index:
                raise UnknownLabelError("unknown cTAKES unit %r" % (f.ctakes,))
    return clamp, ctakes


def merged_vocab(clamp: TagVocab, ctakes: TagVocab) -> TagVocab:
    """Single-stream vocabulary over (clamp, ctakes) pairs, (O, O) first."""
    return TagVocab([(a, b) for a in clamp.units for b in ctakes.units])


def feature_indices(feats: Sequence[TokenFeatures], clamp: TagVocab, ctakes: TagVocab):
    return ([clamp[clamp_unit(f.clamp)] for f in feats], [ctakes[f.ctakes] for f in feats])
