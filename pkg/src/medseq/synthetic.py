"""Templated synthetic discharge-medication corpora with feature sidecars.

Surface forms come from the example lexicon of the nine entity classes; the
default mention rates are the per-document training averages of the n2c2
2018 track 2 corpus.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Annotation, Document, EntityClass, tokenize
from .errors import ConfigError
from .features import CLAMP_TAGS, CTAKES_TAGS, FeatureRow

E = EntityClass

LEXICON = {
    E.DRUG: ["coumadin", "vancomycin", "aspirin", "lasix", "prednisone", "o2",
             "vitamin k", "packed red blood cells"],
    E.STRENGTH: ["8.6 mg", "2.5 mg/3 ml (0.083%)", "400 unit", "100 unit/ml",
                 "5% (700 mg/patch)"],
    E.FORM: ["Tablet", "capsule", "cream", "tablet sustained release 24 hr"],
    E.FREQUENCY: ["daily", "prn", "q4h (every 4 hours) as needed", "qid"],
    E.ROUTE: ["po", "iv", "by mouth", "inhalation", "p.o.", "topical", "nasal", "injection"],
    E.DOSAGE: ["one (1)", "sliding scale", "taper", "2 units", "30 ml", "100 unit/ml"],
    E.REASON: ["pain", "constipation", "anxiety", "nausea", "wheezing",
               "atrial fibrillation", "pneumonia", "hypotension"],
    E.ADE: ["rash", "thrombocytopenia", "toxicity", "diarrhea", "altered mental status"],
    E.DURATION: ["for 7 days", "for one week", "5 days", "few days", "prn", "chronically",
                 "until his ciwa was less than 10"],
}

# mentions per document, training split
DEFAULT_RATES = {
    E.DRUG: 53.55, E.STRENGTH: 22.08, E.FORM: 21.95, E.FREQUENCY: 20.73,
    E.ROUTE: 18.07, E.DOSAGE: 13.93, E.REASON: 12.72, E.ADE: 3.17, E.DURATION: 1.95,
}

# order of slots on a medication line and the words that precede each slot
_SLOT_ORDER = [E.DRUG, E.STRENGTH, E.FORM, E.DOSAGE, E.ROUTE, E.FREQUENCY,
               E.DURATION, E.REASON, E.ADE]
_CONNECTOR = {E.DOSAGE: "take", E.REASON: "for", E.ADE: "complicated by"}
_SHARED_CONNECTOR = "with"

_FILLER = ["Patient was seen in clinic today .", "Discharge condition : stable .",
           "Follow up with primary care physician .", "No known allergies ."]

# tags the external pipelines attach to mention tokens
TRUE_TAGS = {
    E.REASON: ("problem:present", "DiseaseDisorder"),
    E.ADE: ("problem:present", "SignSymptom"),
    E.DRUG: ("treatment:present", "Medication"),
}


@dataclass
class SyntheticConfig:
    seed: int = 0
    n_docs: int = 10
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    tag_correlation: float = 1.0
    filler_lines: int = 1
    # Reason and ADE share one lexicon and one context, so only the sidecar
    # tags tell them apart
    ambiguous_conditions: bool = False
    # restrict lexicons to these surface forms per class (held-out vocabulary)
    lexicon: dict | None = None
    doc_prefix: str = "doc"

    def validate(self):
        if not 0.0 <= self.tag_correlation <= 1.0:
            raise ConfigError("tag correlation must lie in [0, 1], got %r" % self.tag_correlation)
        if self.n_docs < 0:
            raise ConfigError("document count must be >= 0")
        for c, r in self.rates.items():
            EntityClass(c)
            if not np.isfinite(r) or r < 0:
                raise ConfigError("rate for %s must be a finite value >= 0, got %r" % (c, r))


def _count(rng, rate):
    whole = int(np.floor(rate))
    return whole + int(rng.random() < rate - whole)


def generate_synthetic(config: SyntheticConfig):
    """Return ``(documents, features)`` where ``features`` maps doc id to rows.

    Output is a pure function of the configuration.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    lexicon = {c: list(v) for c, v in LEXICON.items()}
    if config.ambiguous_conditions:
        shared = lexicon[E.REASON] + lexicon[E.ADE]
        lexicon[E.REASON] = lexicon[E.ADE] = shared
    if config.lexicon:
        for c, words in config.lexicon.items():
            lexicon[EntityClass(c)] = list(words)
    rates = {EntityClass(c): float(r) for c, r in config.rates.items()}

    docs, feats = [], {}
    width = max(4, len(str(max(config.n_docs - 1, 0))))
    for n in range(config.n_docs):
        doc_id = "%s%0*d" % (config.doc_prefix, width, n)
        counts = {c: _count(rng, rates.get(c, 0.0)) for c in _SLOT_ORDER}
        lines = _layout(rng, counts)
        fillers = [_FILLER[i] for i in rng.integers(0, len(_FILLER), config.filler_lines)]
        for f in fillers:
            lines.insert(int(rng.integers(0, len(lines) + 1)), f)
        doc, rows = _render(rng, doc_id, lines, lexicon, config)
        docs.append(doc)
        feats[doc_id] = rows
    return docs, feats


def _layout(rng, counts):
    """Distribute mentions over lines; each line is a list of slot classes."""
    n_lines = max(counts[E.DRUG], 1 if any(counts.values()) else 0)
    lines = [[E.DRUG] if i < counts[E.DRUG] else [] for i in range(n_lines)]
    for c in _SLOT_ORDER[1:]:
        if not counts[c]:
            continue
        # spread over lines, preferring lines that lack this slot
        order = []
        while len(order) < counts[c]:
            order.extend(rng.permutation(n_lines).tolist())
        for i in order[:counts[c]]:
            lines[i].append(c)
    return [sorted(slots, key=_SLOT_ORDER.index) for slots in lines]


def _render(rng, doc_id, lines, lexicon, config):
    text_parts = []
    anns = []
    token_tags = []
    pos = 0
    for line in lines:
        if isinstance(line, str):
            pieces = [(line, None)]
        else:
            pieces = []
            if config.ambiguous_conditions:
                # slot order must not give the condition class away
                conds = [c for c in line if c in (E.REASON, E.ADE)]
                line = [c for c in line if c not in (E.REASON, E.ADE)]
                line += [conds[i] for i in rng.permutation(len(conds))]
            for c in line:
                if c in (E.REASON, E.ADE) and config.ambiguous_conditions:
                    pieces.append((_SHARED_CONNECTOR, None))
                elif c in _CONNECTOR:
                    pieces.append((_CONNECTOR[c], None))
                words = lexicon[c]
                pieces.append((words[int(rng.integers(0, len(words)))], c))
            pieces.append((".", None))
        for k, (s, c) in enumerate(pieces):
            if k:
                text_parts.append(" ")
                pos += 1
            if c is not None:
                anns.append(Annotation("T%d" % (len(anns) + 1), c, ((pos, pos + len(s)),), s))
                token_tags.append((pos, s, c))
            text_parts.append(s)
            pos += len(s)
        text_parts.append("\n")
        pos += 1
    text = "".join(text_parts)
    rows = []
    for start, s, c in token_tags:
        if c not in TRUE_TAGS:
            continue
        for tok in tokenize(s):
            if rng.random() < config.tag_correlation:
                clamp, ctakes = TRUE_TAGS[c]
            else:
                clamp = _random_clamp(rng)
                ctakes = _CTAKES_NON_O[int(rng.integers(0, len(_CTAKES_NON_O)))]
            rows.append(FeatureRow.parse(start + tok.start, start + tok.end, clamp, ctakes))
    return Document(doc_id, text, tuple(anns)), rows


_CTAKES_NON_O = [t for t in CTAKES_TAGS if t != "O"]


def _random_clamp(rng):
    tags = [t for t in CLAMP_TAGS if t != "O"]
    tag = tags[int(rng.integers(0, len(tags)))]
    return "%s:%s" % (tag, ("present", "absent")[int(rng.integers(0, 2))])
