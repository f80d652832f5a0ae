"""Word vocabularies and embedding tables.

Pretraining is skip-gram with negative sampling (SGNS): each (center,
context) pair is a positive example for a logistic classifier over the dot
product of an input vector and an output vector, and ``negatives`` words drawn
from the unigram distribution raised to 0.75 serve as negative examples.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import normalize_word
from .errors import ConfigError, MedseqError, ParseError

logger = logging.getLogger(__name__)

UNK = "<unk>"
PAD = "<pad>"
UNK_INDEX = 0
PAD_INDEX = 1


class Vocabulary:
    """Dense word index. ``<unk>`` is 0 and ``<pad>`` is 1."""

    def __init__(self, words: Sequence[str] = (), counts=None):
        self.words = [UNK, PAD] + [w for w in words if w not in (UNK, PAD)]
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        self.counts = Counter(counts or {})

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return normalize_word(word) in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def lookup(self, word: str) -> int:
        return self.index.get(normalize_word(word), UNK_INDEX)

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self.lookup(w) for w in words]

    def extend(self, words: Iterable[str]) -> "Vocabulary":
        """Return a copy with unseen (normalized) words appended."""
        extra = []
        seen = set(self.index)
        for w in words:
            w = normalize_word(w)
            if w not in seen:
                seen.add(w)
                extra.append(w)
        return Vocabulary(self.words[2:] + extra, self.counts)


def build_vocab(streams: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ConfigError("min count must be >= 1")
    counts = Counter(normalize_word(w) for s in streams for w in s)
    kept = sorted((w for w, c in counts.items() if c >= min_count),
                  key=lambda w: (-counts[w], w))
    return Vocabulary(kept, {w: counts[w] for w in kept})


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    source: str = "random"
    vocab: Vocabulary | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding matrix has non-finite values")
        if self.source not in ("pretrained", "random"):
            raise ValueError("unknown source %r" % self.source)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def uniform_bound(dim: int) -> float:
    return float(np.sqrt(3.0 / dim))


def init_uniform(rows: int, dim: int, seed=0) -> EmbeddingMatrix:
    """Rows drawn i.i.d. from U[-b, b] with b = sqrt(3 / dim) (unit variance)."""
    if rows < 1 or dim < 1:
        raise ConfigError("rows and dim must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    b = uniform_bound(dim)
    return EmbeddingMatrix(rng.uniform(-b, b, size=(rows, dim)), "random")


def lookup(vocab: Vocabulary, matrix: EmbeddingMatrix, word: str) -> np.ndarray:
    return matrix.values[vocab.lookup(word)]


# ---------------------------------------------------------------- skip-gram

@dataclass
class SkipGramConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_count: int = 5
    subsample: float = 1e-3
    seed: int = 1

    def validate(self):
        if self.window < 1 or self.negatives < 1 or self.dim < 1:
            raise ConfigError("window, negatives and dim must be >= 1")
        if self.epochs < 1 or self.min_count < 1:
            raise ConfigError("epochs and min count must be >= 1")
        if self.lr <= 0 or self.subsample < 0:
            raise ConfigError("learning rate must be > 0 and subsample threshold >= 0")


class NegativeSampler:
    """Draws word indices from the unigram^0.75 distribution."""

    def __init__(self, counts: Sequence[float], power: float = 0.75):
        weights = np.asarray(counts, dtype=np.float64) ** power
        if weights.sum() <= 0:
            raise MedseqError("negative sampler needs at least one counted word")
        self.probs = weights / weights.sum()
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.searchsorted(self._cdf, rng.random(size), side="right")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sgns_update(syn0, syn1, center, targets, labels, lr):
    """One SGNS step for input word ``center`` against output ``targets``.

    Returns the loss ``-sum log sigmoid(+-u.v)`` before the update.
    """
    l1 = syn0[center]
    out = syn1[targets]
    score = out @ l1
    f = _sigmoid(score)
    sign = 2.0 * labels - 1.0
    loss = float(np.sum(np.logaddexp(0.0, -sign * score)))
    g = (labels - f) * lr
    syn0[center] = l1 + g @ out
    np.add.at(syn1, targets, np.outer(g, l1))
    return loss


def train_skipgram(streams: Sequence[Sequence[str]], config: SkipGramConfig = None,
                   vocab: Vocabulary | None = None) -> EmbeddingMatrix:
    """Pretrain word vectors; the result carries its vocabulary in ``.vocab``.

    Single-threaded and deterministic for a given ``config.seed``. The
    learning rate decays linearly with words processed down to 1e-4 of its
    initial value.
    """
    config = config or SkipGramConfig()
    config.validate()
    streams = [[normalize_word(w) for w in s] for s in streams]
    if vocab is None:
        vocab = build_vocab(streams, config.min_count)
    encoded = [[vocab.index[w] for w in s if w in vocab.index and vocab.index[w] > PAD_INDEX]
               for s in streams]
    total = sum(len(s) for s in encoded)
    if total == 0:
        raise MedseqError("pretraining corpus is empty after applying min count %d"
                          % config.min_count)

    rng = np.random.default_rng(config.seed)
    V, d = len(vocab), config.dim
    counts = np.array([vocab.counts.get(w, 0) for w in vocab.words], dtype=np.float64)
    sampler = NegativeSampler(counts)
    if config.subsample > 0:
        freq = counts / counts.sum()
        thresh = config.subsample
        with np.errstate(divide="ignore", invalid="ignore"):
            keep = np.where(freq > 0, (np.sqrt(freq / thresh) + 1) * thresh / freq, 1.0)
        keep = np.minimum(keep, 1.0)
    else:
        keep = np.ones(V)

    syn0 = (rng.random((V, d)) - 0.5) / d
    syn1 = np.zeros((V, d))
    k = config.negatives
    labels = np.zeros(k + 1)
    labels[0] = 1.0
    seen = 0
    budget = config.epochs * total + 1
    for epoch in range(config.epochs):
        loss_sum, pairs = 0.0, 0
        for sent in encoded:
            sent_arr = np.asarray(sent, dtype=np.int64)
            words = sent_arr[rng.random(len(sent_arr)) < keep[sent_arr]]
            seen += len(sent_arr)
            n = len(words)
            if n < 2:
                continue
            lr = config.lr * max(1.0 - seen / budget, 1e-4)
            shrink = rng.integers(0, config.window, size=n)
            for pos in range(n):
                w = config.window - shrink[pos]
                lo, hi = max(0, pos - w), min(n, pos + w + 1)
                ctx = [c for c in range(lo, hi) if c != pos]
                negs = sampler.draw(rng, (len(ctx), k))
                for j, c in enumerate(ctx):
                    # a negative that collides with the positive word is dropped
                    neg = negs[j][negs[j] != words[c]]
                    targets = np.concatenate(([words[c]], neg))
                    loss_sum += sgns_update(syn0, syn1, words[pos], targets,
                                            labels[:len(targets)], lr)
                    pairs += 1
        logger.debug("skip-gram epoch %d: mean pair loss %.4f over %d pairs",
                     epoch + 1, loss_sum / max(pairs, 1), pairs)
    return EmbeddingMatrix(syn0, "pretrained", vocab)


def cosine(a, b) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-300))


# ---------------------------------------------------------------- text format

def save_embeddings(matrix: EmbeddingMatrix, vocab: Vocabulary, path) -> None:
    if matrix.rows != len(vocab):
        raise ValueError("matrix has %d rows for %d words" % (matrix.rows, len(vocab)))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("%d %d\n" % (matrix.rows, matrix.dim))
        for word, row in zip(vocab.words, matrix.values):
            f.write(word + " " + " ".join("%.6g" % v for v in row) + "\n")


def load_embeddings(path) -> tuple[Vocabulary, EmbeddingMatrix]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing header", 1)
    header = lines[0].split()
    if len(header) != 2:
        raise ParseError("header must be 'V d'", 1)
    try:
        V, d = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("non-integer header %r" % lines[0], 1) from None
    if len(lines) - 1 != V:
        raise ParseError("header declares %d rows, file has %d" % (V, len(lines) - 1), 1)
    words, values = [], np.empty((V, d))
    for i, line in enumerate(lines[1:]):
        parts = line.rstrip().split(" ")
        if len(parts) != d + 1:
            raise ParseError("expected a word and %d values, got %d fields"
                             % (d, len(parts)), i + 2)
        words.append(parts[0])
        try:
            values[i] = [float(x) for x in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric value", i + 2) from None
    if words[:2] == [UNK, PAD]:
        vocab = Vocabulary(words[2:])
        mat = values
    else:
        # foreign word2vec file: give UNK and PAD zero rows in front
        vocab = Vocabulary(words)
        if len(vocab) != V + 2:
            raise ParseError("duplicate or reserved words in embedding file", 1)
        mat = np.vstack([np.zeros((2, d)), values])
    return vocab, EmbeddingMatrix(mat, "pretrained", vocab)
