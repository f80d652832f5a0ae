"""Feature-augmented BiLSTM encoder with a CRF output layer.

Everything is float64 numpy with hand-written backpropagation through time.
Sequences in a batch are left-aligned and padded at the end; the backward
chain reads each sequence reversed within its own length, so padding never
feeds into a real position and needs no masking inside the recurrences.

Gate order in the stacked LSTM weights is (input, forget, cell, output).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import crf as crflib
from .corpus import LABELS, NUM_LABELS
from .embeddings import PAD_INDEX, EmbeddingMatrix, Vocabulary, uniform_bound
from .errors import ConfigError, MedseqError, ParseError
from .features import CLAMP_UNITS, CTAKES_UNITS, TagVocab, merged_vocab

GATES = ("input", "forget", "cell", "output")


def hidden_units(input_dim: int, fraction: float = 0.7) -> int:
    """Units per direction: ``fraction * input_dim`` rounded half up, at least 1."""
    return max(1, int(math.floor(round(fraction * input_dim, 9) + 0.5)))


@dataclass
class ModelConfig:
    word_dim: int = 100
    clamp_dim: int = 50
    ctakes_dim: int = 50
    augment: bool = False
    # one embedding table over (clamp, ctakes) pairs instead of two tables
    merge_tag_streams: bool = False
    hidden_fraction: float = 0.7
    # explicit units per direction; overrides hidden_fraction
    hidden_size: int | None = None
    num_labels: int = NUM_LABELS
    mask_transitions: bool = False
    seed: int = 0

    @property
    def tag_dim(self) -> int:
        if not self.augment:
            return 0
        return self.clamp_dim if self.merge_tag_streams else self.clamp_dim + self.ctakes_dim

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.tag_dim

    @property
    def hidden_dim(self) -> int:
        if self.hidden_size is not None:
            return self.hidden_size
        return hidden_units(self.input_dim, self.hidden_fraction)

    def validate(self):
        if self.word_dim < 1 or (self.augment and (self.clamp_dim < 1 or
                                                   (not self.merge_tag_streams
                                                    and self.ctakes_dim < 1))):
            raise ConfigError("embedding dimensions must be >= 1")
        if self.hidden_dim < 1:
            raise ConfigError("hidden size must be >= 1")
        if self.num_labels != NUM_LABELS:
            raise ConfigError("label count must be %d" % NUM_LABELS)


# ---------------------------------------------------------------- primitives

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def token_representation(word_id, clamp_id, ctakes_id, params, config: ModelConfig):
    """Concatenated input vector of one token."""
    parts = [params["word_emb"][word_id]]
    if config.augment:
        if config.merge_tag_streams:
            parts.append(params["tag_emb"][clamp_id])
        else:
            parts.append(params["clamp_emb"][clamp_id])
            parts.append(params["ctakes_emb"][ctakes_id])
    return np.concatenate(parts)


def lstm_cell(x, h_prev, c_prev, W, U, b):
    """One LSTM step; returns ``(h, c)``."""
    H = U.shape[1]
    z = W @ x + U @ h_prev + b
    i = sigmoid(z[:H])
    f = sigmoid(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = sigmoid(z[3 * H:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _lstm_forward(X, W, U, b):
    B, T, _ = X.shape
    H = U.shape[1]
    XW = X @ W.T + b
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = XW[:, t] + h @ U.T
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        cs[:, t] = c
        hs[:, t] = h
    return hs, {"X": X, "gates": gates, "c": cs, "h": hs}


def _lstm_backward(cache, dH, W, U, fault=None):
    X, gates, cs, hs = cache["X"], cache["gates"], cache["c"], cache["h"]
    B, T, H = dH.shape
    dZ = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    fault_slice = None
    if fault is not None:
        k = GATES.index(fault)
        fault_slice = slice(k * H, (k + 1) * H)
    for t in range(T - 1, -1, -1):
        i, f, g, o = (gates[:, t, k * H:(k + 1) * H] for k in range(4))
        c_prev = cs[:, t - 1] if t else np.zeros((B, H))
        tc = np.tanh(cs[:, t])
        dh = dH[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.concatenate([dc * g * i * (1.0 - i),
                             dc * c_prev * f * (1.0 - f),
                             dc * i * (1.0 - g * g),
                             dh * tc * o * (1.0 - o)], axis=1)
        if fault_slice is not None:
            dz[:, fault_slice] *= -1.0
        dZ[:, t] = dz
        dh_next = dz @ U
        dc_next = dc * f
    h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
    dW = np.einsum("btk,btd->kd", dZ, X)
    dU = np.einsum("btk,bth->kh", dZ, h_prev)
    db = dZ.sum(axis=(0, 1))
    return dZ @ W, dW, dU, db


def _reverse_index(lengths, T):
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm_forward_batch(X, lengths, fw, bw):
    """``X``: (B, T, D) padded inputs. Returns (B, T, 2H) hidden states and a cache."""
    B, T, _ = X.shape
    rev = _reverse_index(lengths, T)
    X_rev = np.take_along_axis(X, rev[:, :, None], axis=1)
    hf, cache_f = _lstm_forward(X, *fw)
    hb_rev, cache_b = _lstm_forward(X_rev, *bw)
    hb = np.take_along_axis(hb_rev, rev[:, :, None], axis=1)
    return np.concatenate([hf, hb], axis=2), {"fw": cache_f, "bw": cache_b, "rev": rev}


def bilstm_backward_batch(cache, dHidden, fw, bw, fault=None):
    H = fw[1].shape[1]
    rev = cache["rev"]
    dXf, dWf, dUf, dbf = _lstm_backward(cache["fw"], dHidden[:, :, :H], fw[0], fw[1], fault)
    dhb_rev = np.take_along_axis(dHidden[:, :, H:], rev[:, :, None], axis=1)
    dXb_rev, dWb, dUb, dbb = _lstm_backward(cache["bw"], dhb_rev, bw[0], bw[1], fault)
    dXb = np.take_along_axis(dXb_rev, rev[:, :, None], axis=1)
    return dXf + dXb, (dWf, dUf, dbf), (dWb, dUb, dbb)


def bilstm_forward(inputs, fw, bw):
    """Single sequence: ``inputs`` (L, D) -> hidden (L, 2H) and a cache."""
    inputs = np.asarray(inputs, dtype=np.float64)
    L = inputs.shape[0]
    H = fw[1].shape[1]
    if L == 0:
        return np.zeros((0, 2 * H)), None
    hidden, cache = bilstm_forward_batch(inputs[None], [L], fw, bw)
    return hidden[0], cache


def emissions(hidden, W, b):
    """Per-token label scores ``hidden @ W.T + b``."""
    hidden = np.asarray(hidden, dtype=np.float64)
    return hidden @ np.asarray(W).T + np.asarray(b)


# ---------------------------------------------------------------- batches

@dataclass
class Batch:
    words: np.ndarray
    clamp: np.ndarray
    ctakes: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.lengths)

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.words.shape[1])[None, :] < self.lengths[:, None]


def make_batch(examples: Sequence[tuple]) -> Batch:
    """Pad encoded examples ``(words, clamp, ctakes[, labels])`` into a batch."""
    lengths = np.array([len(e[0]) for e in examples], dtype=np.int64)
    B, T = len(examples), int(lengths.max()) if len(examples) else 0
    words = np.full((B, T), PAD_INDEX, dtype=np.int64)
    clamp = np.zeros((B, T), dtype=np.int64)
    ctakes = np.zeros((B, T), dtype=np.int64)
    has_labels = all(len(e) > 3 and e[3] is not None for e in examples)
    labels = np.zeros((B, T), dtype=np.int64) if has_labels else None
    for k, e in enumerate(examples):
        n = lengths[k]
        words[k, :n] = e[0]
        clamp[k, :n] = e[1]
        ctakes[k, :n] = e[2]
        if has_labels:
            labels[k, :n] = e[3]
    return Batch(words, clamp, ctakes, lengths, labels)


# ---------------------------------------------------------------- model

def _glorot(rng, rows, cols):
    bound = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


class GradientCheckNotApplicable(MedseqError):
    pass


class BiLstmCrf:
    """Parameters, vocabularies and the forward/backward passes of the tagger."""

    def __init__(self, config: ModelConfig, word_vocab: Vocabulary, params: dict,
                 word_source: str = "random"):
        config.validate()
        self.config = config
        self.word_vocab = word_vocab
        self.clamp_vocab = TagVocab(CLAMP_UNITS)
        self.ctakes_vocab = TagVocab(CTAKES_UNITS)
        self.tag_vocab = merged_vocab(self.clamp_vocab, self.ctakes_vocab)
        self.params = params
        self.word_source = word_source
        self._masks = crflib.iob_masks(LABELS) if config.mask_transitions else None
        self._check_shapes()

    @classmethod
    def initialize(cls, config: ModelConfig, word_vocab: Vocabulary,
                   pretrained: EmbeddingMatrix | None = None) -> "BiLstmCrf":
        """Fresh parameters drawn from ``config.seed``.

        Pretrained rows are copied for words of ``pretrained.vocab``; other
        rows keep their uniform draw.
        """
        config.validate()
        rng = np.random.default_rng(config.seed)
        D, H, K = config.input_dim, config.hidden_dim, config.num_labels
        b = uniform_bound(config.word_dim)
        params = {"word_emb": rng.uniform(-b, b, size=(len(word_vocab), config.word_dim))}
        if config.augment:
            if config.merge_tag_streams:
                n = len(CLAMP_UNITS) * len(CTAKES_UNITS)
                b = uniform_bound(config.clamp_dim)
                params["tag_emb"] = rng.uniform(-b, b, size=(n, config.clamp_dim))
            else:
                b = uniform_bound(config.clamp_dim)
                params["clamp_emb"] = rng.uniform(-b, b, size=(len(CLAMP_UNITS), config.clamp_dim))
                b = uniform_bound(config.ctakes_dim)
                params["ctakes_emb"] = rng.uniform(-b, b, size=(len(CTAKES_UNITS), config.ctakes_dim))
        for d in ("fw", "bw"):
            params[d + ".W"] = _glorot(rng, 4 * H, D)
            params[d + ".U"] = _glorot(rng, 4 * H, H)
            bias = np.zeros(4 * H)
            bias[H:2 * H] = 1.0
            params[d + ".b"] = bias
        params["proj.W"] = _glorot(rng, K, 2 * H)
        params["proj.b"] = np.zeros(K)
        params["crf.trans"] = np.zeros((K, K))
        params["crf.start"] = np.zeros(K)
        params["crf.end"] = np.zeros(K)
        source = "random"
        if pretrained is not None:
            if pretrained.dim != config.word_dim:
                raise ConfigError("pretrained vectors have dim %d, model expects %d"
                                  % (pretrained.dim, config.word_dim))
            pv = pretrained.vocab
            for i, w in enumerate(word_vocab.words):
                j = pv.index.get(w)
                if j is not None:
                    params["word_emb"][i] = pretrained.values[j]
            source = "pretrained"
        return cls(config, word_vocab, params, source)

    def _check_shapes(self):
        c = self.config
        D, H, K = c.input_dim, c.hidden_dim, c.num_labels
        expected = {"word_emb": (len(self.word_vocab), c.word_dim),
                    "proj.W": (K, 2 * H), "proj.b": (K,), "crf.trans": (K, K),
                    "crf.start": (K,), "crf.end": (K,)}
        for d in ("fw", "bw"):
            expected.update({d + ".W": (4 * H, D), d + ".U": (4 * H, H), d + ".b": (4 * H,)})
        if c.augment and c.merge_tag_streams:
            expected["tag_emb"] = (len(self.tag_vocab), c.clamp_dim)
        elif c.augment:
            expected["clamp_emb"] = (len(self.clamp_vocab), c.clamp_dim)
            expected["ctakes_emb"] = (len(self.ctakes_vocab), c.ctakes_dim)
        if set(expected) != set(self.params):
            raise ConfigError("parameter set %s does not match configuration %s"
                              % (sorted(self.params), sorted(expected)))
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ConfigError("%s has shape %s, expected %s"
                                  % (k, self.params[k].shape, shape))

    # -- encoding

    def encode(self, words: Sequence[str], feats=None, labels=None):
        """Index one segment: ``(word_ids, clamp_ids, ctakes_ids, label_ids)``."""
        from .features import clamp_unit
        n = len(words)
        w = self.word_vocab.encode(words)
        if self.config.augment and feats is not None:
            cl = [self.clamp_vocab[clamp_unit(f.clamp)] for f in feats]
            ct = [self.ctakes_vocab[f.ctakes] for f in feats]
            if self.config.merge_tag_streams:
                cl = [a * len(self.ctakes_vocab) + b for a, b in zip(cl, ct)]
                ct = [0] * n
        else:
            cl, ct = [0] * n, [0] * n
        return (w, cl, ct, labels)

    # -- forward / backward

    @property
    def crf_params(self) -> crflib.CrfParams:
        p = crflib.CrfParams(self.params["crf.trans"], self.params["crf.start"],
                             self.params["crf.end"])
        if self._masks is not None:
            p = p.masked(*self._masks)
        return p

    def _lstm(self, d):
        return (self.params[d + ".W"], self.params[d + ".U"], self.params[d + ".b"])

    def _inputs(self, batch: Batch):
        p, c = self.params, self.config
        parts = [p["word_emb"][batch.words]]
        if c.augment:
            if c.merge_tag_streams:
                parts.append(p["tag_emb"][batch.clamp])
            else:
                parts.append(p["clamp_emb"][batch.clamp])
                parts.append(p["ctakes_emb"][batch.ctakes])
        return np.concatenate(parts, axis=2)

    def forward(self, batch: Batch):
        """Emission scores (B, T, K) and the cache for :meth:`backward`."""
        X = self._inputs(batch)
        hidden, cache = bilstm_forward_batch(X, batch.lengths, self._lstm("fw"), self._lstm("bw"))
        scores = emissions(hidden, self.params["proj.W"], self.params["proj.b"])
        cache.update(batch=batch, hidden=hidden, shape=scores.shape)
        return scores, cache

    def backward(self, cache, d_scores, fault=None) -> dict:
        """Gradients of all parameters given d(loss)/d(emissions).

        ``fault`` names a gate whose gradient is deliberately negated; it only
        exists to show that the gradient checker catches such bugs.
        """
        if cache is None or cache.get("shape") != d_scores.shape:
            raise MedseqError("backward called with a cache from a different forward pass")
        batch = cache["batch"]
        mask = batch.mask[:, :, None]
        d_scores = d_scores * mask
        p, c = self.params, self.config
        grads = {}
        hidden = cache["hidden"]
        grads["proj.W"] = np.einsum("btk,bth->kh", d_scores, hidden)
        grads["proj.b"] = d_scores.sum(axis=(0, 1))
        d_hidden = d_scores @ p["proj.W"]
        dX, gf, gb = bilstm_backward_batch(cache, d_hidden, self._lstm("fw"),
                                           self._lstm("bw"), fault)
        for d, g in (("fw", gf), ("bw", gb)):
            grads[d + ".W"], grads[d + ".U"], grads[d + ".b"] = g
        dX = dX * mask
        wd = c.word_dim
        grads["word_emb"] = np.zeros_like(p["word_emb"])
        np.add.at(grads["word_emb"], batch.words, dX[:, :, :wd])
        if c.augment:
            if c.merge_tag_streams:
                grads["tag_emb"] = np.zeros_like(p["tag_emb"])
                np.add.at(grads["tag_emb"], batch.clamp, dX[:, :, wd:])
            else:
                grads["clamp_emb"] = np.zeros_like(p["clamp_emb"])
                grads["ctakes_emb"] = np.zeros_like(p["ctakes_emb"])
                np.add.at(grads["clamp_emb"], batch.clamp, dX[:, :, wd:wd + c.clamp_dim])
                np.add.at(grads["ctakes_emb"], batch.ctakes, dX[:, :, wd + c.clamp_dim:])
        return grads

    def loss(self, batch: Batch) -> float:
        scores, _ = self.forward(batch)
        crf = self.crf_params
        return float(np.mean([crflib.nll(scores[k, :n], crf, batch.labels[k, :n])
                              for k, n in enumerate(batch.lengths)]))

    def loss_and_grads(self, batch: Batch, fault=None):
        """Batch-mean CRF negative log-likelihood and its gradients."""
        scores, cache = self.forward(batch)
        crf = self.crf_params
        B = batch.size
        d_scores = np.zeros_like(scores)
        K = self.config.num_labels
        d_trans, d_start, d_end = np.zeros((K, K)), np.zeros(K), np.zeros(K)
        total = 0.0
        for k, n in enumerate(batch.lengths):
            g = crflib.nll_gradients(scores[k, :n], crf, batch.labels[k, :n])
            total += g.nll
            d_scores[k, :n] = g.emissions / B
            d_trans += g.transitions / B
            d_start += g.start / B
            d_end += g.end / B
        grads = self.backward(cache, d_scores, fault)
        grads["crf.trans"], grads["crf.start"], grads["crf.end"] = d_trans, d_start, d_end
        return total / B, grads

    def decode(self, batch: Batch) -> list[tuple]:
        scores, _ = self.forward(batch)
        crf = self.crf_params
        return [crflib.viterbi(scores[k, :n], crf).labels if n else ()
                for k, n in enumerate(batch.lengths)]

    def copy(self) -> "BiLstmCrf":
        return BiLstmCrf(self.config, self.word_vocab,
                         {k: v.copy() for k, v in self.params.items()}, self.word_source)


# ---------------------------------------------------------------- gradient check

def relative_error(ga, gn):
    return np.abs(ga - gn) / np.maximum(1e-12, np.abs(ga) + np.abs(gn))


def _lse(a, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return out.reshape(()) if axis is None else np.squeeze(out, axis=axis)


def reference_loss(params: dict, batch: Batch, config: ModelConfig, masks=None):
    """Batch-mean CRF nll computed one token at a time.

    Shares no code with the batched path beyond :func:`lstm_cell` and
    :func:`token_representation`, and keeps the dtype of ``params`` (the
    gradient checker passes extended precision).
    """
    H = config.hidden_dim
    trans, start, end = params["crf.trans"], params["crf.start"], params["crf.end"]
    if masks is not None:
        trans = trans + masks[0]
        start = start + masks[1]
    total = 0
    for k, n in enumerate(batch.lengths):
        xs = [token_representation(batch.words[k, t], batch.clamp[k, t], batch.ctakes[k, t],
                                   params, config) for t in range(n)]
        chains = []
        for d, seq in (("fw", xs), ("bw", xs[::-1])):
            h = np.zeros(H, dtype=xs[0].dtype)
            c = np.zeros(H, dtype=xs[0].dtype)
            out = []
            for x in seq:
                h, c = lstm_cell(x, h, c, params[d + ".W"], params[d + ".U"], params[d + ".b"])
                out.append(h)
            chains.append(out if d == "fw" else out[::-1])
        scores = [params["proj.W"] @ np.concatenate([hf, hb]) + params["proj.b"]
                  for hf, hb in zip(*chains)]
        alpha = start + scores[0]
        for t in range(1, n):
            alpha = _lse(alpha[:, None] + trans, axis=0) + scores[t]
        y = batch.labels[k, :n]
        gold = start[y[0]] + end[y[-1]] + sum(scores[t][y[t]] for t in range(n))
        gold = gold + sum(trans[y[t - 1], y[t]] for t in range(1, n))
        total = total + _lse(alpha + end) - gold
    return total / batch.size


def gradient_check(model: BiLstmCrf, batch: Batch, eps: float = 1e-5,
                   max_coords: int | None = 40, seed: int = 0, fault=None) -> dict:
    """Compare analytic gradients with central differences.

    The differences are taken on :func:`reference_loss` in extended
    precision, so rounding in the difference quotient stays far below the
    tolerances used for float64 gradients even at ``eps = 1e-5``.
    Returns ``{tensor name: max relative error, ..., "overall": max}``.
    Embedding tables are probed only on rows the batch looks up.
    """
    if batch.size == 0 or int(np.min(batch.lengths)) == 0:
        raise GradientCheckNotApplicable("gradient check needs a non-empty segment")
    if not 1e-6 <= eps <= 1e-4:
        raise ValueError("eps must lie in [1e-6, 1e-4]")
    rng = np.random.default_rng(seed)
    _, grads = model.loss_and_grads(batch, fault=fault)
    wide = {k: v.astype(np.longdouble) for k, v in model.params.items()}
    masks = None
    if model._masks is not None:
        masks = tuple(m.astype(np.longdouble) for m in model._masks)
    step = np.longdouble(eps)
    used_rows = {"word_emb": np.unique(batch.words[batch.mask]),
                 "clamp_emb": np.unique(batch.clamp[batch.mask]),
                 "tag_emb": np.unique(batch.clamp[batch.mask]),
                 "ctakes_emb": np.unique(batch.ctakes[batch.mask])}
    report = {}
    for name, value in wide.items():
        if name in used_rows:
            coords = [(r, j) for r in used_rows[name] for j in range(value.shape[1])]
        else:
            coords = list(np.ndindex(value.shape))
        if max_coords is not None and len(coords) > max_coords:
            pick = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(pick)]
        worst = 0.0
        for idx in coords:
            idx = tuple(int(i) for i in idx)
            old = value[idx]
            value[idx] = old + step
            up = reference_loss(wide, batch, model.config, masks)
            value[idx] = old - step
            down = reference_loss(wide, batch, model.config, masks)
            value[idx] = old
            numeric = float((up - down) / (2 * step))
            worst = max(worst, float(relative_error(grads[name][idx], numeric)))
        report[name] = worst
    report["overall"] = max(report.values())
    return report


# ---------------------------------------------------------------- checkpoints

MAGIC = "medseq-checkpoint 1"


def save_checkpoint(model: BiLstmCrf, path) -> None:
    """Plain-text manifest, then every tensor as little-endian float64, row-major."""
    lines = [MAGIC]
    for f in fields(ModelConfig):
        lines.append("config.%s = %s" % (f.name, json.dumps(getattr(model.config, f.name))))
    lines.append("word_source = %s" % json.dumps(model.word_source))
    lines.append("vocab.size = %d" % len(model.word_vocab))
    lines.append("vocab.words = %s" % json.dumps(model.word_vocab.words, ensure_ascii=False))
    lines.append("vocab.counts = %s" % json.dumps(
        [model.word_vocab.counts.get(w, 0) for w in model.word_vocab.words]))
    names = sorted(model.params)
    for name in names:
        shape = "x".join(str(s) for s in model.params[name].shape)
        lines.append("tensor %s = %s" % (name, shape))
    lines.append("end")
    with open(path, "wb") as f:
        f.write(("\n".join(lines) + "\n").encode("utf-8"))
        for name in names:
            f.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> BiLstmCrf:
    with open(path, "rb") as f:
        data = f.read()
    marker = b"\nend\n"
    cut = data.find(marker)
    if not data.startswith(MAGIC.encode()) or cut < 0:
        raise ParseError("not a medseq checkpoint: %s" % path)
    manifest = data[:cut].decode("utf-8").split("\n")[1:]
    blob = memoryview(data)[cut + len(marker):]
    cfg, meta, tensors = {}, {}, []
    for lineno, line in enumerate(manifest, 2):
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ParseError("malformed manifest line %r" % line, lineno)
        if key.startswith("config."):
            cfg[key[len("config."):]] = json.loads(value)
        elif key.startswith("tensor "):
            tensors.append((key[len("tensor "):], tuple(int(s) for s in value.split("x") if s)))
        else:
            meta[key] = json.loads(value)
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in cfg.items() if k in known})
    words = meta["vocab.words"]
    vocab = Vocabulary(words[2:], dict(zip(words, meta.get("vocab.counts", []))))
    params, offset = {}, 0
    for name, shape in tensors:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset * 8)
        params[name] = arr.astype(np.float64).reshape(shape)
        offset += n
    if offset * 8 != len(blob):
        raise ParseError("checkpoint payload has %d bytes, manifest declares %d"
                         % (len(blob), offset * 8))
    return BiLstmCrf(config, vocab, params, meta.get("word_source", "random"))


def config_dict(config: ModelConfig) -> dict:
    return asdict(config)
