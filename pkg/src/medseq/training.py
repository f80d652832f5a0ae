"""RMSProp training with early stopping, and document-level prediction."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import corpus
from .corpus import LABEL_INDEX, LABELS, Annotation, Document
from .embeddings import EmbeddingMatrix, Vocabulary, build_vocab
from .errors import ConfigError, DivergenceError, MedseqError
from .evaluation import MatchMode, count_document, pool_counts, score
from .features import align_features
from .network import Batch, BiLstmCrf, ModelConfig, make_batch

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.001
    rho: float = 0.9
    eps: float = 1e-8
    batch_size: int = 8
    patience: int = 3
    val_fraction: float = 0.10
    max_epochs: int = 100
    seed: int = 0
    clip_norm: float | None = None
    # >1 splits each batch across a thread pool; results are reduced in a fixed order
    threads: int = 1

    def validate(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("validation fraction must lie in (0, 1)")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if self.lr <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("lr, batch size and max epochs must be positive")


# ---------------------------------------------------------------- optimizer

class RmsPropState(dict):
    """Running mean of squared gradients, one array per parameter tensor."""

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "RmsPropState":
        return cls({k: np.zeros_like(v) for k, v in params.items()})


def clip_global_norm(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def rmsprop_step(params: dict, grads: dict, state: RmsPropState, config: TrainConfig):
    """In-place update ``p -= lr * g / (sqrt(cache) + eps)`` after refreshing the cache."""
    if set(grads) != set(params):
        raise ValueError("gradient tensors %s do not match parameters %s"
                         % (sorted(grads), sorted(params)))
    if config.clip_norm is not None:
        grads = dict(grads)
        clip_global_norm(grads, config.clip_norm)
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state[k].shape != p.shape:
            raise ValueError("shape mismatch for %s: param %s, grad %s, cache %s"
                             % (k, p.shape, g.shape, state[k].shape))
        cache = state[k]
        cache *= config.rho
        cache += (1.0 - config.rho) * g * g
        p -= config.lr * g / (np.sqrt(cache) + config.eps)
    return params, state


# ---------------------------------------------------------------- data

def split_train_val(documents: Sequence, fraction: float = 0.10, seed: int = 0):
    """Document-level split; the validation part holds ``max(1, round(fraction * N))`` documents."""
    n = len(documents)
    if n < 2:
        raise MedseqError("need at least 2 documents to split, got %d" % n)
    n_val = min(n - 1, max(1, int(np.floor(fraction * n + 0.5))))
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = [d for i, d in enumerate(documents) if i not in val_idx]
    val = [d for i, d in enumerate(documents) if i in val_idx]
    return train, val


def document_segments(doc: Document, rows=None, with_labels=True):
    """Segments of ``doc`` with aligned features (``None`` when no sidecar)."""
    segs = corpus.segment(doc, with_labels=with_labels)
    feats = [align_features(s.tokens, rows) if rows is not None else None for s in segs]
    return segs, feats


def encode_documents(model: BiLstmCrf, documents, features=None, with_labels=True):
    """Encoded examples and their segments for every segment of every document."""
    examples, segments = [], []
    use_feats = model.config.augment and features is not None
    for doc in documents:
        rows = features.get(doc.id, []) if use_feats else None
        segs, feats = document_segments(doc, rows, with_labels)
        for s, f in zip(segs, feats):
            labels = [LABEL_INDEX[lab] for lab in s.labels] if with_labels else None
            examples.append(model.encode([t.surface for t in s.tokens], f, labels))
            segments.append(s)
    return examples, segments


def training_vocab(documents, pretrained: EmbeddingMatrix | None = None) -> Vocabulary:
    streams = [[t.surface for t in corpus.tokenize(d.text)] for d in documents]
    vocab = build_vocab(streams, min_count=1)
    if pretrained is not None:
        return pretrained.vocab.extend(vocab.words[2:])
    return vocab


# ---------------------------------------------------------------- history

@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_f1_lenient_micro: float
    is_best: bool = False


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = 0

    def to_json(self) -> str:
        return json.dumps([{"epoch": r.epoch, "train_nll": r.train_nll,
                            "val_f1_lenient_micro": r.val_f1_lenient_micro,
                            "is_best": r.epoch == self.best_epoch} for r in self.epochs],
                          indent=1)


class EarlyStopping:
    """Stop once the metric has not improved for ``patience`` consecutive epochs."""

    def __init__(self, patience: int = 3):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.epoch = 0

    def update(self, metric: float) -> bool:
        """Record one epoch; returns True when training should stop."""
        self.epoch += 1
        if metric > self.best:
            self.best = metric
            self.best_epoch = self.epoch
        return self.epoch - self.best_epoch >= self.patience

    @property
    def improved(self) -> bool:
        return self.best_epoch == self.epoch


# ---------------------------------------------------------------- training

def train(documents: Sequence[Document], features: Mapping | None = None,
          model_config: ModelConfig | None = None, train_config: TrainConfig | None = None,
          pretrained: EmbeddingMatrix | None = None, validation: Sequence[Document] | None = None,
          metric_fn: Callable[[BiLstmCrf, int], float] | None = None):
    """Fit a tagger and return ``(best model, history)``.

    Without ``validation`` a document-level split of ``train_config.val_fraction``
    is held out. The model kept is the one with the best validation lenient
    micro F1. ``metric_fn(model, epoch)`` replaces that metric when given.
    """
    model_config = model_config or ModelConfig()
    train_config = train_config or TrainConfig()
    train_config.validate()
    if not documents:
        raise MedseqError("training corpus is empty")
    if validation is None:
        train_docs, val_docs = split_train_val(documents, train_config.val_fraction,
                                               train_config.seed)
    else:
        train_docs, val_docs = list(documents), list(validation)
    if model_config.augment and features is None:
        raise ConfigError("feature augmentation requires feature sidecars")

    vocab = training_vocab(train_docs, pretrained)
    model = BiLstmCrf.initialize(model_config, vocab, pretrained)
    examples, _ = encode_documents(model, train_docs, features)
    examples = [e for e in examples if len(e[0])]
    if not examples:
        raise MedseqError("training corpus has no tokens")

    if metric_fn is None:
        def metric_fn(m, epoch):
            return validation_f1(m, val_docs, features)

    pool = ThreadPoolExecutor(train_config.threads) if train_config.threads > 1 else None
    try:
        return _fit(model, examples, metric_fn, train_config, pool)
    finally:
        if pool is not None:
            pool.shutdown()


def batch_loss_and_grads(model: BiLstmCrf, batch, pool=None, threads: int = 1):
    """Batch-mean loss and gradients, optionally split over ``threads`` workers."""
    if pool is None or threads < 2 or batch.size < 2:
        return model.loss_and_grads(batch)
    n = min(threads, batch.size)
    parts = np.array_split(np.arange(batch.size), n)
    subs = [Batch(batch.words[p], batch.clamp[p], batch.ctakes[p], batch.lengths[p],
                  batch.labels[p]) for p in parts]
    results = list(pool.map(model.loss_and_grads, subs))
    loss = sum(r[0] * len(p) for r, p in zip(results, parts)) / batch.size
    grads = {k: sum(r[1][k] * len(p) for r, p in zip(results, parts)) / batch.size
             for k in results[0][1]}
    return loss, grads


def _fit(model, examples, metric_fn, train_config, pool):
    rng = np.random.default_rng(train_config.seed)
    state = RmsPropState.zeros_like(model.params)
    stopper = EarlyStopping(train_config.patience)
    history = TrainHistory()
    best = model.copy()
    bs = train_config.batch_size
    for epoch in range(1, train_config.max_epochs + 1):
        order = rng.permutation(len(examples))
        losses = []
        for b, start in enumerate(range(0, len(order), bs), 1):
            batch = make_batch([examples[i] for i in order[start:start + bs]])
            loss, grads = batch_loss_and_grads(model, batch, pool, train_config.threads)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergenceError(epoch, b, loss)
            rmsprop_step(model.params, grads, state, train_config)
            losses.append(loss)
        metric = float(metric_fn(model, epoch))
        stop = stopper.update(metric)
        record = EpochRecord(epoch, float(np.mean(losses)), metric)
        history.epochs.append(record)
        if stopper.improved:
            best = model.copy()
            history.best_epoch = epoch
        for r in history.epochs:
            r.is_best = r.epoch == history.best_epoch
        logger.info("epoch %d: train nll %.4f, validation F1 %.2f%s", epoch, record.train_nll,
                    metric, " *" if stopper.improved else "")
        if stop:
            break
    return best, history


# ---------------------------------------------------------------- prediction

def predict_segments(model: BiLstmCrf, examples, batch_size: int = 32):
    """Viterbi label paths (as IOBLabel tuples) for encoded examples."""
    out = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        nonempty = [e for e in chunk if len(e[0])]
        paths = iter(model.decode(make_batch(nonempty))) if nonempty else iter(())
        for e in chunk:
            out.append(tuple(LABELS[i] for i in next(paths)) if len(e[0]) else ())
    return out


def predict_documents(model: BiLstmCrf, documents: Sequence[Document],
                      features: Mapping | None = None) -> list[Document]:
    """Documents carrying predicted annotations (ids T1..Tn in text order)."""
    bare = [Document(d.id, d.text) for d in documents]
    examples, segments = encode_documents(model, bare, features, with_labels=False)
    paths = predict_segments(model, examples)
    found: dict = {d.id: [] for d in documents}
    for seg, path in zip(segments, paths):
        found[seg.doc_id].extend(corpus.iob_to_spans(seg.tokens, path))
    out = []
    for d in documents:
        anns = sorted(found[d.id], key=lambda a: (a.start, a.end))
        anns = [Annotation("T%d" % (i + 1), a.cls, a.fragments,
                           corpus.surface_of(d.text, a.fragments)) for i, a in enumerate(anns)]
        out.append(Document(d.id, d.text, tuple(anns)))
    return out


def predict_document(model: BiLstmCrf, text: str, feature_rows=None, doc_id: str = "") -> list[Annotation]:
    """Tokenize, segment, tag and merge one document into annotations."""
    features = {doc_id: list(feature_rows or [])}
    return list(predict_documents(model, [Document(doc_id, text)], features)[0].annotations)


def validation_f1(model: BiLstmCrf, documents: Sequence[Document], features=None,
                  mode=MatchMode.LENIENT) -> float:
    """Micro F1 (percent) of the model's predictions on ``documents``."""
    preds = {d.id: d for d in predict_documents(model, documents, features)}
    per_doc = [count_document(d.annotations, preds[d.id].annotations, mode) for d in documents]
    return score(pool_counts(per_doc).values(), mode).micro.f1


def token_accuracy(model: BiLstmCrf, documents: Sequence[Document], features=None) -> float:
    examples, segments = encode_documents(model, documents, features)
    paths = predict_segments(model, examples)
    total = correct = 0
    for seg, path in zip(segments, paths):
        total += len(path)
        correct += sum(a == b for a, b in zip(seg.labels, path))
    return correct / total if total else 1.0
