"""Command-line entry point: ``medseq {gen,pretrain,train,predict,evaluate,gradcheck}``.

Options may also come from a ``--config`` file of ``key = value`` lines (``#``
starts a comment); keys are option names with dashes or underscores.
Precedence is command-line flag, then config file, then built-in default.
``MEDSEQ_SEED`` supplies the default seed.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import corpus
from .embeddings import SkipGramConfig, load_embeddings, save_embeddings, train_skipgram
from .errors import (BoundsError, ConfigError, DivergenceError, MedseqError, ParseError,
                     UnknownLabelError)
from .evaluation import MatchMode, document_confusion, evaluate_documents, render_report
from .features import read_token_features, write_token_features
from .network import ModelConfig, load_checkpoint, save_checkpoint
from .synthetic import DEFAULT_RATES, SyntheticConfig, generate_synthetic
from .training import TrainConfig, predict_documents, train

logger = logging.getLogger("medseq")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class PathError(MedseqError):
    pass


def _default_seed():
    env = os.environ.get("MEDSEQ_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError("MEDSEQ_SEED must be an integer, got %r" % env) from None


# name -> (type, default); argparse defaults stay None so we can tell what was given
OPTIONS = {
    "gen": {"out": (str, None), "docs": (int, 10), "seed": (int, None),
            "rate_scale": (float, 1.0), "tag_correlation": (float, 1.0),
            "filler_lines": (int, 1), "ambiguous_conditions": (bool, False)},
    "pretrain": {"corpus": (str, None), "out": (str, None), "dim": (int, 100),
                 "window": (int, 5), "negatives": (int, 5), "epochs": (int, 5),
                 "lr": (float, 0.025), "min_count": (int, 5), "subsample": (float, 1e-3),
                 "seed": (int, None)},
    "train": {"train_dir": (str, None), "feature_dir": (str, None), "embeddings": (str, None),
              "random_init": (bool, False), "augment": (bool, False),
              "merge_tag_streams": (bool, False), "checkpoint": (str, None),
              "history": (str, None), "word_dim": (int, 100), "tag_dim": (int, 50),
              "hidden_size": (int, None), "mask_transitions": (bool, False),
              "lr": (float, 0.001), "rho": (float, 0.9), "batch_size": (int, 8),
              "patience": (int, 3), "val_fraction": (float, 0.10), "max_epochs": (int, 100),
              "clip_norm": (float, None), "seed": (int, None), "threads": (int, 1)},
    "predict": {"checkpoint": (str, None), "input_dir": (str, None),
                "feature_dir": (str, None), "out_dir": (str, None)},
    "evaluate": {"gold": (str, None), "pred": (str, None), "report": (str, None),
                 "bipartite": (bool, False)},
    "gradcheck": {"seed": (int, None), "instances": (int, 20), "eps": (float, 1e-5)},
}


def build_parser():
    parser = argparse.ArgumentParser(prog="medseq", description=__doc__.split("\n")[0])
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in OPTIONS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", dest="sub_config", help="key = value configuration file")
        for name, (typ, _) in opts.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=name, action="store_const", const=True, default=None)
                p.add_argument("--no-" + name.replace("_", "-"), dest=name,
                               action="store_const", const=False)
            else:
                p.add_argument(flag, dest=name, type=typ, default=None)
    return parser


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError("%s:%d: expected 'key = value'" % (path, lineno))
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(typ, raw, name):
    if typ is bool:
        low = str(raw).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError("%s: expected a boolean, got %r" % (name, raw))
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError("%s: cannot parse %r" % (name, raw)) from None


def resolve(args) -> argparse.Namespace:
    """Merge flags, config file and defaults (in that order of precedence)."""
    opts = OPTIONS[args.command]
    path = args.sub_config or args.config
    file_values = read_config_file(path) if path else {}
    unknown = set(file_values) - set(opts)
    if unknown:
        raise ConfigError("unknown configuration keys for %s: %s"
                          % (args.command, ", ".join(sorted(unknown))))
    out = {}
    for name, (typ, default) in opts.items():
        value = getattr(args, name)
        if value is None and name in file_values:
            value = _coerce(typ, file_values[name], name)
        if value is None:
            value = _default_seed() if name == "seed" else default
        out[name] = value
    return argparse.Namespace(command=args.command, **out)


def _require_dir(path, what):
    if not path:
        raise ConfigError("missing --%s" % what)
    if not os.path.isdir(path):
        raise PathError("%s directory not found: %s" % (what, path))


def _require_file(path, what):
    if not path:
        raise ConfigError("missing --%s" % what)
    if not os.path.isfile(path):
        raise PathError("%s file not found: %s" % (what, path))


# ---------------------------------------------------------------- commands

def cmd_gen(cfg) -> int:
    if not cfg.out:
        raise ConfigError("missing --out")
    os.makedirs(cfg.out, exist_ok=True)
    rates = {c: r * cfg.rate_scale for c, r in DEFAULT_RATES.items()}
    syn = SyntheticConfig(seed=cfg.seed, n_docs=cfg.docs, rates=rates,
                          tag_correlation=cfg.tag_correlation, filler_lines=cfg.filler_lines,
                          ambiguous_conditions=cfg.ambiguous_conditions)
    docs, feats = generate_synthetic(syn)
    if not docs:
        logger.warning("no documents requested; writing the manifest only")
    for d in docs:
        corpus.write_document(d, cfg.out)
        write_token_features(os.path.join(cfg.out, d.id + ".feat"), feats[d.id])
    manifest = {"seed": cfg.seed, "docs": cfg.docs, "rate_scale": cfg.rate_scale,
                "tag_correlation": cfg.tag_correlation, "filler_lines": cfg.filler_lines,
                "ambiguous_conditions": cfg.ambiguous_conditions,
                "rates": {str(c): r for c, r in rates.items()},
                "documents": [d.id for d in docs]}
    corpus.write_text_file(os.path.join(cfg.out, "manifest.json"),
                           json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print("wrote %d documents to %s" % (len(docs), cfg.out))
    return EXIT_OK


def cmd_pretrain(cfg) -> int:
    _require_dir(cfg.corpus, "corpus")
    if not cfg.out:
        raise ConfigError("missing --out")
    streams = []
    for doc_id in corpus.list_doc_ids(cfg.corpus):
        text = corpus.read_text_file(os.path.join(cfg.corpus, doc_id + ".txt"))
        for line in text.split("\n"):
            toks = [t.surface for t in corpus.tokenize(line)]
            if toks:
                streams.append(toks)
    if not streams:
        raise ParseError("no text found in %s" % cfg.corpus)
    sg = SkipGramConfig(dim=cfg.dim, window=cfg.window, negatives=cfg.negatives,
                        epochs=cfg.epochs, lr=cfg.lr, min_count=cfg.min_count,
                        subsample=cfg.subsample, seed=cfg.seed)
    emb = train_skipgram(streams, sg)
    save_embeddings(emb, emb.vocab, cfg.out)
    print("wrote %d x %d embeddings to %s" % (emb.rows, emb.dim, cfg.out))
    return EXIT_OK


def _load_features(feature_dir, doc_ids):
    missing = [d for d in doc_ids if not os.path.isfile(os.path.join(feature_dir, d + ".feat"))]
    if missing:
        raise ConfigError("feature sidecars missing for: %s" % ", ".join(missing))
    return {d: read_token_features(os.path.join(feature_dir, d + ".feat")) for d in doc_ids}


def cmd_train(cfg) -> int:
    _require_dir(cfg.train_dir, "train-dir")
    if not cfg.checkpoint:
        raise ConfigError("missing --checkpoint")
    if cfg.embeddings and cfg.random_init:
        raise ConfigError("--embeddings and --random-init are mutually exclusive")
    if cfg.augment and not cfg.feature_dir:
        raise ConfigError("--augment needs --feature-dir")
    pretrained = None
    if cfg.embeddings:
        _require_file(cfg.embeddings, "embeddings")
        _, pretrained = load_embeddings(cfg.embeddings)
    docs = corpus.read_corpus(cfg.train_dir)
    if not docs:
        raise ParseError("no documents in %s" % cfg.train_dir)
    features = None
    if cfg.augment:
        _require_dir(cfg.feature_dir, "feature-dir")
        features = _load_features(cfg.feature_dir, [d.id for d in docs])
    word_dim = pretrained.dim if pretrained is not None else cfg.word_dim
    mc = ModelConfig(word_dim=word_dim, clamp_dim=cfg.tag_dim, ctakes_dim=cfg.tag_dim,
                     augment=cfg.augment, merge_tag_streams=cfg.merge_tag_streams,
                     hidden_size=cfg.hidden_size, mask_transitions=cfg.mask_transitions,
                     seed=cfg.seed)
    tc = TrainConfig(lr=cfg.lr, rho=cfg.rho, batch_size=cfg.batch_size, patience=cfg.patience,
                     val_fraction=cfg.val_fraction, max_epochs=cfg.max_epochs, seed=cfg.seed,
                     clip_norm=cfg.clip_norm, threads=cfg.threads)
    model, history = train(docs, features, mc, tc, pretrained=pretrained)
    save_checkpoint(model, cfg.checkpoint)
    history_path = cfg.history or os.path.splitext(cfg.checkpoint)[0] + ".history.json"
    corpus.write_text_file(history_path, history.to_json() + "\n")
    best = history.epochs[history.best_epoch - 1]
    print("best epoch %d of %d, validation lenient micro F1 %.2f"
          % (history.best_epoch, len(history.epochs), best.val_f1_lenient_micro))
    return EXIT_OK


def cmd_predict(cfg) -> int:
    _require_file(cfg.checkpoint, "checkpoint")
    _require_dir(cfg.input_dir, "input-dir")
    if not cfg.out_dir:
        raise ConfigError("missing --out-dir")
    model = load_checkpoint(cfg.checkpoint)
    ids = corpus.list_doc_ids(cfg.input_dir)
    docs = [corpus.Document(i, corpus.read_text_file(os.path.join(cfg.input_dir, i + ".txt")))
            for i in ids]
    features = None
    if model.config.augment:
        if not cfg.feature_dir:
            raise ConfigError("checkpoint uses feature augmentation; pass --feature-dir")
        _require_dir(cfg.feature_dir, "feature-dir")
        features = _load_features(cfg.feature_dir, ids)
    os.makedirs(cfg.out_dir, exist_ok=True)
    for d in predict_documents(model, docs, features):
        corpus.write_text_file(os.path.join(cfg.out_dir, d.id + ".ann"), corpus.write_standoff(d))
    print("wrote %d annotation files to %s" % (len(docs), cfg.out_dir))
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    _require_dir(cfg.gold, "gold")
    _require_dir(cfg.pred, "pred")
    gold_ids = corpus.list_doc_ids(cfg.gold, ".ann")
    pred_ids = corpus.list_doc_ids(cfg.pred, ".ann")
    only = sorted(set(gold_ids) ^ set(pred_ids))
    if only:
        raise ParseError("documents present in only one directory: %s" % ", ".join(only))
    gold, pred = [], []
    for i in gold_ids:
        text = corpus.read_text_file(os.path.join(cfg.gold, i + ".txt"))
        gold.append(corpus.read_standoff(
            text, corpus.read_text_file(os.path.join(cfg.gold, i + ".ann")), i))
        pred.append(corpus.read_standoff(
            text, corpus.read_text_file(os.path.join(cfg.pred, i + ".ann")), i))
    confusion = document_confusion(gold, pred)
    result = {}
    for mode in (MatchMode.STRICT, MatchMode.LENIENT):
        report = evaluate_documents(gold, pred, mode, bipartite=cfg.bipartite)
        text, obj = render_report(report, confusion if mode == MatchMode.LENIENT else None)
        print(text)
        result[str(mode)] = obj
        if mode == MatchMode.LENIENT:
            headline = report.micro.f1
    if cfg.report:
        corpus.write_text_file(cfg.report, json.dumps(result, indent=1) + "\n")
    print("lenient micro F1: %.2f" % headline)
    return EXIT_OK


def cmd_gradcheck(cfg) -> int:
    from .crf import CrfParams, brute_force_best, brute_force_log_partition, log_partition, viterbi
    from .embeddings import Vocabulary
    from .network import BiLstmCrf, gradient_check, make_batch

    rng = np.random.default_rng(cfg.seed)
    worst_z = worst_v = 0.0
    for _ in range(200):
        L, K = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        e = rng.uniform(-1, 1, (L, K))
        crf = CrfParams(rng.uniform(-1, 1, (K, K)), rng.uniform(-1, 1, K), rng.uniform(-1, 1, K))
        worst_z = max(worst_z, abs(log_partition(e, crf) - brute_force_log_partition(e, crf)))
        worst_v = max(worst_v, abs(viterbi(e, crf).score - brute_force_best(e, crf).score))
    print("crf log-partition vs enumeration: max abs error %.3e" % worst_z)
    print("viterbi vs enumeration: max abs score error %.3e" % worst_v)
    vocab = Vocabulary(["w%d" % i for i in range(10)])
    worst = 0.0
    for k in range(cfg.instances):
        model = BiLstmCrf.initialize(ModelConfig(word_dim=6, clamp_dim=3, ctakes_dim=3,
                                                 augment=True, seed=cfg.seed + k), vocab)
        L = int(rng.integers(1, 5))
        batch = make_batch([(rng.integers(0, len(vocab), L), rng.integers(0, 19, L),
                             rng.integers(0, 6, L), rng.integers(0, 19, L))])
        worst = max(worst, gradient_check(model, batch, cfg.eps, seed=cfg.seed + k)["overall"])
    print("bilstm-crf analytic vs central differences: max relative error %.3e" % worst)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "pretrain": cmd_pretrain, "train": cmd_train,
            "predict": cmd_predict, "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    except DivergenceError as exc:
        print("error: training diverged: %s" % exc, file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (PathError, ParseError, BoundsError, UnknownLabelError, MedseqError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
