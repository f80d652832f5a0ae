import json
import os

import pytest

from medseq import cli
from medseq.corpus import Annotation, Document, EntityClass, write_document

E = EntityClass


def run(*args):
    return cli.main([str(a) for a in args])


def listing(path):
    return sorted(os.listdir(path))


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("gen") / "d"
    assert run("gen", "--docs", 10, "--seed", 7, "--out", d, "--rate-scale", 0.1) == 0
    return d


def test_gen_writes_triples_and_manifest(corpus_dir):
    names = listing(corpus_dir)
    assert len(names) == 31 and "manifest.json" in names
    assert sum(n.endswith(".feat") for n in names) == 10
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7


def test_gen_is_byte_identical(tmp_path, corpus_dir):
    assert run("gen", "--docs", 10, "--seed", 7, "--out", tmp_path, "--rate-scale", 0.1) == 0
    for name in listing(corpus_dir):
        assert (tmp_path / name).read_bytes() == (corpus_dir / name).read_bytes()


def test_gen_zero_docs_warns(tmp_path, caplog):
    assert run("gen", "--docs", 0, "--out", tmp_path) == 0
    assert listing(tmp_path) == ["manifest.json"]
    assert "manifest only" in caplog.text


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MEDSEQ_SEED", "13")
    assert run("gen", "--docs", 1, "--out", tmp_path / "a") == 0
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 13
    assert run("gen", "--docs", 1, "--out", tmp_path / "b", "--seed", 2) == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 2


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment record\ndocs = 2\nseed = 5  # inline\nrate-scale = 0.1\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "a") == 0
    m = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert (m["docs"], m["seed"]) == (2, 5)
    assert run("gen", "--config", cfg, "--out", tmp_path / "b", "--docs", 3) == 0
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["docs"] == 3


@pytest.mark.parametrize("content", ["docs 2\n", "unknown_key = 1\n", "docs = many\n"])
def test_bad_config_file(tmp_path, content):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(content)
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 1


def test_usage_error():
    assert run("frobnicate") == 1
    assert run("gen", "--docs", "x") == 1


def test_pretrain_dimensions(tmp_path, corpus_dir):
    assert run("pretrain", "--corpus", corpus_dir, "--out", tmp_path / "e100.txt",
               "--min-count", 1, "--epochs", 1) == 0
    assert (tmp_path / "e100.txt").read_text().split("\n")[0].split()[1] == "100"
    assert run("pretrain", "--corpus", corpus_dir, "--out", tmp_path / "e50.txt", "--dim", 50,
               "--min-count", 1, "--epochs", 1) == 0
    assert (tmp_path / "e50.txt").read_text().split("\n")[0].split()[1] == "50"


def test_pretrain_errors(tmp_path):
    assert run("pretrain", "--corpus", tmp_path / "missing", "--out", tmp_path / "e.txt") == 2
    (tmp_path / "empty").mkdir()
    assert run("pretrain", "--corpus", tmp_path / "empty", "--out", tmp_path / "e.txt") == 2


def test_train_configuration_errors(tmp_path, corpus_dir):
    ck = tmp_path / "m.ckpt"
    assert run("train", "--train-dir", corpus_dir, "--augment", "--checkpoint", ck) == 1
    assert run("train", "--train-dir", corpus_dir, "--random-init", "--embeddings", "e.txt",
               "--checkpoint", ck) == 1
    partial = tmp_path / "feats"
    partial.mkdir()
    assert run("train", "--train-dir", corpus_dir, "--augment", "--feature-dir", partial,
               "--checkpoint", ck) == 1


def test_missing_feature_sidecars_listed(tmp_path, corpus_dir, capsys):
    partial = tmp_path / "feats"
    partial.mkdir()
    (partial / "doc0000.feat").write_bytes((corpus_dir / "doc0000.feat").read_bytes())
    code = run("train", "--train-dir", corpus_dir, "--augment", "--feature-dir", partial,
               "--checkpoint", tmp_path / "m.ckpt")
    assert code == 1
    err = capsys.readouterr().err
    assert "doc0001" in err and "doc0000," not in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code(tmp_path, corpus_dir):
    code = run("train", "--train-dir", corpus_dir, "--random-init", "--word-dim", 4,
               "--checkpoint", tmp_path / "m.ckpt", "--lr", 1e300, "--rho", 0.5,
               "--max-epochs", 2)
    assert code == 3


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, corpus_dir):
    root = tmp_path_factory.mktemp("pipe")
    assert run("pretrain", "--corpus", corpus_dir, "--out", root / "emb.txt", "--dim", 16,
               "--min-count", 1, "--subsample", 0, "--epochs", 2) == 0
    assert run("train", "--train-dir", corpus_dir, "--embeddings", root / "emb.txt",
               "--augment", "--feature-dir", corpus_dir, "--tag-dim", 4,
               "--checkpoint", root / "m.ckpt", "--max-epochs", 3, "--lr", 0.005) == 0
    assert run("predict", "--checkpoint", root / "m.ckpt", "--input-dir", corpus_dir,
               "--feature-dir", corpus_dir, "--out-dir", root / "pred") == 0
    return root


def test_train_writes_checkpoint_and_history(pipeline):
    history = json.loads((pipeline / "m.history.json").read_text())
    assert [r["epoch"] for r in history] == list(range(1, len(history) + 1))
    assert sum(r["is_best"] for r in history) == 1
    assert set(history[0]) == {"epoch", "train_nll", "val_f1_lenient_micro", "is_best"}


def test_predict_one_ann_per_txt(pipeline, corpus_dir):
    txt = [n[:-4] for n in listing(corpus_dir) if n.endswith(".txt")]
    assert [n[:-4] for n in listing(pipeline / "pred")] == txt


def test_evaluate_pipeline_closure(pipeline, corpus_dir, capsys):
    report = pipeline / "report.json"
    assert run("evaluate", "--gold", corpus_dir, "--pred", pipeline / "pred",
               "--report", report) == 0
    obj = json.loads(report.read_text())
    assert set(obj) == {"strict", "lenient"}
    assert len(obj["lenient"]["confusion"]) == 10
    out = capsys.readouterr().out
    assert out.strip().splitlines()[-1] == "lenient micro F1: %.2f" % obj["lenient"]["micro"]["f1"]


def test_predict_errors(tmp_path, corpus_dir, pipeline):
    assert run("predict", "--checkpoint", tmp_path / "none.ckpt", "--input-dir", corpus_dir,
               "--out-dir", tmp_path / "p") == 2
    assert run("predict", "--checkpoint", pipeline / "m.ckpt", "--input-dir", corpus_dir,
               "--out-dir", tmp_path / "p") == 1


def test_predict_empty_document(tmp_path, pipeline):
    src = tmp_path / "in"
    src.mkdir()
    (src / "empty.txt").write_text("")
    (src / "empty.feat").write_text("")
    assert run("predict", "--checkpoint", pipeline / "m.ckpt", "--input-dir", src,
               "--feature-dir", src, "--out-dir", tmp_path / "out") == 0
    assert (tmp_path / "out" / "empty.ann").read_text() == ""


def test_evaluate_self_and_empty(tmp_path, corpus_dir):
    report = tmp_path / "r.json"
    assert run("evaluate", "--gold", corpus_dir, "--pred", corpus_dir, "--report", report) == 0
    obj = json.loads(report.read_text())
    for mode in ("strict", "lenient"):
        assert obj[mode]["micro"]["f1"] == 100.0
    empty = tmp_path / "empty"
    empty.mkdir()
    for n in listing(corpus_dir):
        if n.endswith(".ann"):
            (empty / n).write_text("")
    assert run("evaluate", "--gold", corpus_dir, "--pred", empty, "--report", report) == 0
    micro = json.loads(report.read_text())["lenient"]["micro"]
    assert (micro["p"], micro["r"], micro["f1"]) == (0.0, 0.0, 0.0)


def test_evaluate_hand_fixture(tmp_path, capsys):
    text = "aspirin and pain and rash and fever and nausea"
    gold_anns = (Annotation("T1", E.DRUG, ((0, 7),)), Annotation("T2", E.DRUG, ((12, 16),)),
                 Annotation("T3", E.ADE, ((21, 25),)), Annotation("T4", E.ADE, ((30, 35),)),
                 Annotation("T5", E.ADE, ((40, 46),)))
    pred_anns = (Annotation("T1", E.DRUG, ((0, 5),)), Annotation("T2", E.ADE, ((21, 25),)),
                 Annotation("T3", E.ADE, ((31, 35),)), Annotation("T4", E.ADE, ((40, 44),)),
                 Annotation("T5", E.ADE, ((8, 11),)))
    (tmp_path / "gold").mkdir()
    (tmp_path / "pred").mkdir()
    write_document(Document("x", text, gold_anns), tmp_path / "gold")
    write_document(Document("x", text, pred_anns), tmp_path / "pred")
    assert run("evaluate", "--gold", tmp_path / "gold", "--pred", tmp_path / "pred") == 0
    assert capsys.readouterr().out.strip().splitlines()[-1] == "lenient micro F1: 80.00"


def test_evaluate_id_mismatch(tmp_path, corpus_dir, capsys):
    other = tmp_path / "other"
    other.mkdir()
    (other / "doc0000.ann").write_text("")
    (other / "stray.ann").write_text("")
    assert run("evaluate", "--gold", corpus_dir, "--pred", other) == 2
    err = capsys.readouterr().err
    assert "stray" in err and "doc0001" in err


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--instances", 2) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    err = float(out.strip().splitlines()[-1].split()[-1])
    assert err < 1e-4
