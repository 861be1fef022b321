import io

import pytest

from seqtag.cli import read_tokens, run
from seqtag.corpus import PEYMA, Corpus, TaggedSentence, parse_conll, to_conll
from seqtag.evaluator import render_report
from seqtag.synthetic import filler_sentence, make_corpus
from seqtag.trainer import evaluate_model, load


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def fixture_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "fixture.conll"
    path.write_text(to_conll(make_corpus(40, seed=31)), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def model_file(fixture_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "model.ckpt"
    code, _, err = call("train", "--train", fixture_file, "--dev", fixture_file, "--out", out,
                        "--epochs", 40, "--patience", 40)
    assert code == 0, err
    return out


def test_no_command_is_usage_error():
    assert call()[0] == 1


def test_unknown_flag_is_usage_error(fixture_file):
    code, _, err = call("stats", "--in", fixture_file, "--bogus")
    assert code == 1 and "bogus" in err


def test_missing_input_is_data_error(tmp_path):
    missing = tmp_path / "nope.conll"
    code, _, err = call("train", "--train", missing, "--out", tmp_path / "m.ckpt")
    assert code == 2 and str(missing) in err


def test_malformed_input_reports_line(tmp_path):
    bad = tmp_path / "bad.conll"
    bad.write_text("a\tO\nb\tB-NOPE\n")
    code, _, err = call("stats", "--in", bad)
    assert code == 2 and "2" in err and str(bad) in err


def test_self_evaluation(fixture_file):
    code, out, _ = call("eval", "--gold", fixture_file, "--pred", fixture_file, "--tagset", "peyma")
    assert code == 0
    word_row, phrase_row = out.splitlines()[2:4]
    cells = [c.strip() for c in word_row.split("|")[1:] + phrase_row.split("|")[1:] if c.strip()]
    assert set(cells) == {"100.00"}


def test_split_five_folds(tmp_path):
    src = tmp_path / "big.conll"
    src.write_text(to_conll(Corpus(PEYMA, tuple(TaggedSentence(("w",), (0,)) for _ in range(7145)))))
    code, out, _ = call("split", "--k", 5, "--seed", 0, "--in", src, "--out-dir", tmp_path / "folds")
    assert code == 0
    sizes = [len(parse_conll((tmp_path / "folds" / f"fold_{i}.conll").read_text(), PEYMA)) for i in range(5)]
    assert sizes == [1429] * 5


def test_split_honours_env_seed(tmp_path, fixture_file, monkeypatch):
    monkeypatch.setenv("SEQTAG_SEED", "7")
    call("split", "--k", 2, "--in", fixture_file, "--out-dir", tmp_path / "a")
    call("split", "--k", 2, "--seed", 7, "--in", fixture_file, "--out-dir", tmp_path / "b")
    assert (tmp_path / "a" / "fold_0.conll").read_bytes() == (tmp_path / "b" / "fold_0.conll").read_bytes()


def test_stats(fixture_file, tmp_path):
    code, out, _ = call("stats", "--in", fixture_file, "--table", tmp_path / "t.tsv")
    assert code == 0 and "sentences\t40" in out
    assert (tmp_path / "t.tsv").read_text().startswith("class\tphrase_count\ttoken_count\n")


def test_bpe_train_and_reuse(fixture_file, tmp_path):
    v, m = tmp_path / "vocab.txt", tmp_path / "merges.txt"
    code, out, _ = call("bpe-train", "--in", fixture_file, "--vocab-size", 60, "--out-vocab", v, "--out-merges", m)
    assert code == 0 and v.exists() and m.exists()
    code, _, err = call("train", "--train", fixture_file, "--vocab", v, "--merges", m, "--out", tmp_path / "x.ckpt",
                        "--epochs", 1, "--d-model", 16, "--n-heads", 2, "--d-ff", 32, "--n-layers", 1)
    assert code == 0, err
    assert len(load(tmp_path / "x.ckpt").model.merges) <= 60


def test_vocab_without_merges_is_usage_error(fixture_file, tmp_path):
    code, _, _ = call("train", "--train", fixture_file, "--vocab", tmp_path / "v", "--out", tmp_path / "m")
    assert code == 1


def test_flags_override_config_file(fixture_file, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("epochs = 5\nd_model = 16\nn_heads = 2\nd_ff = 32\nn_layers = 1\n")
    code, out, err = call("train", "--train", fixture_file, "--config", cfg, "--epochs", 1, "--out", tmp_path / "m.ckpt")
    assert code == 0, err
    ck = load(tmp_path / "m.ckpt")
    assert ck.model.config.epochs == 1 and ck.model.config.d_model == 16
    assert "epochs_run\t1" in out


def test_bad_config_value_is_data_error(fixture_file, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("nonsense = 1\n")
    assert call("train", "--train", fixture_file, "--config", cfg, "--out", tmp_path / "m")[0] == 2


def test_predict_recovers_fixture(model_file, fixture_file, tmp_path):
    out = tmp_path / "pred.conll"
    code, _, err = call("predict", "--model", model_file, "--in", fixture_file, "--out", out)
    assert code == 0, err
    gold = parse_conll(fixture_file.read_text(), PEYMA)
    pred = parse_conll(out.read_text(), PEYMA)
    assert [s.tokens for s in pred] == [s.tokens for s in gold]
    pairs = [(a, b) for g, p in zip(gold, pred) for a, b in zip(g.tags, p.tags)]
    assert sum(a == b for a, b in pairs) / len(pairs) >= 0.99


def test_predict_then_eval_matches_internal_evaluation(model_file, fixture_file, tmp_path):
    out = tmp_path / "pred.conll"
    call("predict", "--model", model_file, "--in", fixture_file, "--out", out, "--threads", 2)
    code, text, _ = call("eval", "--gold", fixture_file, "--pred", out, "--metrics", tmp_path / "m.tsv")
    assert code == 0
    internal = evaluate_model(load(model_file).model, parse_conll(fixture_file.read_text(), PEYMA), name="pred")
    expected_text, expected_tsv = render_report(internal, "per-tag")
    assert text == expected_text
    assert (tmp_path / "m.tsv").read_text() == expected_tsv
    code, again, _ = call("report", "--metrics", tmp_path / "m.tsv")
    assert code == 0 and again == expected_text


def test_predict_empty_input(model_file, tmp_path):
    src, out = tmp_path / "empty.txt", tmp_path / "out.conll"
    src.write_text("")
    assert call("predict", "--model", model_file, "--in", src, "--out", out)[0] == 0
    assert out.read_text() == ""


def test_predict_filler_words_are_all_o(model_file, tmp_path):
    src, out = tmp_path / "fill.txt", tmp_path / "out.conll"
    src.write_text("".join("\n".join(filler_sentence(n, seed=n)) + "\n\n" for n in range(3, 9)))
    assert call("predict", "--model", model_file, "--in", src, "--out", out)[0] == 0
    tags = [line.split("\t")[1] for line in out.read_text().splitlines() if line]
    assert tags and set(tags) == {"O"}


def test_predict_skips_overlong_sentence(model_file, tmp_path):
    src, out = tmp_path / "long.txt", tmp_path / "out.conll"
    src.write_text("x" * 300 + "\n\n" + "\n".join(filler_sentence(4)) + "\n")
    code, _, err = call("predict", "--model", model_file, "--in", src, "--out", out)
    assert code == 0 and "skipped" in err
    assert read_tokens(out.read_text()) == read_tokens(src.read_text())


def test_predict_rejects_non_checkpoint(tmp_path, fixture_file):
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a model")
    code, _, err = call("predict", "--model", junk, "--in", fixture_file, "--out", tmp_path / "o")
    assert code == 2 and "checkpoint" in err


def test_cv_small(fixture_file, tmp_path):
    code, out, err = call("cv", "--in", fixture_file, "--k", 2, "--epochs", 1, "--d-model", 16, "--n-heads", 2,
                          "--d-ff", 32, "--n-layers", 1, "--style", "per-class", "--metrics", tmp_path / "cv.tsv")
    assert code == 0, err
    assert out.count("fold ") == 2 and "Total F1" in out
    assert "phrase.total.f1\t" in (tmp_path / "cv.tsv").read_text()


def test_eval_token_mismatch_is_data_error(fixture_file, tmp_path):
    lines = fixture_file.read_text().splitlines()
    lines[0] = "zzz\t" + lines[0].split("\t")[1]
    pred = tmp_path / "p.conll"
    pred.write_text("\n".join(lines) + "\n")
    code, _, err = call("eval", "--gold", fixture_file, "--pred", pred)
    assert code == 2 and "line 1" in err
