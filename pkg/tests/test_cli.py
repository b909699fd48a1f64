"""End-to-end CLI behavior: exit codes, artifacts, reproducibility."""

from __future__ import annotations

import json
import os

import pytest

from sentipre.cli import (EXIT_DATA, EXIT_OK, EXIT_USAGE, main)

TINY_CFG = """\
[model]
disc_layers = 1
disc_hidden = 16
disc_heads = 2
disc_ffn = 32
gen_layers = 1
gen_hidden = 8
gen_heads = 2
gen_ffn = 16
dropout = 0.0

[vocab]
min_freq = 1

[word]
batch_size = 4
max_steps = 4
warmup_steps = 1
peak_lr = 1e-3

[ance]
k = 10
t = 2
refresh_every = 3
iterations = 1
batch_size = 4
warmup_steps = 2
peak_lr = 1e-3

[task]
max_epochs = 1
learning_rate = 1e-3
"""


@pytest.fixture()
def workdir(tmp_path, toy_assets):
    cfg = tmp_path / "cfg.ini"
    cfg.write_text(TINY_CFG)
    return {
        "cfg": str(cfg),
        "corpus": str(toy_assets["corpus"]),
        "lexicon": str(toy_assets["lexicon"]),
        "train": str(toy_assets["train"]),
        "valid": str(toy_assets["valid"]),
        "test": str(toy_assets["test"]),
        "tmp": tmp_path,
    }


def run(args):
    return main(args)


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self):
        assert run(["definitely-not-a-command"]) == EXIT_USAGE

    def test_missing_input_is_data_error(self, workdir):
        code = run(["build-vocab", "--config", workdir["cfg"],
                    "--corpus", "/nonexistent/corpus.txt",
                    "--out", str(workdir["tmp"] / "o")])
        assert code == EXIT_DATA

    def test_bad_config_key_is_usage_error(self, workdir):
        code = run(["stats", "--config", workdir["cfg"],
                    "--set", "bogus.key=1",
                    "--corpus", workdir["corpus"],
                    "--lexicon", workdir["lexicon"],
                    "--out", str(workdir["tmp"] / "o")])
        assert code == EXIT_USAGE


class TestStats:
    def test_fixture_counts(self, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("pos00 aaa bbb\nneg01 ccc\nplain words only\nneg02 neg03 ddd eee\n")
        lex = tmp_path / "lex.tsv"
        from sentipre.toydata import write_synthetic_lexicon
        write_synthetic_lexicon(lex)
        code = run(["stats", "--corpus", str(corpus), "--lexicon", str(lex),
                    "--out", str(tmp_path / "o")])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "o" / "stats.json").read_text())
        assert report["sentences"] == 4
        assert report["mean_length"] == pytest.approx((3 + 2 + 3 + 4) / 4)
        hist = report["sentiment_proportion_histogram"]
        assert hist["0.0-0.1"] == 1    # "plain words only"
        assert hist["0.3-0.4"] == 1    # pos00 in 3 tokens
        assert hist["0.5-0.6"] == 2    # the two half-marker sentences


class TestPipeline:
    def test_stage_chain_and_reproducibility(self, workdir):
        t = workdir["tmp"]
        base = ["--config", workdir["cfg"], "--corpus", workdir["corpus"],
                "--lexicon", workdir["lexicon"]]

        assert run(["build-vocab", *base, "--out", str(t / "v")]) == EXIT_OK
        vocab = str(t / "v" / "vocab.txt")

        for tag in ("w1", "w2"):
            code = run(["pretrain-word", *base, "--vocab", vocab,
                        "--out", str(t / tag)])
            assert code == EXIT_OK
        assert (t / "w1" / "word_metrics.csv").read_bytes() == \
               (t / "w2" / "word_metrics.csv").read_bytes()
        assert (t / "w1" / "word_final.ckpt").read_bytes() == \
               (t / "w2" / "word_final.ckpt").read_bytes()
        # config echoed for provenance
        assert (t / "w1" / "config.ini").exists()

        code = run(["pretrain-sentence", *base, "--vocab", vocab,
                    "--checkpoint", str(t / "w1" / "word_final.ckpt"),
                    "--out", str(t / "s1")])
        assert code == EXIT_OK
        assert (t / "s1" / "sentence_final.ckpt").exists()

        code = run(["build-index", *base, "--vocab", vocab,
                    "--checkpoint", str(t / "s1" / "sentence_final.ckpt"),
                    "--out", str(t / "idx")])
        assert code == EXIT_OK
        assert any(f.startswith("index_v") for f in os.listdir(t / "idx"))

        code = run(["finetune", "--config", workdir["cfg"], "--vocab", vocab,
                    "--checkpoint", str(t / "s1" / "sentence_final.ckpt"),
                    "--train", workdir["train"], "--valid", workdir["valid"],
                    "--out", str(t / "ft")])
        assert code == EXIT_OK

        code = run(["evaluate", "--config", workdir["cfg"], "--vocab", vocab,
                    "--checkpoint", str(t / "ft" / "finetuned.ckpt"),
                    "--test", workdir["test"], "--out", str(t / "ev")])
        assert code == EXIT_OK
        metrics = json.loads((t / "ev" / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0
        assert 0.0 <= metrics["macro_f1"] <= 1.0

    def test_evaluate_rejects_non_finetuned_checkpoint(self, workdir):
        t = workdir["tmp"]
        base = ["--config", workdir["cfg"], "--corpus", workdir["corpus"],
                "--lexicon", workdir["lexicon"]]
        assert run(["build-vocab", *base, "--out", str(t / "v")]) == EXIT_OK
        vocab = str(t / "v" / "vocab.txt")
        assert run(["pretrain-word", *base, "--vocab", vocab,
                    "--out", str(t / "w")]) == EXIT_OK
        code = run(["evaluate", "--config", workdir["cfg"], "--vocab", vocab,
                    "--checkpoint", str(t / "w" / "word_final.ckpt"),
                    "--test", workdir["test"], "--out", str(t / "ev")])
        assert code == EXIT_DATA

    def test_warmup_subcommand_runs_no_iterations(self, workdir):
        t = workdir["tmp"]
        base = ["--config", workdir["cfg"], "--corpus", workdir["corpus"],
                "--lexicon", workdir["lexicon"]]
        assert run(["build-vocab", *base, "--out", str(t / "v")]) == EXIT_OK
        vocab = str(t / "v" / "vocab.txt")
        assert run(["pretrain-word", *base, "--vocab", vocab,
                    "--out", str(t / "w")]) == EXIT_OK
        code = run(["warmup", *base, "--vocab", vocab,
                    "--checkpoint", str(t / "w" / "word_final.ckpt"),
                    "--out", str(t / "wm")])
        assert code == EXIT_OK
        lines = (t / "wm" / "sentence_metrics.csv").read_text().splitlines()
        assert all(line.split(",")[1] == "warmup" for line in lines[1:])

    def test_filter_corpus_writes_band(self, workdir):
        t = workdir["tmp"]
        code = run(["filter-corpus", "--config", workdir["cfg"],
                    "--corpus", workdir["corpus"],
                    "--lexicon", workdir["lexicon"], "--out", str(t / "f")])
        assert code == EXIT_OK
        kept = (t / "f" / "filtered_corpus.txt").read_text().splitlines()
        assert len(kept) > 0


class TestGradcheckCommand:
    def test_exit_zero_on_pass(self):
        assert run(["gradcheck", "--trials", "1"]) == EXIT_OK
