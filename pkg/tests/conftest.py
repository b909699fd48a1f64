"""Shared fixtures: a small synthetic corpus, lexicon and tiny model sizes."""

from __future__ import annotations

import numpy as np
import pytest

from sentipre import text, toydata
from sentipre.models import ModelConfig, PretrainModel
from sentipre.rng import Rng


_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Recorder used by the acceptance suite; lines land in the run summary."""
    def record(name: str, ok: bool, detail: str):
        _acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance summary")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_assets(tmp_path_factory):
    """Synthetic corpus + lexicon + classification splits on disk."""
    root = tmp_path_factory.mktemp("toy")
    lex_path = root / "lexicon.tsv"
    corpus_path = root / "corpus.txt"
    toydata.write_synthetic_lexicon(lex_path)
    toydata.write_synthetic_corpus(corpus_path, n_sentences=300, seed=7)
    splits = toydata.write_classification_splits(root, n_train=120, n_valid=40,
                                                 n_test=40, seed=11)
    return {"root": root, "lexicon": lex_path, "corpus": corpus_path, **splits}


@pytest.fixture(scope="session")
def lexicon(toy_assets):
    return text.load_lexicon(toy_assets["lexicon"])


@pytest.fixture(scope="session")
def corpus(toy_assets, lexicon):
    return text.load_corpus(toy_assets["corpus"], lexicon=lexicon)


@pytest.fixture(scope="session")
def vocab(corpus):
    v = text.Vocab.build(corpus.sentences, min_freq=1)
    for s in corpus:
        v.apply(s)
    return v


@pytest.fixture(scope="session")
def tiny_cfg(vocab):
    return ModelConfig(vocab_size=vocab.size,
                       disc_layers=2, disc_hidden=32, disc_heads=2, disc_ffn=64,
                       gen_layers=1, gen_hidden=16, gen_heads=2, gen_ffn=32,
                       dropout=0.0)


@pytest.fixture()
def tiny_model(tiny_cfg):
    return PretrainModel(tiny_cfg, Rng(123)).eval()


@pytest.fixture()
def rng():
    return Rng(0)


def batchify(sentences):
    """[CLS] ids [SEP] with padding; (ids, attention_mask) as arrays."""
    rows = [s.ids for s in sentences]
    n = max(len(r) for r in rows) + 2
    ids = np.zeros((len(rows), n), dtype=np.int64)
    attn = np.zeros((len(rows), n), dtype=np.float32)
    for b, r in enumerate(rows):
        ids[b, 0] = text.CLS_ID
        ids[b, 1:len(r) + 1] = r
        ids[b, len(r) + 1] = text.SEP_ID
        attn[b, :len(r) + 2] = 1.0
    return ids, attn
