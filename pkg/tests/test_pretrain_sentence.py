"""Contrastive warm-up, hard-negative loss variants and the refresh loop."""

from __future__ import annotations

import math

import numpy as np
import pytest

from sentipre.masking import MaskConfig
from sentipre.models import ModelConfig, PretrainModel, save_model
from sentipre.pretrain_sentence import (AnceConfig, METRICS_HEADER,
                                        QueryPosPair, ance_loss, build_pair,
                                        embed_corpus, in_batch_nll,
                                        run_sentence_pretrain,
                                        sample_hard_negatives)
from sentipre.rng import Rng
from sentipre.tensor import Tensor
from sentipre.text import CorpusStore, TokenizedSentence

V = 30


def tiny_cfg():
    return ModelConfig(vocab_size=V, disc_layers=1, disc_hidden=16, disc_heads=2,
                       disc_ffn=32, gen_layers=1, gen_hidden=8, gen_heads=2,
                       gen_ffn=16, dropout=0.0)


def sent(ids, flagged):
    s = TokenizedSentence(tokens=[f"t{i}" for i in ids])
    s.ids = list(ids)
    s.sentiment_flags = [i in flagged for i in range(len(ids))]
    return s


def small_corpus(n=20):
    rng = Rng(31)
    out = []
    for i in range(n):
        r = rng.stream(i)
        length = int(r.integers(6, 10))
        ids = [int(x) for x in r.integers(5, V, size=length)]
        out.append(sent(ids, flagged={0, 1}))
    return CorpusStore(out)


def _nll_oracle(sim_matrix, tau):
    """Independent f64 exp-normalize NLL over rows; target is column i."""
    total = 0.0
    for i, row in enumerate(np.asarray(sim_matrix, dtype=np.float64)):
        z = row / tau
        z = z - z.max()
        p = np.exp(z) / np.exp(z).sum()
        total -= math.log(p[i])
    return total


class TestInBatchNll:
    def _unit_rows(self, arr):
        a = np.asarray(arr, dtype=np.float64)
        return a / np.linalg.norm(a, axis=-1, keepdims=True)

    def test_batch_of_one_is_zero(self):
        f = Tensor(np.array([[1.0, 2.0, 3.0]]))
        assert in_batch_nll(f, f, tau=0.05).item() == pytest.approx(0.0, abs=1e-7)

    def test_equal_similarities_closed_form(self):
        # orthogonal queries against the same positive direction twice:
        # use identical positives so each row of the sim matrix is constant
        f_q = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        f_p = Tensor(np.array([[1.0, 1.0], [1.0, 1.0]]))
        loss = in_batch_nll(f_q, f_p, tau=0.5)
        assert loss.item() == pytest.approx(2 * math.log(2), rel=1e-6)

    def test_matches_exp_normalize_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            q = rng.normal(size=(4, 8))
            p = rng.normal(size=(4, 8))
            tau = 0.05 + 0.2 * rng.random()
            got = in_batch_nll(Tensor(q), Tensor(p), tau).item()
            sims = self._unit_rows(q) @ self._unit_rows(p).T
            assert got == pytest.approx(_nll_oracle(sims, tau), abs=1e-10)

    def test_batch_order_invariance(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(6, 5))
        p = rng.normal(size=(6, 5))
        loss = in_batch_nll(Tensor(q), Tensor(p), 0.1).item()
        perm = rng.permutation(6)
        loss_perm = in_batch_nll(Tensor(q[perm]), Tensor(p[perm]), 0.1).item()
        assert loss == pytest.approx(loss_perm, rel=1e-9)

    def test_high_temperature_limit(self):
        # tau -> inf flattens the softmax: loss -> B * ln B
        rng = np.random.default_rng(2)
        B = 5
        q = rng.normal(size=(B, 4))
        p = rng.normal(size=(B, 4))
        loss = in_batch_nll(Tensor(q), Tensor(p), tau=1e8).item()
        assert loss == pytest.approx(B * math.log(B), rel=1e-5)

    def test_invalid_tau_rejected(self):
        f = Tensor(np.ones((2, 3)))
        with pytest.raises(ValueError):
            in_batch_nll(f, f, tau=0.0)

    def test_gradients_reach_both_sides(self):
        rng = np.random.default_rng(3)
        q = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        p = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        in_batch_nll(q, p, 0.1).backward()
        assert q.grad is not None and np.any(q.grad != 0)
        assert p.grad is not None and np.any(p.grad != 0)


class TestAnceLoss:
    def _cfg(self, **kw):
        base = dict(k=10, t=3, refresh_every=5, iterations=1, tau=0.05,
                    batch_size=4, warmup_steps=2)
        base.update(kw)
        return AnceConfig(**base)

    def test_no_negatives_nll_zero(self):
        f = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
        assert ance_loss(f, f, None, self._cfg()).item() == 0.0

    def test_equidistant_pos_neg_ln2(self):
        # positive and single negative at the same similarity -> two-way uniform
        f_q = Tensor(np.array([[1.0, 0.0]]))
        f_p = Tensor(np.array([[1.0, 1.0]]))
        f_n = Tensor(np.array([[[1.0, 1.0]]]))
        loss = ance_loss(f_q, f_p, f_n, self._cfg(t=1))
        assert loss.item() == pytest.approx(math.log(2), rel=1e-6)

    def test_matches_softmax_ce_oracle(self):
        rng = np.random.default_rng(4)
        cfg = self._cfg(t=3)
        for trial in range(20):
            q = rng.normal(size=(4, 6))
            p = rng.normal(size=(4, 6))
            n = rng.normal(size=(4, 3, 6))
            got = ance_loss(Tensor(q), Tensor(p), Tensor(n), cfg).item()

            def cos(a, b):
                return float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))

            expect = 0.0
            for i in range(4):
                sims = [cos(q[i], p[i])] + [cos(q[i], n[i, j]) for j in range(3)]
                z = np.asarray(sims) / cfg.tau
                z -= z.max()
                probs = np.exp(z) / np.exp(z).sum()
                expect -= math.log(probs[0])
            assert got == pytest.approx(expect, abs=1e-10)

    def test_decreases_as_positive_gets_closer(self):
        cfg = self._cfg(t=2)
        q = np.array([[1.0, 0.0, 0.0]])
        n = np.array([[[0.5, 0.5, 0.0], [0.0, 1.0, 1.0]]])
        far = ance_loss(Tensor(q), Tensor(np.array([[0.2, 1.0, 0.0]])),
                        Tensor(n), cfg).item()
        near = ance_loss(Tensor(q), Tensor(np.array([[1.0, 0.1, 0.0]])),
                         Tensor(n), cfg).item()
        assert near < far

    def test_dot_similarity_variant(self):
        cfg = self._cfg(t=1, sim_kind="dot", tau=1.0)
        q = np.array([[1.0, 2.0]])
        p = np.array([[0.5, 0.5]])
        n = np.array([[[1.0, 0.0]]])
        got = ance_loss(Tensor(q), Tensor(p), Tensor(n), cfg).item()
        sims = np.array([1.5, 1.0])
        z = sims - sims.max()
        expect = -math.log(np.exp(z[0]) / np.exp(z).sum())
        assert got == pytest.approx(expect, rel=1e-6)

    def test_literal_variant_oracle(self):
        cfg = self._cfg(t=2, loss_kind="nll_literal")
        rng = np.random.default_rng(5)
        q = rng.normal(size=(2, 4))
        p = rng.normal(size=(2, 4))
        n = rng.normal(size=(2, 2, 4))
        got = ance_loss(Tensor(q), Tensor(p), Tensor(n), cfg).item()

        def cos(a, b):
            return float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))

        expect = 0.0
        for i in range(2):
            expect -= math.log((1 + cos(q[i], p[i])) / 2)
            for j in range(2):
                expect -= math.log(1 - (1 + cos(q[i], n[i, j])) / 2)
        assert got == pytest.approx(expect, rel=1e-5)

    def test_triplet_variant_oracle(self):
        cfg = self._cfg(t=2, loss_kind="triplet", margin=0.2)
        rng = np.random.default_rng(6)
        q = rng.normal(size=(3, 4))
        p = rng.normal(size=(3, 4))
        n = rng.normal(size=(3, 2, 4))
        got = ance_loss(Tensor(q), Tensor(p), Tensor(n), cfg).item()

        def cos(a, b):
            return float(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))

        expect = 0.0
        for i in range(3):
            hardest = max(cos(q[i], n[i, j]) for j in range(2))
            expect += max(0.0, 0.2 - cos(q[i], p[i]) + hardest)
        assert got == pytest.approx(expect, rel=1e-5)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AnceConfig(k=5, t=7)
        with pytest.raises(ValueError):
            AnceConfig(tau=-1.0)
        with pytest.raises(ValueError):
            AnceConfig(loss_kind="hinge2")
        with pytest.raises(ValueError):
            AnceConfig(refresh_every=0)


class TestPairsAndNegatives:
    def test_build_pair_diff_positions(self):
        s = sent(list(range(10, 20)), flagged={0, 1, 2})
        cfg = AnceConfig(k=5, t=2, mask=MaskConfig(p_s=0.7))
        pair = build_pair(s, 4, cfg, Rng(0))
        assert pair.corpus_id == 4
        diff = [i for i in range(s.n)
                if pair.query_plan.masked_ids[i] != pair.positive.ids[i]]
        assert diff == pair.query_plan.masked_positions()
        assert sum(pair.query_plan.indicators) == math.ceil(0.7 * 3)

    def test_self_excluded(self):
        pair = QueryPosPair(query_plan=None, positive=None, corpus_id=5)
        ranked = np.array([5, 1, 2, 3, 4])
        for seed in range(100):
            got = sample_hard_negatives(ranked, pair, t=3, rng=Rng(seed))
            assert 5 not in got.tolist()

    def test_k_equals_t_returns_all_non_self(self):
        pair = QueryPosPair(query_plan=None, positive=None, corpus_id=9)
        ranked = np.array([9, 1, 2])
        got = sample_hard_negatives(ranked, pair, t=2, rng=Rng(0))
        assert sorted(got.tolist()) == [1, 2]

    def test_shortfall_returns_all_candidates(self):
        pair = QueryPosPair(query_plan=None, positive=None, corpus_id=0)
        got = sample_hard_negatives(np.array([0, 1]), pair, t=5, rng=Rng(0))
        assert got.tolist() == [1]

    def test_sampling_frequencies_uniform(self):
        pair = QueryPosPair(query_plan=None, positive=None, corpus_id=999)
        ranked = np.arange(100)
        counts = np.zeros(100)
        rng = Rng(8)
        trials = 10000
        for i in range(trials):
            got = sample_hard_negatives(ranked, pair, t=7, rng=rng.stream(i))
            counts[got] += 1
        freqs = counts / trials
        assert np.all(np.abs(freqs - 0.07) < 0.01)


class TestEmbedCorpus:
    def test_row_count_and_determinism(self):
        model = PretrainModel(tiny_cfg(), Rng(1)).eval()
        corpus = small_corpus()
        a = embed_corpus(model, corpus, version=2)
        b = embed_corpus(model, corpus, version=2)
        assert a.size == len(corpus)
        assert a.version == 2
        assert np.array_equal(a.embeddings, b.embeddings)

    def test_sharded_equals_single_worker(self):
        model = PretrainModel(tiny_cfg(), Rng(1)).eval()
        corpus = small_corpus()
        single = embed_corpus(model, corpus, version=0, num_shards=1)
        sharded = embed_corpus(model, corpus, version=0, num_shards=2)
        assert np.array_equal(single.embeddings, sharded.embeddings)

    def test_batch_size_does_not_change_values(self):
        model = PretrainModel(tiny_cfg(), Rng(1)).eval()
        corpus = small_corpus()
        a = embed_corpus(model, corpus, version=0, batch_size=3)
        b = embed_corpus(model, corpus, version=0, batch_size=64)
        assert np.allclose(a.embeddings, b.embeddings, atol=1e-5)


class TestRunLoop:
    def _word_ckpt(self, tmp_path):
        model = PretrainModel(tiny_cfg(), Rng(2))
        path = tmp_path / "word.ckpt"
        save_model(model, path, stage="word", step=0)
        return path

    def test_full_protocol_artifacts(self, tmp_path):
        ckpt = self._word_ckpt(tmp_path)
        cfg = AnceConfig(k=8, t=2, refresh_every=3, iterations=2, batch_size=4,
                         warmup_steps=2, peak_lr=1e-3,
                         mask=MaskConfig(p_s=0.7))
        result = run_sentence_pretrain(ckpt, small_corpus(), cfg, seed=3,
                                       out_dir=tmp_path / "out")
        lines = open(result.metrics_path).read().splitlines()
        assert lines[0] == METRICS_HEADER
        assert len(lines) == 1 + 2 + 2 * 3
        phases = [line.split(",")[1] for line in lines[1:]]
        assert phases == ["warmup"] * 2 + ["ance"] * 6
        assert result.refresh_steps == [3, 6]
        # every ance row satisfies the staleness bound
        for line in lines[3:]:
            step, _, _, _, _, version = line.split(",")
            assert int(step) - int(version) <= cfg.refresh_every
        assert (tmp_path / "out" / "index_v2.npz").exists()
        assert (tmp_path / "out" / "sentence_step2.ckpt").exists()

    def test_reproducible_metrics(self, tmp_path):
        ckpt = self._word_ckpt(tmp_path)
        cfg = AnceConfig(k=8, t=2, refresh_every=2, iterations=1, batch_size=4,
                         warmup_steps=2, peak_lr=1e-3)
        r1 = run_sentence_pretrain(ckpt, small_corpus(), cfg, 5, tmp_path / "a")
        r2 = run_sentence_pretrain(ckpt, small_corpus(), cfg, 5, tmp_path / "b")
        assert open(r1.metrics_path).read() == open(r2.metrics_path).read()
        assert open(r1.checkpoint_path, "rb").read() == open(r2.checkpoint_path, "rb").read()

    def test_empty_corpus_rejected(self, tmp_path):
        ckpt = self._word_ckpt(tmp_path)
        with pytest.raises(ValueError):
            run_sentence_pretrain(ckpt, CorpusStore([]), AnceConfig(), 0, tmp_path)
