"""Mask plan construction: counts, top-up rule, determinism, unmasking."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentipre.masking import MaskConfig, mask_sentence_query, mask_word_level
from sentipre.rng import Rng
from sentipre.text import MASK_ID, TokenizedSentence


def make_sentence(n, flagged_positions):
    s = TokenizedSentence(tokens=[f"t{i}" for i in range(n)])
    s.ids = [10 + i for i in range(n)]
    s.sentiment_flags = [i in flagged_positions for i in range(n)]
    return s


class TestWordLevel:
    def test_no_sentiment_words_pure_random(self):
        s = make_sentence(20, set())
        plan = mask_word_level(s, MaskConfig(random_rate=0.15, p_w=0.5), Rng(0))
        assert sum(plan.indicators) == 3  # round(0.15 * 20)

    def test_p_w_zero_is_pure_random(self):
        s = make_sentence(20, {0, 1, 2, 3})
        for seed in range(50):
            plan = mask_word_level(s, MaskConfig(random_rate=0.15, p_w=0.0), Rng(seed))
            assert sum(plan.indicators) == 3

    def test_topup_reaches_target(self):
        cfg = MaskConfig(random_rate=0.15, p_w=0.5)
        s = make_sentence(20, {2, 7, 11, 18})  # S=4, target ceil(2)=2
        for seed in range(1000):
            plan = mask_word_level(s, cfg, Rng(seed))
            masked_sent = sum(plan.indicators[i] for i in (2, 7, 11, 18))
            assert masked_sent >= 2

    def test_no_topup_when_random_covers_target(self):
        # random step masks 3 of 4 positions; target is 2, no extra masking
        cfg = MaskConfig(random_rate=0.75, p_w=0.5)
        s = make_sentence(4, {0, 1, 2, 3})
        for seed in range(100):
            plan = mask_word_level(s, cfg, Rng(seed))
            assert sum(plan.indicators) == 3

    def test_masked_ids_are_mask_token(self):
        s = make_sentence(12, {1, 5})
        plan = mask_word_level(s, MaskConfig(), Rng(3))
        for i, m in enumerate(plan.indicators):
            if m:
                assert plan.masked_ids[i] == MASK_ID
            else:
                assert plan.masked_ids[i] == s.ids[i]

    def test_determinism(self):
        s = make_sentence(30, {4, 9, 14})
        a = mask_word_level(s, MaskConfig(), Rng(77))
        b = mask_word_level(s, MaskConfig(), Rng(77))
        assert a.indicators == b.indicators
        assert a.masked_ids == b.masked_ids

    def test_unmask_recovers_original(self):
        s = make_sentence(25, {3, 8})
        plan = mask_word_level(s, MaskConfig(), Rng(5))
        assert plan.unmask() == s.ids

    def test_empty_sentence_rejected(self):
        with pytest.raises(ValueError):
            mask_word_level(make_sentence(0, set()), MaskConfig(), Rng(0))

    def test_rate_statistics_small(self):
        # quick version of the acceptance statistics check
        cfg = MaskConfig(random_rate=0.15, p_w=0.0)
        total_masked = 0
        total_tokens = 0
        rng = Rng(123)
        for i in range(500):
            n = 10 + i % 30
            s = make_sentence(n, set())
            plan = mask_word_level(s, cfg, rng.stream(i))
            total_masked += sum(plan.indicators)
            total_tokens += n
        assert abs(total_masked / total_tokens - 0.15) < 0.02

    @given(n=st.integers(min_value=1, max_value=60),
           seed=st.integers(min_value=0, max_value=2**31),
           flag_bits=st.integers(min_value=0, max_value=2**60 - 1))
    @settings(max_examples=150, deadline=None)
    def test_invariants_hold_for_random_sentences(self, n, seed, flag_bits):
        flagged = {i for i in range(n) if (flag_bits >> i) & 1}
        s = make_sentence(n, flagged)
        cfg = MaskConfig(random_rate=0.15, p_w=0.5)
        plan = mask_word_level(s, cfg, Rng(seed))
        assert plan.n == n
        assert plan.unmask() == s.ids
        target = math.ceil(cfg.p_w * len(flagged))
        masked_sent = sum(plan.indicators[i] for i in flagged)
        assert masked_sent >= min(target, len(flagged))
        # masked ids differ from originals exactly at indicator positions
        diff = [i for i in range(n) if plan.masked_ids[i] != plan.original_ids[i]]
        assert diff == plan.masked_positions()


class TestSentenceQuery:
    def test_exact_count(self):
        s = make_sentence(30, set(range(10)))
        plan, positive = mask_sentence_query(s, MaskConfig(p_s=0.7), Rng(0))
        assert sum(plan.indicators) == 7
        assert positive is s

    def test_only_sentiment_positions_masked(self):
        flagged = {2, 5, 8, 11}
        s = make_sentence(15, flagged)
        for seed in range(200):
            plan, _ = mask_sentence_query(s, MaskConfig(p_s=0.7), Rng(seed))
            for i, m in enumerate(plan.indicators):
                if m:
                    assert i in flagged

    def test_p_s_one_masks_all_sentiment(self):
        flagged = {1, 4, 6}
        s = make_sentence(10, flagged)
        plan, _ = mask_sentence_query(s, MaskConfig(p_s=1.0), Rng(9))
        assert {i for i, m in enumerate(plan.indicators) if m} == flagged

    def test_query_positive_diff_at_indicators(self):
        s = make_sentence(18, {0, 3, 6, 9, 12})
        plan, positive = mask_sentence_query(s, MaskConfig(p_s=0.7), Rng(4))
        diff = [i for i in range(s.n) if plan.masked_ids[i] != positive.ids[i]]
        assert diff == plan.masked_positions()

    def test_no_sentiment_words_rejected(self):
        s = make_sentence(10, set())
        with pytest.raises(ValueError):
            mask_sentence_query(s, MaskConfig(), Rng(0))

    @given(n=st.integers(min_value=2, max_value=40),
           seed=st.integers(min_value=0, max_value=2**31),
           s_count=st.integers(min_value=1, max_value=40))
    @settings(max_examples=100, deadline=None)
    def test_count_always_exact(self, n, seed, s_count):
        s_count = min(s_count, n)
        s = make_sentence(n, set(range(s_count)))
        cfg = MaskConfig(p_s=0.7)
        plan, _ = mask_sentence_query(s, cfg, Rng(seed))
        assert sum(plan.indicators) == math.ceil(0.7 * s_count)


class TestMaskConfig:
    def test_rates_validated(self):
        with pytest.raises(ValueError):
            MaskConfig(random_rate=1.5)
        with pytest.raises(ValueError):
            MaskConfig(p_w=-0.1)
