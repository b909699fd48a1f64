"""Mask planning for both pre-training stages.

Word level: mask ~15% of positions at random, then top up masked sentiment
words to a target proportion p_w. Sentence level: mask a proportion p_s of
the sentiment words to build a query, keeping the raw sentence as the
positive example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import Rng
from .text import MASK_ID, TokenizedSentence


@dataclass(frozen=True)
class MaskConfig:
    random_rate: float = 0.15
    p_w: float = 0.5
    p_s: float = 0.7

    def __post_init__(self):
        for name in ("random_rate", "p_w", "p_s"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0,1], got {v}")


@dataclass
class MaskPlan:
    indicators: list[bool]
    original_ids: list[int]
    masked_ids: list[int]

    @property
    def n(self) -> int:
        return len(self.indicators)

    def masked_positions(self) -> list[int]:
        return [i for i, m in enumerate(self.indicators) if m]

    def unmask(self) -> list[int]:
        """Recover the original ids exactly."""
        return list(self.original_ids)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _build_plan(sentence: TokenizedSentence, masked: set[int]) -> MaskPlan:
    ids = list(sentence.ids)
    masked_ids = [MASK_ID if i in masked else t for i, t in enumerate(ids)]
    return MaskPlan(
        indicators=[i in masked for i in range(len(ids))],
        original_ids=ids,
        masked_ids=masked_ids,
    )


def mask_word_level(sentence: TokenizedSentence, cfg: MaskConfig, rng: Rng) -> MaskPlan:
    """Random masking plus sentiment top-up to ceil(p_w * S) sentiment masks.

    Rounding: half-up for the random count, ceil for the sentiment target,
    so at least one sentiment word is masked whenever S > 0 and p_w > 0.
    """
    n = sentence.n
    if n < 1:
        raise ValueError("cannot mask an empty sentence")
    flags = sentence.sentiment_flags or [False] * n

    k_random = _round_half_up(cfg.random_rate * n)
    order = rng.permutation(n)
    masked = set(int(i) for i in order[:k_random])

    sentiment_positions = [i for i, f in enumerate(flags) if f]
    target = math.ceil(cfg.p_w * len(sentiment_positions))
    already = sum(1 for i in sentiment_positions if i in masked)
    if already < target:
        candidates = np.array([i for i in sentiment_positions if i not in masked])
        extra = rng.choice_without_replacement(candidates, target - already)
        masked.update(int(i) for i in extra)
    return _build_plan(sentence, masked)


def mask_sentence_query(sentence: TokenizedSentence, cfg: MaskConfig,
                        rng: Rng) -> tuple[MaskPlan, TokenizedSentence]:
    """Mask exactly ceil(p_s * S) sentiment positions; positive = original."""
    sentiment_positions = np.array([i for i, f in enumerate(sentence.sentiment_flags) if f])
    if len(sentiment_positions) == 0:
        raise ValueError("sentence has no sentiment words; corpus should be pre-filtered")
    k = math.ceil(cfg.p_s * len(sentiment_positions))
    chosen = rng.choice_without_replacement(sentiment_positions, k)
    plan = _build_plan(sentence, set(int(i) for i in chosen))
    return plan, sentence
