"""Stage 1: joint generator/discriminator training on replaced-word detection.

Per step: mask a batch, let the generator fill the masked slots by
sampling, let the discriminator score every position as original vs
replaced, and minimize generator NLL + lambda * detection cross entropy.
Sampling is a hard (non-differentiable) step, so no detection gradient
reaches the generator through it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .losses import bce_original_loss
from .masking import MaskConfig, MaskPlan, mask_word_level
from .models import ModelConfig, PretrainModel, save_model
from .optim import AdamW, LrSchedule, lr_at
from .rng import Rng
from .tensor import NumericFault, Tensor
from .text import CLS_ID, MASK_ID, PAD_ID, SEP_ID, CorpusStore, TokenizedSentence, Vocab

METRICS_HEADER = "step,lr,loss_g,loss_d,loss_joint,disc_acc"


@dataclass
class WordPretrainConfig:
    lam: float = 50.0
    batch_size: int = 128
    max_steps: int = 20000
    warmup_steps: int = 1500
    peak_lr: float = 2e-5
    weight_decay: float = 0.01
    mask: MaskConfig = field(default_factory=MaskConfig)
    holdout_fraction: float = 0.02

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass
class CorruptedBatch:
    """Generator-corrupted batch plus detection labels."""

    masked_ids: np.ndarray     # [B, n], [MASK] at planned positions
    rep_ids: np.ndarray        # [B, n], samples substituted in
    original_ids: np.ndarray   # [B, n]
    labels: np.ndarray         # [B, n], 1 iff rep == original
    attention_mask: np.ndarray  # [B, n], 1 on non-pad
    rows: np.ndarray           # masked positions, row indices
    cols: np.ndarray           # masked positions, column indices


def assemble_masked_batch(sentences: list[TokenizedSentence], plans: list[MaskPlan]):
    """Pad and wrap plans with [CLS]/[SEP]; specials are never masked."""
    n = max(p.n for p in plans) + 2
    B = len(plans)
    masked = np.full((B, n), PAD_ID, dtype=np.int64)
    original = np.full((B, n), PAD_ID, dtype=np.int64)
    attn = np.zeros((B, n), dtype=np.float32)
    rows, cols = [], []
    for b, plan in enumerate(plans):
        masked[b, 0] = original[b, 0] = CLS_ID
        masked[b, 1:plan.n + 1] = plan.masked_ids
        original[b, 1:plan.n + 1] = plan.original_ids
        masked[b, plan.n + 1] = original[b, plan.n + 1] = SEP_ID
        attn[b, :plan.n + 2] = 1.0
        for i in plan.masked_positions():
            rows.append(b)
            cols.append(i + 1)
    return masked, original, attn, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


def sample_replacements(probs: np.ndarray, masked_ids: np.ndarray,
                        original_ids: np.ndarray, attention_mask: np.ndarray,
                        rows: np.ndarray, cols: np.ndarray, rng: Rng) -> CorruptedBatch:
    """Fill masked positions with multinomial draws from generator probs.

    The [MASK] id itself is excluded from the draw (the corrupted sentence
    must be fully realized); its mass is renormalized away.
    """
    rep = original_ids.copy()
    if len(rows):
        probs = np.asarray(probs, dtype=np.float64).copy()
        probs[:, MASK_ID] = 0.0
        rep[rows, cols] = rng.multinomial_rows(probs)
    labels = (rep == original_ids).astype(np.float32)
    return CorruptedBatch(
        masked_ids=masked_ids, rep_ids=rep, original_ids=original_ids,
        labels=labels, attention_mask=attention_mask, rows=rows, cols=cols,
    )


@dataclass
class WordLosses:
    loss_g_sum: Tensor
    loss_d_sum: Tensor
    loss_g_mean: Tensor
    loss_d_mean: Tensor
    joint_sum: Tensor   # L_G + lam * L_D, sum convention (test reference)
    joint_mean: Tensor  # per-token means, the training objective
    disc_acc: float
    n_masked: int


def word_level_losses(model: PretrainModel, sentences_plans, cfg: WordPretrainConfig,
                      rng: Rng, dropout_rng: Rng | None = None) -> tuple[WordLosses, CorruptedBatch]:
    """Forward both models on one batch and build the joint objective."""
    sentences, plans = sentences_plans
    masked, original, attn, rows, cols = assemble_masked_batch(sentences, plans)

    logits = model.generator_logits(masked, attn, dropout_rng=dropout_rng)
    n_masked = len(rows)
    if n_masked:
        at = T.gather_positions(logits, rows, cols)           # [M, V]
        logp = T.log_softmax(at, axis=-1)
        orig_tokens = original[rows, cols]
        picked = T.gather_positions(logp, np.arange(n_masked), orig_tokens)
        loss_g_sum = T.mul_scalar(T.tsum(picked), -1.0)
        probs_np = np.exp(logp.data.astype(np.float64))
    else:
        loss_g_sum = Tensor(np.float32(0.0))
        probs_np = np.zeros((0, model.cfg.vocab_size))

    batch = sample_replacements(probs_np, masked, original, attn, rows, cols, rng)

    scores = model.discriminator_scores(batch.rep_ids, attn, dropout_rng=dropout_rng)
    loss_d_sum = bce_original_loss(scores, batch.labels, mask=attn)

    n_scored = float(attn.sum())
    loss_g_mean = T.mul_scalar(loss_g_sum, 1.0 / max(1, n_masked))
    loss_d_mean = T.mul_scalar(loss_d_sum, 1.0 / n_scored)
    joint_sum = T.add(loss_g_sum, T.mul_scalar(loss_d_sum, cfg.lam))
    joint_mean = T.add(loss_g_mean, T.mul_scalar(loss_d_mean, cfg.lam))

    pred = (scores.data > 0.5).astype(np.float32)
    correct = ((pred == batch.labels) * attn).sum()
    disc_acc = float(correct / n_scored)

    losses = WordLosses(loss_g_sum, loss_d_sum, loss_g_mean, loss_d_mean,
                        joint_sum, joint_mean, disc_acc, n_masked)
    return losses, batch


def evaluate_detection(model: PretrainModel, sentences: list[TokenizedSentence],
                       cfg: WordPretrainConfig, seed: int, batch_size: int = 64) -> float:
    """Held-out detection accuracy on freshly corrupted sentences."""
    model.eval()
    rng = Rng(seed)
    correct = 0.0
    total = 0.0
    with T.no_grad():
        for lo in range(0, len(sentences), batch_size):
            chunk = sentences[lo:lo + batch_size]
            plans = [mask_word_level(s, cfg.mask, rng.stream(0, lo + i))
                     for i, s in enumerate(chunk)]
            masked, original, attn, rows, cols = assemble_masked_batch(chunk, plans)
            logits = model.generator_logits(masked, attn)
            if len(rows):
                at = logits.data[rows, cols].astype(np.float64)
                at -= at.max(axis=-1, keepdims=True)
                probs = np.exp(at)
                probs /= probs.sum(axis=-1, keepdims=True)
            else:
                probs = np.zeros((0, model.cfg.vocab_size))
            batch = sample_replacements(probs, masked, original, attn, rows, cols,
                                        rng.stream(1, lo))
            scores = model.discriminator_scores(batch.rep_ids, attn)
            pred = (scores.data > 0.5).astype(np.float32)
            correct += float(((pred == batch.labels) * attn).sum())
            total += float(attn.sum())
    return correct / total


def _format_row(values) -> str:
    out = []
    for v in values:
        out.append(str(v) if isinstance(v, int) else f"{v:.8g}")
    return ",".join(out)


def run_word_pretrain(corpus: CorpusStore, vocab: Vocab, cfg: WordPretrainConfig,
                      model_cfg: ModelConfig, seed: int, out_dir) -> tuple[str, str]:
    """Full stage-1 loop; returns (checkpoint_path, metrics_csv_path)."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    os.makedirs(out_dir, exist_ok=True)
    rng = Rng(seed)

    n_hold = max(1, int(len(corpus) * cfg.holdout_fraction)) if cfg.holdout_fraction > 0 else 0
    train_sents = corpus.sentences[:len(corpus) - n_hold]
    holdout = corpus.sentences[len(corpus) - n_hold:]

    model = PretrainModel(model_cfg, rng.stream(0)).train()
    opt = AdamW(model.parameters(), weight_decay=cfg.weight_decay)
    schedule = LrSchedule(cfg.peak_lr, cfg.max_steps,
                          warmup_fraction=cfg.warmup_steps / cfg.max_steps)

    rows_csv = [METRICS_HEADER]
    order: list[int] = []
    epoch = 0
    for step in range(1, cfg.max_steps + 1):
        while len(order) < cfg.batch_size:
            order += list(rng.stream(1, epoch).permutation(len(train_sents)))
            epoch += 1
        idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
        sentences = [train_sents[i] for i in idx]
        step_rng = rng.stream(2, step)
        plans = [mask_word_level(s, cfg.mask, step_rng.stream(i))
                 for i, s in enumerate(sentences)]

        lr = lr_at(schedule, step)
        try:
            losses, batch = word_level_losses(model, (sentences, plans), cfg,
                                              step_rng.stream(10_000),
                                              dropout_rng=step_rng.stream(20_000))
            opt.zero_grad()
            T.forward_backward(losses.joint_mean)
            opt.step(lr)
        except NumericFault:
            dump = os.path.join(out_dir, "word_nan_batch.json")
            with open(dump, "w") as f:
                json.dump({"step": step, "sentence_ids": [int(i) for i in idx]}, f)
            raise
        rows_csv.append(_format_row([step, lr, losses.loss_g_mean.item(),
                                     losses.loss_d_mean.item(), losses.joint_mean.item(),
                                     losses.disc_acc]))

    metrics_path = os.path.join(out_dir, "word_metrics.csv")
    with open(metrics_path, "w") as f:
        f.write("\n".join(rows_csv) + "\n")

    ckpt_path = os.path.join(out_dir, "word_final.ckpt")
    extra = {}
    if holdout:
        extra["holdout_detection_acc"] = f"{evaluate_detection(model, holdout, cfg, seed + 1):.6f}"
    save_model(model, ckpt_path, stage="word", step=cfg.max_steps, extra=extra)
    return ckpt_path, metrics_path
