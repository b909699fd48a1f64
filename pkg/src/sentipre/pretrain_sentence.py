"""Stage 2: contrastive sentence training with asynchronously refreshed
hard negatives.

Phase 1 warms the discriminator up on in-batch negatives. Phase 2 repeats:
snapshot the model, re-embed the corpus, rebuild the nearest-neighbor
index, then train `refresh_every` steps against negatives sampled from
that (now progressively stale) index. Retrieval uses stale embeddings;
the training loss always re-encodes negatives with the live model.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .index import AnnIndex, EmbeddingStore
from .losses import LOG_EPS, cosine_sim, dot_sim
from .masking import MaskConfig, MaskPlan, mask_sentence_query
from .models import PretrainModel, load_model, pool_sentence, save_model
from .optim import AdamW, LrSchedule, lr_at
from .rng import Rng
from .tensor import NumericFault, Tensor
from .text import CLS_ID, PAD_ID, SEP_ID, CorpusStore, TokenizedSentence

METRICS_HEADER = "step,phase,loss,pos_sim_mean,neg_sim_mean,index_version"


@dataclass
class AnceConfig:
    k: int = 100
    t: int = 7
    refresh_every: int = 2000
    iterations: int = 4
    tau: float = 0.05
    loss_kind: str = "nll"      # "nll" | "nll_literal" | "triplet"
    sim_kind: str = "cosine"    # "cosine" | "dot"
    include_in_batch: bool = False
    margin: float = 0.2
    batch_size: int = 64
    warmup_steps: int = 500
    peak_lr: float = 2e-5
    weight_decay: float = 0.01
    mask: MaskConfig = field(default_factory=MaskConfig)
    holdout_fraction: float = 0.02

    def __post_init__(self):
        if self.t > self.k:
            raise ValueError("t must be <= k")
        if self.refresh_every <= 0:
            raise ValueError("refresh_every must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.loss_kind not in ("nll", "nll_literal", "triplet"):
            raise ValueError(f"unknown loss kind: {self.loss_kind}")
        if self.sim_kind not in ("cosine", "dot"):
            raise ValueError(f"unknown similarity kind: {self.sim_kind}")


@dataclass
class QueryPosPair:
    query_plan: MaskPlan
    positive: TokenizedSentence
    corpus_id: int


def build_pair(sentence: TokenizedSentence, corpus_id: int, cfg: AnceConfig,
               rng: Rng) -> QueryPosPair:
    plan, positive = mask_sentence_query(sentence, cfg.mask, rng)
    return QueryPosPair(query_plan=plan, positive=positive, corpus_id=corpus_id)


def _pad_wrap(rows_of_ids: list[list[int]]):
    """[CLS] ids [SEP] with padding; returns (ids, attention_mask)."""
    n = max(len(r) for r in rows_of_ids) + 2
    B = len(rows_of_ids)
    ids = np.full((B, n), PAD_ID, dtype=np.int64)
    attn = np.zeros((B, n), dtype=np.float32)
    for b, r in enumerate(rows_of_ids):
        ids[b, 0] = CLS_ID
        ids[b, 1:len(r) + 1] = r
        ids[b, len(r) + 1] = SEP_ID
        attn[b, :len(r) + 2] = 1.0
    return ids, attn


def encode_sentences(model: PretrainModel, rows_of_ids: list[list[int]],
                     dropout_rng: Rng | None = None) -> Tensor:
    """[CLS]-pooled embeddings [B, d] from the discriminator."""
    ids, attn = _pad_wrap(rows_of_ids)
    hidden = model.discriminator_hidden(ids, attn, dropout_rng=dropout_rng)
    return pool_sentence(hidden, ids)


def _sim_matrix(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Pairwise similarities: a [B, d] x b [B, d] -> [B, B]."""
    if kind == "cosine":
        a = _unit(a)
        b = _unit(b)
    return T.matmul(a, T.transpose(b))


def _unit(x: Tensor) -> Tensor:
    norms = T.tsqrt(T.tsum(T.mul(x, x), axis=-1, keepdims=True))
    if np.any(norms.data == 0):
        raise ValueError("zero embedding vector")
    return T.mul(x, T.power(norms, -1.0))


def in_batch_nll(f_q: Tensor, f_p: Tensor, tau: float, sim_kind: str = "cosine") -> Tensor:
    """Warm-up objective: each query against all in-batch positives."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    B = f_q.shape[0]
    sim = _sim_matrix(f_q, f_p, sim_kind)
    logp = T.log_softmax(T.mul_scalar(sim, 1.0 / tau), axis=-1)
    diag = T.gather_positions(logp, np.arange(B), np.arange(B))
    return T.mul_scalar(T.tsum(diag), -1.0)


def _pair_sims(f_q: Tensor, f_p: Tensor, f_n: Tensor | None, kind: str):
    """sim(query_i, positive_i) [B] and sim(query_i, neg_ij) [B, t]."""
    sim_fn = cosine_sim if kind == "cosine" else dot_sim
    sim_pos = sim_fn(f_q, f_p)
    sim_neg = None
    if f_n is not None and f_n.shape[1] > 0:
        B, d = f_q.shape
        q3 = T.reshape(f_q, (B, 1, d))
        sim_neg = sim_fn(q3, f_n)
    return sim_pos, sim_neg


def ance_loss(f_q: Tensor, f_p: Tensor, f_n: Tensor | None, cfg: AnceConfig) -> Tensor:
    """Hard-negative contrastive loss, summed over the batch.

    Default "nll": temperature-scaled softmax over {positive} + negatives.
    "nll_literal": log applied to (1+sim)/2 directly, eps-clamped.
    "triplet": margin hinge against the hardest negative.
    """
    sim_pos, sim_neg = _pair_sims(f_q, f_p, f_n, cfg.sim_kind)
    B = f_q.shape[0]
    if cfg.loss_kind == "nll":
        if sim_neg is None:
            return Tensor(np.float32(0.0))
        cat = T.concat([T.reshape(sim_pos, (B, 1)), sim_neg], axis=1)
        logp = T.log_softmax(T.mul_scalar(cat, 1.0 / cfg.tau), axis=-1)
        return T.mul_scalar(T.tsum(logp[:, 0]), -1.0)
    if cfg.loss_kind == "nll_literal":
        p_pos = _clamp01(T.mul_scalar(T.add(sim_pos, 1.0), 0.5))
        loss = T.mul_scalar(T.tsum(T.tlog(p_pos)), -1.0)
        if sim_neg is not None:
            p_neg = _clamp01(T.mul_scalar(T.add(sim_neg, 1.0), 0.5))
            loss = T.add(loss, T.mul_scalar(T.tsum(T.tlog(T.add(1.0, T.mul_scalar(p_neg, -1.0)))), -1.0))
        return loss
    # triplet
    if sim_neg is None:
        return Tensor(np.float32(0.0))
    hardest = T.tmax(sim_neg, axis=-1)
    hinge = T.relu(T.add(T.add(Tensor(np.float32(cfg.margin)), T.mul_scalar(sim_pos, -1.0)), hardest))
    return T.tsum(hinge)


def _clamp01(p: Tensor) -> Tensor:
    clipped = np.clip(p.data, LOG_EPS, 1.0 - LOG_EPS)
    if (clipped == p.data).all():
        return p
    return T.add(p, Tensor(clipped - p.data))


def embed_corpus(model: PretrainModel, corpus: CorpusStore, version: int,
                 batch_size: int = 64, num_shards: int = 1) -> EmbeddingStore:
    """Deterministic eval-mode embeddings of every (unmasked) sentence."""
    model.eval()
    bounds = np.linspace(0, len(corpus), num_shards + 1, dtype=int)
    shards = []
    with T.no_grad():
        for s in range(num_shards):
            chunk_rows = []
            for lo in range(bounds[s], bounds[s + 1], batch_size):
                batch = [corpus[i].ids for i in range(lo, min(lo + batch_size, bounds[s + 1]))]
                if not batch:
                    continue
                chunk_rows.append(encode_sentences(model, batch).data.astype(np.float32))
            if chunk_rows:
                shards.append(np.concatenate(chunk_rows, axis=0))
    embeddings = np.concatenate(shards, axis=0) if shards else np.zeros((0, model.cfg.disc_hidden), np.float32)
    return EmbeddingStore(embeddings=embeddings, version=version)


def sample_hard_negatives(ranked_ids: np.ndarray, pair: QueryPosPair, t: int,
                          rng: Rng) -> np.ndarray:
    """Uniform sample of t ids from the retrieved pool, excluding self."""
    candidates = np.asarray([i for i in ranked_ids if i != pair.corpus_id])
    if len(candidates) < t:
        return candidates
    return rng.choice_without_replacement(candidates, t)


@dataclass
class SentencePretrainResult:
    checkpoint_path: str
    metrics_path: str
    refresh_steps: list[int]


def run_sentence_pretrain(word_checkpoint: str, corpus: CorpusStore, cfg: AnceConfig,
                          seed: int, out_dir) -> SentencePretrainResult:
    """Warm-up plus `iterations` ANCE rounds; emits metrics and snapshots."""
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    os.makedirs(out_dir, exist_ok=True)
    rng = Rng(seed)
    model, _ = load_model(word_checkpoint)
    model.train()
    opt = AdamW(model.parameters(), weight_decay=cfg.weight_decay)
    total_steps = cfg.warmup_steps + cfg.iterations * cfg.refresh_every
    # the in-batch phase doubles as the lr warm-up span
    warm_frac = cfg.warmup_steps / total_steps if cfg.warmup_steps else 0.1
    schedule = LrSchedule(cfg.peak_lr, total_steps, warmup_fraction=warm_frac)

    rows_csv = [METRICS_HEADER]
    refresh_steps: list[int] = []

    def batch_ids(step: int) -> list[int]:
        r = rng.stream(1, step)
        return [int(i) for i in r.integers(0, len(corpus), cfg.batch_size)]

    def make_pairs(ids: list[int], step: int) -> list[QueryPosPair]:
        r = rng.stream(2, step)
        return [build_pair(corpus[i], i, cfg, r.stream(j)) for j, i in enumerate(ids)]

    def emit(step, phase, loss, pos_mean, neg_mean, version):
        rows_csv.append(f"{step},{phase},{loss:.8g},{pos_mean:.8g},{neg_mean:.8g},{version}")

    step = 0
    # ---- phase 1: in-batch warm-up ----
    for _ in range(cfg.warmup_steps):
        step += 1
        pairs = make_pairs(batch_ids(step), step)
        drop = rng.stream(3, step)
        f_q = encode_sentences(model, [p.query_plan.masked_ids for p in pairs], dropout_rng=drop)
        f_p = encode_sentences(model, [p.positive.ids for p in pairs], dropout_rng=drop.stream(1))
        loss = in_batch_nll(f_q, f_p, cfg.tau, cfg.sim_kind)
        _train_step(model, opt, loss, lr_at(schedule, step), out_dir, step)
        sim_pos, _ = _pair_sims(f_q, f_p, None, cfg.sim_kind)
        emit(step, "warmup", loss.item() / len(pairs), float(sim_pos.data.mean()), 0.0, -1)

    # ---- phase 2: ANCE iterations with asynchronous-style refresh ----
    index: AnnIndex | None = None
    for it in range(cfg.iterations):
        snap_path = os.path.join(out_dir, f"sentence_step{step}.ckpt")
        save_model(model, snap_path, stage="sentence", step=step)
        store = embed_corpus(model, corpus, version=step)
        store.save(os.path.join(out_dir, f"index_v{step}.npz"))
        index = AnnIndex(store, mode="exact")
        refresh_steps.append(step + 1)  # first trained step using this index
        model.train()
        for _ in range(cfg.refresh_every):
            step += 1
            ids = batch_ids(step)
            pairs = make_pairs(ids, step)
            drop = rng.stream(3, step)
            f_q = encode_sentences(model, [p.query_plan.masked_ids for p in pairs], dropout_rng=drop)
            f_p = encode_sentences(model, [p.positive.ids for p in pairs], dropout_rng=drop.stream(1))
            neg_rng = rng.stream(4, step)
            neg_ids_per_pair = []
            k = min(cfg.k, index.store.size)
            for j, p in enumerate(pairs):
                ranked, _ = index.query(f_q.data[j], k)
                neg_ids_per_pair.append(sample_hard_negatives(ranked, p, cfg.t, neg_rng.stream(j)))
            flat = [int(i) for ids_ in neg_ids_per_pair for i in ids_]
            t_eff = min(len(x) for x in neg_ids_per_pair)
            if t_eff < cfg.t:
                warnings.warn(f"step {step}: only {t_eff} hard negatives available")
            # negatives are re-encoded by the live model: gradients flow
            f_n_flat = encode_sentences(model, [corpus[i].ids for i in flat], dropout_rng=drop.stream(2))
            f_n = _regroup(f_n_flat, neg_ids_per_pair, t_eff)
            loss = ance_loss(f_q, f_p, f_n, cfg)
            if cfg.include_in_batch:
                loss = T.add(loss, in_batch_nll(f_q, f_p, cfg.tau, cfg.sim_kind))
            _train_step(model, opt, loss, lr_at(schedule, step), out_dir, step)
            assert step - index.version <= cfg.refresh_every, "staleness bound violated"
            sim_pos, sim_neg = _pair_sims(f_q, f_p, f_n, cfg.sim_kind)
            neg_mean = float(sim_neg.data.mean()) if sim_neg is not None else 0.0
            emit(step, "ance", loss.item() / len(pairs), float(sim_pos.data.mean()),
                 neg_mean, index.version)

    metrics_path = os.path.join(out_dir, "sentence_metrics.csv")
    with open(metrics_path, "w") as f:
        f.write("\n".join(rows_csv) + "\n")
    ckpt_path = os.path.join(out_dir, "sentence_final.ckpt")
    save_model(model, ckpt_path, stage="sentence", step=step)
    return SentencePretrainResult(ckpt_path, metrics_path, refresh_steps)


def _regroup(flat: Tensor, groups: list[np.ndarray], t_eff: int) -> Tensor | None:
    """Reshape flat negative embeddings back to [B, t_eff, d]."""
    if t_eff == 0:
        return None
    B = len(groups)
    d = flat.shape[-1]
    rows = []
    offset = 0
    for g in groups:
        rows.append(flat[offset:offset + t_eff])
        offset += len(g)
    return T.reshape(T.concat(rows, axis=0), (B, t_eff, d))


def _train_step(model, opt, loss: Tensor, lr: float, out_dir, step: int):
    try:
        opt.zero_grad()
        T.forward_backward(loss)
        opt.step(lr)
    except NumericFault:
        with open(os.path.join(out_dir, "sentence_nan_batch.json"), "w") as f:
            json.dump({"step": step}, f)
        raise
