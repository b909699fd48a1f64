"""Transformer encoder pair: small generator, larger discriminator.

Both encoders share one token-embedding table (at the discriminator's
width; the generator projects it down). The generation head ties its
output logits to the shared table; the detection head scores each
position as sigmoid(embedding-of-occupying-token . hidden-state), with a
learned-vector alternative for ablation.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .rng import Rng
from .tensor import Tensor
from .text import CLS_ID, MASK_ID, MAX_SEQ_LEN

INIT_SIGMA = 0.02
NEG_BIAS = -1e9  # additive attention bias on padded keys


@dataclass(frozen=True)
class EncoderConfig:
    layers: int
    hidden: int
    heads: int
    ffn: int
    vocab_size: int
    max_positions: int = MAX_SEQ_LEN
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")


@dataclass(frozen=True)
class ModelConfig:
    """Configuration for the generator/discriminator pair."""

    vocab_size: int
    disc_layers: int = 4
    disc_hidden: int = 128
    disc_heads: int = 4
    disc_ffn: int = 512
    gen_layers: int = 2
    gen_hidden: int = 64
    gen_heads: int = 2
    gen_ffn: int = 256
    max_positions: int = MAX_SEQ_LEN
    dropout: float = 0.1
    disc_head: str = "tied"  # "tied" (embedding . hidden) | "learned"

    def disc_config(self) -> EncoderConfig:
        return EncoderConfig(self.disc_layers, self.disc_hidden, self.disc_heads,
                             self.disc_ffn, self.vocab_size, self.max_positions, self.dropout)

    def gen_config(self) -> EncoderConfig:
        return EncoderConfig(self.gen_layers, self.gen_hidden, self.gen_heads,
                             self.gen_ffn, self.vocab_size, self.max_positions, self.dropout)

    @property
    def embed_dim(self) -> int:
        # shared table lives at the discriminator's width
        return self.disc_hidden


def _param(rng: Rng, shape, zero=False) -> Tensor:
    if zero:
        data = np.zeros(shape, dtype=np.float32)
    else:
        data = rng.truncated_normal(INIT_SIGMA, shape).astype(np.float32)
    return Tensor(data, requires_grad=True)


class Encoder:
    """Pre-layer-norm transformer encoder over a shared embedding table."""

    def __init__(self, cfg: EncoderConfig, embedding: Tensor, rng: Rng):
        self.cfg = cfg
        self.embedding = embedding  # [V, embed_dim], shared, not in self.params
        self.training = False
        embed_dim = embedding.shape[1]
        d = cfg.hidden
        p = OrderedDict()
        p["pos_emb"] = _param(rng.stream(0), (cfg.max_positions, d))
        p["seg_emb"] = _param(rng.stream(1), (2, d))
        if embed_dim != d:
            p["in_proj_w"] = _param(rng.stream(2), (embed_dim, d))
            p["in_proj_b"] = _param(rng.stream(3), (d,), zero=True)
        p["emb_ln_g"] = Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
        p["emb_ln_b"] = _param(rng.stream(4), (d,), zero=True)
        for i in range(cfg.layers):
            r = rng.stream(10 + i)
            for j, name in enumerate(("q", "k", "v", "o")):
                p[f"l{i}_attn_{name}_w"] = _param(r.stream(j), (d, d))
                p[f"l{i}_attn_{name}_b"] = _param(r.stream(j), (d,), zero=True)
            p[f"l{i}_ln1_g"] = Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
            p[f"l{i}_ln1_b"] = _param(r.stream(8), (d,), zero=True)
            p[f"l{i}_ffn_w1"] = _param(r.stream(4), (d, cfg.ffn))
            p[f"l{i}_ffn_b1"] = _param(r.stream(5), (cfg.ffn,), zero=True)
            p[f"l{i}_ffn_w2"] = _param(r.stream(6), (cfg.ffn, d))
            p[f"l{i}_ffn_b2"] = _param(r.stream(7), (d,), zero=True)
            p[f"l{i}_ln2_g"] = Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
            p[f"l{i}_ln2_b"] = _param(r.stream(9), (d,), zero=True)
        p["final_ln_g"] = Tensor(np.ones(d, dtype=np.float32), requires_grad=True)
        p["final_ln_b"] = _param(rng.stream(5), (d,), zero=True)
        self.params = p

    def _dropout(self, x: Tensor, rng: Rng | None) -> Tensor:
        if self.training and rng is not None and self.cfg.dropout > 0:
            return T.dropout(x, self.cfg.dropout, rng)
        return x

    def forward(self, ids: np.ndarray, attention_mask: np.ndarray,
                segment_ids: np.ndarray | None = None,
                dropout_rng: Rng | None = None) -> Tensor:
        """Encode int ids [B, n] into hidden states [B, n, hidden]."""
        ids = np.asarray(ids)
        B, n = ids.shape
        cfg = self.cfg
        if n > cfg.max_positions:
            raise ValueError(f"sequence length {n} exceeds max positions {cfg.max_positions}")
        if ids.min() < 0 or ids.max() >= cfg.vocab_size:
            raise ValueError("token id outside vocabulary")
        mask = np.asarray(attention_mask, dtype=np.float32)

        h = T.embedding(self.embedding, ids)
        if "in_proj_w" in self.params:
            h = T.add(T.matmul(h, self.params["in_proj_w"]), self.params["in_proj_b"])
        h = T.add(h, self.params["pos_emb"][:n])
        if segment_ids is not None:
            h = T.add(h, T.embedding(self.params["seg_emb"], np.asarray(segment_ids)))
        h = T.layer_norm(h, self.params["emb_ln_g"], self.params["emb_ln_b"])
        h = self._dropout(h, dropout_rng)

        d = cfg.hidden
        dh = d // cfg.heads
        attn_bias = Tensor(((1.0 - mask) * NEG_BIAS)[:, None, None, :].astype(np.float32))

        for i in range(cfg.layers):
            x = T.layer_norm(h, self.params[f"l{i}_ln1_g"], self.params[f"l{i}_ln1_b"])
            q = T.add(T.matmul(x, self.params[f"l{i}_attn_q_w"]), self.params[f"l{i}_attn_q_b"])
            k = T.add(T.matmul(x, self.params[f"l{i}_attn_k_w"]), self.params[f"l{i}_attn_k_b"])
            v = T.add(T.matmul(x, self.params[f"l{i}_attn_v_w"]), self.params[f"l{i}_attn_v_b"])
            q = T.swapaxes(T.reshape(q, (B, n, cfg.heads, dh)), 1, 2)
            k = T.swapaxes(T.reshape(k, (B, n, cfg.heads, dh)), 1, 2)
            v = T.swapaxes(T.reshape(v, (B, n, cfg.heads, dh)), 1, 2)
            scores = T.mul_scalar(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(dh))
            scores = T.add(scores, attn_bias)
            probs = T.softmax(scores, axis=-1)
            probs = self._dropout(probs, dropout_rng)
            ctx = T.matmul(probs, v)
            ctx = T.reshape(T.swapaxes(ctx, 1, 2), (B, n, d))
            ctx = T.add(T.matmul(ctx, self.params[f"l{i}_attn_o_w"]), self.params[f"l{i}_attn_o_b"])
            h = T.add(h, self._dropout(ctx, dropout_rng))

            x = T.layer_norm(h, self.params[f"l{i}_ln2_g"], self.params[f"l{i}_ln2_b"])
            f = T.add(T.matmul(x, self.params[f"l{i}_ffn_w1"]), self.params[f"l{i}_ffn_b1"])
            f = T.gelu(f)
            f = T.add(T.matmul(f, self.params[f"l{i}_ffn_w2"]), self.params[f"l{i}_ffn_b2"])
            h = T.add(h, self._dropout(f, dropout_rng))

        return T.layer_norm(h, self.params["final_ln_g"], self.params["final_ln_b"])


class PretrainModel:
    """Shared embedding + generator + discriminator, with both heads."""

    def __init__(self, cfg: ModelConfig, rng: Rng):
        self.cfg = cfg
        self.embedding = _param(rng.stream(100), (cfg.vocab_size, cfg.embed_dim))
        self.generator = Encoder(cfg.gen_config(), self.embedding, rng.stream(101))
        self.discriminator = Encoder(cfg.disc_config(), self.embedding, rng.stream(102))
        # generation head: project generator hidden back to embedding width
        self.gen_out_w = _param(rng.stream(103), (cfg.gen_hidden, cfg.embed_dim))
        self.gen_out_b = _param(rng.stream(104), (cfg.embed_dim,), zero=True)
        # learned-vector detection head (ablation alternative to the tied head)
        self.disc_head_w = _param(rng.stream(105), (cfg.disc_hidden,))
        self.disc_head_b = _param(rng.stream(106), (), zero=True)

    @property
    def training(self) -> bool:
        return self.generator.training

    def train(self, mode: bool = True):
        self.generator.training = mode
        self.discriminator.training = mode
        return self

    def eval(self):
        return self.train(False)

    def named_params(self) -> "OrderedDict[str, Tensor]":
        p = OrderedDict()
        p["embedding"] = self.embedding
        for k, v in self.generator.params.items():
            p[f"gen.{k}"] = v
        for k, v in self.discriminator.params.items():
            p[f"disc.{k}"] = v
        p["gen_out_w"] = self.gen_out_w
        p["gen_out_b"] = self.gen_out_b
        p["disc_head_w"] = self.disc_head_w
        p["disc_head_b"] = self.disc_head_b
        return p

    def parameters(self) -> list[Tensor]:
        return list(self.named_params().values())

    def generator_exclusive_params(self) -> list[Tensor]:
        out = list(self.generator.params.values())
        out += [self.gen_out_w, self.gen_out_b]
        return out

    # -- heads -----------------------------------------------------------

    def generator_logits(self, masked_ids: np.ndarray, attention_mask: np.ndarray,
                         dropout_rng: Rng | None = None) -> Tensor:
        """Vocabulary logits [B, n, V] via the tied embedding table."""
        h = self.generator.forward(masked_ids, attention_mask, dropout_rng=dropout_rng)
        proj = T.add(T.matmul(h, self.gen_out_w), self.gen_out_b)
        return T.matmul(proj, T.transpose(self.embedding))

    def generator_probs(self, masked_ids: np.ndarray, attention_mask: np.ndarray,
                        positions: tuple[np.ndarray, np.ndarray]) -> Tensor:
        """Distributions over V at the given masked (row, col) positions."""
        rows, cols = positions
        if not np.all(np.asarray(masked_ids)[rows, cols] == MASK_ID):
            raise ValueError("generator_probs queried at an unmasked position")
        logits = self.generator_logits(masked_ids, attention_mask)
        at = T.gather_positions(logits, rows, cols)
        return T.softmax(at, axis=-1)

    def discriminator_hidden(self, ids: np.ndarray, attention_mask: np.ndarray,
                             segment_ids: np.ndarray | None = None,
                             dropout_rng: Rng | None = None) -> Tensor:
        return self.discriminator.forward(ids, attention_mask, segment_ids, dropout_rng)

    def discriminator_scores(self, rep_ids: np.ndarray, attention_mask: np.ndarray,
                             dropout_rng: Rng | None = None) -> Tensor:
        """P(position holds the original word), in (0,1), shape [B, n]."""
        rep_ids = np.asarray(rep_ids)
        if (rep_ids == MASK_ID).any():
            raise ValueError("discriminator input must be fully realized (no [MASK])")
        h = self.discriminator_hidden(rep_ids, attention_mask, dropout_rng=dropout_rng)
        if self.cfg.disc_head == "tied":
            e = T.embedding(self.embedding, rep_ids)
            logits = T.tsum(T.mul(e, h), axis=-1)
        else:
            raw = T.matmul(h, T.reshape(self.disc_head_w, (self.cfg.disc_hidden, 1)))
            logits = T.add(T.reshape(raw, rep_ids.shape), self.disc_head_b)
        return T.sigmoid(logits)


def pool_sentence(hidden: Tensor, ids: np.ndarray) -> Tensor:
    """Sentence embedding: hidden state at the leading [CLS] position."""
    ids = np.asarray(ids)
    if not np.all(ids[:, 0] == CLS_ID):
        raise ValueError("input must begin with [CLS]")
    return hidden[:, 0, :]


class ClassifierHead:
    def __init__(self, hidden: int, num_classes: int, rng: Rng):
        self.w = _param(rng.stream(0), (hidden, num_classes))
        self.b = _param(rng.stream(1), (num_classes,), zero=True)

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b]

    def logits(self, pooled: Tensor) -> Tensor:
        return T.add(T.matmul(pooled, self.w), self.b)


def classify_logits(head: ClassifierHead, pooled: Tensor) -> Tensor:
    if pooled.shape[-1] != head.w.shape[0]:
        raise ValueError("pooled dimension does not match classifier head")
    return head.logits(pooled)


# -- checkpoint plumbing -----------------------------------------------------


_CONFIG_FIELDS = ("vocab_size", "disc_layers", "disc_hidden", "disc_heads", "disc_ffn",
                  "gen_layers", "gen_hidden", "gen_heads", "gen_ffn",
                  "max_positions", "dropout", "disc_head")


def save_model(model: PretrainModel, path, stage: str, step: int,
               extra: dict[str, str] | None = None) -> None:
    manifest = {"stage": stage, "step": str(step)}
    for f in _CONFIG_FIELDS:
        manifest[f"cfg.{f}"] = str(getattr(model.cfg, f))
    if extra:
        manifest.update(extra)
    tensors = OrderedDict((k, v.data) for k, v in model.named_params().items())
    save_checkpoint(path, manifest, tensors)


def load_model(path) -> tuple[PretrainModel, dict[str, str]]:
    manifest, tensors = load_checkpoint(path)
    kwargs = {}
    for f in _CONFIG_FIELDS:
        raw = manifest[f"cfg.{f}"]
        if f == "disc_head":
            kwargs[f] = raw
        elif f == "dropout":
            kwargs[f] = float(raw)
        else:
            kwargs[f] = int(raw)
    cfg = ModelConfig(**kwargs)
    model = PretrainModel(cfg, Rng(0))
    for name, tensor in model.named_params().items():
        if name not in tensors:
            raise CheckpointError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: {tensors[name].shape} vs {tensor.data.shape}")
        tensor.data = tensors[name].astype(np.float32).copy()
    return model, manifest


def scaled_config(cfg: ModelConfig, **overrides) -> ModelConfig:
    return replace(cfg, **overrides)
