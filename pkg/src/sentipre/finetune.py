"""Fine-tuning a pre-trained discriminator on sentence/aspect classification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .models import ClassifierHead, PretrainModel, classify_logits, pool_sentence
from .optim import AdamW, LrSchedule, lr_at
from .rng import Rng
from .text import (CLS_ID, MAX_SEQ_LEN, PAD_ID, SEP_ID, ClassifiedExample,
                   TaskSpec, Vocab, tokenize)

FINETUNE_DROPOUT = 0.1


@dataclass
class Metrics:
    accuracy: float
    macro_f1: float
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f1: list[float]

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "per_class_f1": self.per_class_f1,
        }


def compute_metrics(gold: np.ndarray, pred: np.ndarray, num_classes: int) -> Metrics:
    """Accuracy and macro-F1 from a confusion matrix; absent classes score 0."""
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (gold, pred), 1)
    accuracy = float(np.trace(conf)) / max(1, len(gold))
    precision, recall, f1 = [], [], []
    for c in range(num_classes):
        tp = conf[c, c]
        p = tp / conf[:, c].sum() if conf[:, c].sum() else 0.0
        r = tp / conf[c, :].sum() if conf[c, :].sum() else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(2 * p * r / (p + r)) if (p + r) else 0.0)
    return Metrics(accuracy, float(np.mean(f1)), precision, recall, f1)


def format_sentence_input(example: ClassifiedExample, vocab: Vocab,
                          max_len: int = MAX_SEQ_LEN) -> tuple[list[int], list[int]]:
    """[CLS] tokens [SEP]; returns (ids, segment_ids)."""
    tokens = tokenize(example.text, max_len).tokens[:max_len - 2]
    ids = [CLS_ID] + vocab.encode(tokens) + [SEP_ID]
    return ids, [0] * len(ids)


def format_aspect_input(example: ClassifiedExample, vocab: Vocab,
                        max_len: int = MAX_SEQ_LEN) -> tuple[list[int], list[int]]:
    """[CLS] aspect [SEP] text [SEP]; text is truncated before the aspect."""
    if example.aspect is None:
        raise ValueError("aspect-level input requires an aspect phrase")
    aspect = tokenize(example.aspect, max_len).tokens
    text = tokenize(example.text, max_len).tokens
    budget = max_len - 3 - len(aspect)
    if budget < 0:
        raise ValueError("aspect phrase alone exceeds the sequence budget")
    text = text[:budget]
    ids = [CLS_ID] + vocab.encode(aspect) + [SEP_ID] + vocab.encode(text) + [SEP_ID]
    segs = [0] * (len(aspect) + 2) + [1] * (len(text) + 1)
    return ids, segs


def format_input(example: ClassifiedExample, vocab: Vocab, task: TaskSpec,
                 max_len: int = MAX_SEQ_LEN):
    if task.kind == "aspect":
        return format_aspect_input(example, vocab, max_len)
    return format_sentence_input(example, vocab, max_len)


def _pad_batch(rows: list[tuple[list[int], list[int]]]):
    n = max(len(ids) for ids, _ in rows)
    B = len(rows)
    ids = np.full((B, n), PAD_ID, dtype=np.int64)
    segs = np.zeros((B, n), dtype=np.int64)
    attn = np.zeros((B, n), dtype=np.float32)
    for b, (r, s) in enumerate(rows):
        ids[b, :len(r)] = r
        segs[b, :len(s)] = s
        attn[b, :len(r)] = 1.0
    return ids, segs, attn


@dataclass
class FinetunedModel:
    model: PretrainModel
    head: ClassifierHead
    task: TaskSpec
    vocab: Vocab
    history: list[dict] = field(default_factory=list)

    def predict_proba(self, examples: list[ClassifiedExample],
                      batch_size: int = 32) -> np.ndarray:
        self.model.eval()
        out = []
        with T.no_grad():
            for lo in range(0, len(examples), batch_size):
                rows = [format_input(e, self.vocab, self.task)
                        for e in examples[lo:lo + batch_size]]
                ids, segs, attn = _pad_batch(rows)
                hidden = self.model.discriminator_hidden(ids, attn, segment_ids=segs)
                logits = classify_logits(self.head, pool_sentence(hidden, ids))
                out.append(T.softmax(logits, axis=-1).data)
        return np.concatenate(out, axis=0)

    def predict(self, examples: list[ClassifiedExample]) -> np.ndarray:
        return self.predict_proba(examples).argmax(axis=-1)


def evaluate(tuned: FinetunedModel, split: list[ClassifiedExample],
             task: TaskSpec) -> Metrics:
    if not split:
        raise ValueError("empty evaluation split")
    gold = np.array([e.label for e in split])
    pred = tuned.predict(split)
    return compute_metrics(gold, pred, task.num_classes)


def finetune(model: PretrainModel, vocab: Vocab, train: list[ClassifiedExample],
             valid: list[ClassifiedExample], task: TaskSpec, seed: int,
             batch_size: int = 32) -> FinetunedModel:
    """Cross-entropy training on [CLS] logits; keeps the best-validation epoch."""
    if not train or not valid:
        raise ValueError("train and valid splits must be non-empty")
    rng = Rng(seed)
    head = ClassifierHead(model.cfg.disc_hidden, task.num_classes, rng.stream(0))
    params = [model.embedding] + list(model.discriminator.params.values()) + head.parameters()
    opt = AdamW(params)
    steps_per_epoch = (len(train) + batch_size - 1) // batch_size
    total = steps_per_epoch * task.max_epochs
    schedule = LrSchedule(task.learning_rate, total, warmup_fraction=0.1)
    tuned = FinetunedModel(model=model, head=head, task=task, vocab=vocab)

    best_acc = -1.0
    best_state = None
    step = 0
    for epoch in range(task.max_epochs):
        order = rng.stream(1, epoch).permutation(len(train))
        model.train()
        epoch_loss = 0.0
        for lo in range(0, len(train), batch_size):
            batch = [train[i] for i in order[lo:lo + batch_size]]
            rows = [format_input(e, vocab, task) for e in batch]
            ids, segs, attn = _pad_batch(rows)
            labels = np.array([e.label for e in batch])
            drop = rng.stream(2, step)
            hidden = model.discriminator_hidden(ids, attn, segment_ids=segs, dropout_rng=drop)
            pooled = T.dropout(pool_sentence(hidden, ids), FINETUNE_DROPOUT, drop.stream(1)) \
                if model.training else pool_sentence(hidden, ids)
            logits = classify_logits(head, pooled)
            logp = T.log_softmax(logits, axis=-1)
            picked = T.gather_positions(logp, np.arange(len(batch)), labels)
            loss = T.mul_scalar(T.tmean(picked), -1.0)
            opt.zero_grad()
            T.forward_backward(loss)
            step += 1
            opt.step(lr_at(schedule, step))
            epoch_loss += loss.item() * len(batch)
        val = evaluate(tuned, valid, task)
        tuned.history.append({"epoch": epoch, "train_loss": epoch_loss / len(train),
                              "valid_accuracy": val.accuracy, "valid_macro_f1": val.macro_f1})
        if val.accuracy > best_acc:
            best_acc = val.accuracy
            best_state = [p.data.copy() for p in params]
    if best_state is not None:
        for p, saved in zip(params, best_state):
            p.data = saved
    model.eval()
    return tuned


def dump_predictions(tuned: FinetunedModel, split: list[ClassifiedExample], path) -> None:
    """TSV: example_id, gold, pred, per-class probabilities."""
    probs = tuned.predict_proba(split)
    with open(path, "w", encoding="utf-8") as f:
        for i, (e, p) in enumerate(zip(split, probs)):
            cols = [str(i), str(e.label), str(int(p.argmax()))] + [f"{x:.6f}" for x in p]
            f.write("\t".join(cols) + "\n")
