"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric fault.
Every subcommand reads a RunConfig (file + --set overrides), derives all
randomness from the global seed, writes artifacts under --out, and echoes
the fully resolved config there for provenance.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import finetune as ft
from . import pretrain_sentence as ps
from . import pretrain_word as pw
from . import text
from .config import ConfigError, RunConfig, parse_config
from .gradcheck import REL_TOL, run_gradient_checks
from .index import AnnIndex
from .models import load_model
from .rng import Rng
from .tensor import NumericFault

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


def _load_cfg(args) -> RunConfig:
    cfg = parse_config(args.config, args.set)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        cfg.echo(os.path.join(args.out, "config.ini"))
    return cfg


def _path(cfg: RunConfig, key: str, flag_value: str | None) -> str:
    value = flag_value or cfg["paths"][key]
    if not value:
        raise DataError(f"no {key} path given (flag or [paths] {key})")
    if not os.path.exists(value):
        raise DataError(f"{key} file not found: {value}")
    return value


def _prepared_corpus(cfg: RunConfig, args, need_lexicon=True):
    lex = None
    if need_lexicon:
        lex = text.load_lexicon(_path(cfg, "lexicon", args.lexicon),
                                threshold=cfg["masking"]["theta_lex"])
    corpus = text.load_corpus(_path(cfg, "corpus", args.corpus), lexicon=lex,
                              max_len=cfg["model"]["max_positions"])
    return corpus, lex


def _vocab_for(cfg: RunConfig, args, corpus) -> text.Vocab:
    if args.vocab or cfg["paths"]["vocab"]:
        return text.Vocab.load(_path(cfg, "vocab", args.vocab))
    return text.Vocab.build(corpus.sentences, min_freq=cfg["vocab"]["min_freq"])


def cmd_build_vocab(args) -> int:
    cfg = _load_cfg(args)
    corpus, _ = _prepared_corpus(cfg, args, need_lexicon=False)
    vocab = text.Vocab.build(corpus.sentences, min_freq=cfg["vocab"]["min_freq"])
    out = os.path.join(args.out, "vocab.txt")
    vocab.save(out)
    print(f"vocab: {vocab.size} tokens -> {out}")
    return EXIT_OK


def cmd_filter_corpus(args) -> int:
    cfg = _load_cfg(args)
    corpus, _ = _prepared_corpus(cfg, args)
    kept = text.filter_corpus(corpus, cfg["filter"]["lo"], cfg["filter"]["hi"])
    out = os.path.join(args.out, "filtered_corpus.txt")
    with open(out, "w", encoding="utf-8") as f:
        for s in kept:
            f.write(" ".join(s.tokens) + "\n")
    print(f"kept {len(kept)}/{len(corpus)} sentences -> {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    cfg = _load_cfg(args)
    corpus, _ = _prepared_corpus(cfg, args)
    props = [text.sentiment_proportion(s) for s in corpus]
    lengths = [s.n for s in corpus]
    hist, edges = np.histogram(props, bins=10, range=(0.0, 1.0))
    report = {
        "sentences": len(corpus),
        "mean_length": float(np.mean(lengths)) if lengths else 0.0,
        "sentiment_proportion_histogram": {
            f"{edges[i]:.1f}-{edges[i + 1]:.1f}": int(hist[i]) for i in range(len(hist))
        },
    }
    print(json.dumps(report, indent=2))
    if args.out:
        with open(os.path.join(args.out, "stats.json"), "w") as f:
            json.dump(report, f, indent=2)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradient_checks(trials_per_case=args.trials, verbose=True)
    worst = max(err for _, err in results)
    print(f"worst max_rel_err={worst:.3e} (tolerance {REL_TOL:g})")
    return EXIT_OK if worst < REL_TOL else EXIT_NUMERIC


def cmd_pretrain_word(args) -> int:
    cfg = _load_cfg(args)
    corpus, _ = _prepared_corpus(cfg, args)
    vocab = _vocab_for(cfg, args, corpus)
    for s in corpus:
        vocab.apply(s)
    ckpt, metrics = pw.run_word_pretrain(corpus, vocab, cfg.word_config(),
                                         cfg.model_config(vocab.size),
                                         cfg.seed, args.out)
    vocab.save(os.path.join(args.out, "vocab.txt"))
    print(f"checkpoint: {ckpt}\nmetrics: {metrics}")
    return EXIT_OK


def _sentence_corpus(cfg: RunConfig, args, vocab: text.Vocab) -> text.CorpusStore:
    corpus, _ = _prepared_corpus(cfg, args)
    kept = text.filter_corpus(corpus, cfg["filter"]["lo"], cfg["filter"]["hi"])
    if len(kept) == 0:
        raise DataError("no sentences inside the sentiment-proportion band")
    for s in kept:
        vocab.apply(s)
    return kept


def cmd_pretrain_sentence(args, warmup_only: bool = False) -> int:
    cfg = _load_cfg(args)
    ckpt = _path(cfg, "checkpoint", args.checkpoint)
    vocab = text.Vocab.load(_path(cfg, "vocab", args.vocab))
    corpus = _sentence_corpus(cfg, args, vocab)
    ance = cfg.ance_config()
    if warmup_only:
        from dataclasses import replace
        ance = replace(ance, iterations=0)
    result = ps.run_sentence_pretrain(ckpt, corpus, ance, cfg.seed, args.out)
    print(f"checkpoint: {result.checkpoint_path}\nmetrics: {result.metrics_path}")
    return EXIT_OK


def cmd_warmup(args) -> int:
    return cmd_pretrain_sentence(args, warmup_only=True)


def cmd_build_index(args) -> int:
    cfg = _load_cfg(args)
    ckpt_path = _path(cfg, "checkpoint", args.checkpoint)
    vocab = text.Vocab.load(_path(cfg, "vocab", args.vocab))
    corpus = _sentence_corpus(cfg, args, vocab)
    model, manifest = load_model(ckpt_path)
    version = int(manifest.get("step", "0"))
    store = ps.embed_corpus(model, corpus, version=version)
    out = os.path.join(args.out, f"index_v{version}.npz")
    store.save(out)
    AnnIndex(store, mode="exact")  # validates the store
    print(f"index: {store.size} x {store.dim} (version {version}) -> {out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _load_cfg(args)
    task = cfg.task_spec()
    vocab = text.Vocab.load(_path(cfg, "vocab", args.vocab))
    train = text.load_classification_dataset(_path(cfg, "train", args.train), task)
    valid = text.load_classification_dataset(_path(cfg, "valid", args.valid), task)
    model, _ = load_model(_path(cfg, "checkpoint", args.checkpoint))
    tuned = ft.finetune(model, vocab, train, valid, task, cfg.seed,
                        batch_size=cfg["task"]["batch_size"])
    with open(os.path.join(args.out, "finetune_metrics.jsonl"), "w") as f:
        for row in tuned.history:
            f.write(json.dumps(row) + "\n")
    from .models import save_model
    out_ckpt = os.path.join(args.out, "finetuned.ckpt")
    save_model(tuned.model, out_ckpt, stage="finetune", step=len(tuned.history),
               extra={"num_classes": str(task.num_classes), "task_kind": task.kind})
    np.save(os.path.join(args.out, "classifier_head.npy"),
            np.concatenate([tuned.head.w.data.ravel(), tuned.head.b.data.ravel()]))
    print(f"best valid accuracy: {max(r['valid_accuracy'] for r in tuned.history):.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    task = cfg.task_spec()
    vocab = text.Vocab.load(_path(cfg, "vocab", args.vocab))
    test = text.load_classification_dataset(_path(cfg, "test", args.test), task)
    model, manifest = load_model(_path(cfg, "checkpoint", args.checkpoint))
    if manifest.get("stage") != "finetune":
        raise DataError("evaluate expects a fine-tuned checkpoint")
    head_path = os.path.join(os.path.dirname(args.checkpoint or cfg["paths"]["checkpoint"]),
                             "classifier_head.npy")
    if not os.path.exists(head_path):
        raise DataError(f"classifier head not found next to checkpoint: {head_path}")
    head = ft.ClassifierHead(model.cfg.disc_hidden, task.num_classes, Rng(0))
    flat = np.load(head_path)
    d, c = model.cfg.disc_hidden, task.num_classes
    head.w.data = flat[:d * c].reshape(d, c).astype(np.float32)
    head.b.data = flat[d * c:].astype(np.float32)
    tuned = ft.FinetunedModel(model=model, head=head, task=task, vocab=vocab)
    metrics = ft.evaluate(tuned, test, task)
    print(json.dumps(metrics.as_dict(), indent=2))
    if args.out:
        ft.dump_predictions(tuned, test, os.path.join(args.out, "predictions.tsv"))
        with open(os.path.join(args.out, "metrics.json"), "w") as f:
            json.dump(metrics.as_dict(), f, indent=2)
    return EXIT_OK


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "filter-corpus": cmd_filter_corpus,
    "pretrain-word": cmd_pretrain_word,
    "warmup": cmd_warmup,
    "pretrain-sentence": cmd_pretrain_sentence,
    "build-index": cmd_build_index,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "stats": cmd_stats,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sentipre",
                                     description="sentiment-aware two-stage pre-training pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="config override (repeatable)")
        p.add_argument("--out", default="out", help="output directory")
        for flag in ("corpus", "lexicon", "vocab", "checkpoint", "train", "valid", "test"):
            p.add_argument(f"--{flag}", default=None)
        if name == "gradcheck":
            p.add_argument("--trials", type=int, default=10)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericFault as e:
        print(f"numeric fault: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
