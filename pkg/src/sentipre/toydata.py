"""Synthetic corpus generation for desk-scale experiments and tests.

Sentences are built from topic-specific filler vocabularies plus planted
positive/negative marker words, so replacements are detectable (out-of-topic
fillers, polarity-inconsistent markers) and downstream polarity labels are
lexicon-separable.
"""

from __future__ import annotations

import os

from .rng import Rng

N_TOPICS = 10
FILLERS_PER_TOPIC = 17
N_POS = 15
N_NEG = 15


def filler_word(topic: int, i: int) -> str:
    return f"w{topic:02d}{i:02d}"


def pos_word(i: int) -> str:
    return f"pos{i:02d}"


def neg_word(i: int) -> str:
    return f"neg{i:02d}"


def write_synthetic_lexicon(path) -> None:
    """SentiWordNet-format lexicon scoring the planted marker words."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("# synthetic lexicon for the planted marker vocabulary\n")
        for i in range(N_POS):
            f.write(f"a\t{i + 1:08d}\t0.875\t0\t{pos_word(i)}#1\tplanted positive marker\n")
        for i in range(N_NEG):
            f.write(f"a\t{i + 100:08d}\t0\t0.875\t{neg_word(i)}#1\tplanted negative marker\n")


def make_sentence(rng: Rng, polarity: int | None = None,
                  min_len: int = 10, max_len: int = 16) -> tuple[str, int]:
    """One synthetic sentence with a 20-30% planted-marker proportion.

    Returns (text, polarity). If `polarity` is None it is drawn at random
    (0 = negative markers, 1 = positive markers).
    """
    if polarity is None:
        polarity = int(rng.integers(0, 2))
    n = int(rng.integers(min_len, max_len + 1))
    # marker count chosen so the proportion lands strictly inside [0.2, 0.3]
    lo = -(-n * 20 // 100)  # ceil(0.2 n)
    hi = n * 30 // 100      # floor(0.3 n)
    n_marked = int(rng.integers(lo, max(lo, hi) + 1))
    topic = int(rng.integers(0, N_TOPICS))
    words = [filler_word(topic, int(rng.integers(0, FILLERS_PER_TOPIC)))
             for _ in range(n - n_marked)]
    marker = pos_word if polarity == 1 else neg_word
    n_markers_avail = N_POS if polarity == 1 else N_NEG
    words += [marker(int(rng.integers(0, n_markers_avail))) for _ in range(n_marked)]
    order = rng.permutation(len(words))
    return " ".join(words[i] for i in order), polarity


def write_synthetic_corpus(path, n_sentences: int, seed: int) -> None:
    rng = Rng(seed)
    with open(path, "w", encoding="utf-8") as f:
        for i in range(n_sentences):
            text, _ = make_sentence(rng.stream(i))
            f.write(text + "\n")


def write_classification_splits(out_dir, n_train: int, n_valid: int, n_test: int,
                                seed: int) -> dict[str, str]:
    """Lexicon-separable 2-class splits: label = polarity of the markers."""
    rng = Rng(seed)
    paths = {}
    sizes = {"train": n_train, "valid": n_valid, "test": n_test}
    counter = 0
    for split, n in sizes.items():
        path = os.path.join(out_dir, f"{split}.tsv")
        with open(path, "w", encoding="utf-8") as f:
            for _ in range(n):
                text, polarity = make_sentence(rng.stream(counter))
                f.write(f"{text}\t{polarity}\n")
                counter += 1
        paths[split] = path
    return paths
