"""Tokenization, vocabulary, sentiment lexicon, corpus and dataset loading."""

from __future__ import annotations

import re
import warnings
from collections import Counter
from dataclasses import dataclass, field

MAX_SEQ_LEN = 128

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = [PAD, UNK, CLS, SEP, MASK]
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*", re.UNICODE)


@dataclass
class TokenizedSentence:
    """A sentence as surface tokens, vocab ids and per-token sentiment flags."""

    tokens: list[str]
    ids: list[int] = field(default_factory=list)
    sentiment_flags: list[bool] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.tokens)

    def sentiment_count(self) -> int:
        return sum(self.sentiment_flags)


def tokenize(text: str, max_len: int = MAX_SEQ_LEN) -> TokenizedSentence:
    """Lowercased, punctuation-split word tokens, truncated to `max_len`."""
    tokens = _TOKEN_RE.findall(text.lower())[:max_len]
    return TokenizedSentence(tokens=tokens)


class Vocab:
    """Token-to-id map with fixed special ids [PAD]=0..[MASK]=4."""

    def __init__(self, tokens: list[str]):
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIALS)}
        for t in tokens:
            if t not in self.token_to_id:
                self.token_to_id[t] = len(self.token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    @classmethod
    def build(cls, sentences: list[TokenizedSentence], min_freq: int = 2) -> "Vocab":
        counts = Counter(t for s in sentences for t in s.tokens)
        kept = sorted(t for t, c in counts.items() if c >= min_freq)
        return cls(kept)

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def apply(self, sentence: TokenizedSentence) -> TokenizedSentence:
        sentence.ids = self.encode(sentence.tokens)
        return sentence

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for i in range(self.size):
                f.write(self.id_to_token[i] + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        if tokens[:5] != SPECIALS:
            raise ValueError("vocab file does not start with the reserved specials")
        return cls(tokens[5:])


class Lexicon:
    """Surface term -> (positivity, negativity) scores in [0,1]."""

    def __init__(self, scores: dict[str, tuple[float, float]] | None = None,
                 threshold: float = 0.5):
        self.scores = dict(scores or {})
        self.threshold = threshold
        self.skipped_rows = 0

    def lookup(self, term: str) -> tuple[float, float]:
        return self.scores.get(term.lower(), (0.0, 0.0))

    def is_sentiment_word(self, term: str) -> bool:
        pos, neg = self.lookup(term)
        return max(pos, neg) >= self.threshold

    def __len__(self) -> int:
        return len(self.scores)


def load_lexicon(path, threshold: float = 0.5) -> Lexicon:
    """Parse a SentiWordNet 3.0 style TSV into a Lexicon.

    Columns: POS, ID, PosScore, NegScore, SynsetTerms, Gloss. Sense
    suffixes ("#k") are stripped; a term seen in several rows or senses
    keeps the max score per polarity. Malformed rows are skipped with a
    warning count; an unreadable file raises.
    """
    lex = Lexicon(threshold=threshold)
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 5:
                lex.skipped_rows += 1
                continue
            try:
                pos_score = float(parts[2])
                neg_score = float(parts[3])
            except ValueError:
                lex.skipped_rows += 1
                continue
            for term_entry in parts[4].split():
                term = term_entry.rsplit("#", 1)[0].lower()
                if not term:
                    continue
                old_p, old_n = lex.scores.get(term, (0.0, 0.0))
                lex.scores[term] = (max(old_p, pos_score), max(old_n, neg_score))
    if lex.skipped_rows:
        warnings.warn(f"lexicon: skipped {lex.skipped_rows} malformed rows")
    return lex


def tag_sentiment(sentence: TokenizedSentence, lexicon: Lexicon) -> list[bool]:
    """Flag tokens whose max(pos, neg) lexicon score clears the threshold."""
    sentence.sentiment_flags = [lexicon.is_sentiment_word(t) for t in sentence.tokens]
    return sentence.sentiment_flags


def sentiment_proportion(sentence: TokenizedSentence) -> float:
    if sentence.n == 0:
        return 0.0
    return sentence.sentiment_count() / sentence.n


class CorpusStore:
    """Ordered collection of tokenized sentences with dense integer ids."""

    def __init__(self, sentences: list[TokenizedSentence]):
        self.sentences = list(sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    def __getitem__(self, i: int) -> TokenizedSentence:
        return self.sentences[i]

    def __iter__(self):
        return iter(self.sentences)


def load_corpus(path, lexicon: Lexicon | None = None,
                max_len: int = MAX_SEQ_LEN) -> CorpusStore:
    """One sentence per line, UTF-8; empty lines are dropped."""
    sentences = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            s = tokenize(line, max_len)
            if s.n == 0:
                continue
            if lexicon is not None:
                tag_sentiment(s, lexicon)
            sentences.append(s)
    return CorpusStore(sentences)


def filter_corpus(store: CorpusStore, lo: float, hi: float) -> CorpusStore:
    """Keep sentences whose sentiment proportion lies in [lo, hi]."""
    if lo > hi:
        raise ValueError("lo must be <= hi")
    return CorpusStore([s for s in store if lo <= sentiment_proportion(s) <= hi])


@dataclass(frozen=True)
class TaskSpec:
    """A classification task: sentence- or aspect-level."""

    kind: str  # "sentence" | "aspect"
    num_classes: int
    max_epochs: int = 4
    learning_rate: float = 2e-5

    def __post_init__(self):
        if self.kind not in ("sentence", "aspect"):
            raise ValueError(f"unknown task kind: {self.kind}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")


@dataclass
class ClassifiedExample:
    text: str
    label: int
    aspect: str | None = None


def load_classification_dataset(path, task: TaskSpec) -> list[ClassifiedExample]:
    """TSV loader: "text<TAB>label" or "aspect<TAB>text<TAB>label"."""
    expected_cols = 2 if task.kind == "sentence" else 3
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != expected_cols:
                raise ValueError(f"{path}:{lineno}: expected {expected_cols} columns, got {len(cols)}")
            label = int(cols[-1])
            if not (0 <= label < task.num_classes):
                raise ValueError(f"{path}:{lineno}: label {label} outside 0..{task.num_classes - 1}")
            if task.kind == "sentence":
                examples.append(ClassifiedExample(text=cols[0], label=label))
            else:
                examples.append(ClassifiedExample(aspect=cols[0], text=cols[1], label=label))
    return examples
