"""Corpus ingestion: SNLI-format files, tokenization, vocabulary, embeddings, batching."""
from __future__ import annotations

import json
import logging
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .head import LABEL_NAMES, NliLabel

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
_PUNCT = frozenset(string.punctuation)


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class NliExample:
    """Tokenized premise/hypothesis pair. Ids are resolved against a Vocab at batching time."""

    premise: tuple[str, ...]
    hypothesis: tuple[str, ...]
    label: NliLabel

    def __post_init__(self):
        if not self.premise or not self.hypothesis:
            raise DataError("premise and hypothesis must be non-empty")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation off as one-char tokens."""
    if not text:
        return []
    out: list[str] = []
    for word in text.lower().split():
        lo, hi = 0, len(word)
        while lo < hi and word[lo] in _PUNCT:
            lo += 1
        while hi > lo and word[hi - 1] in _PUNCT:
            hi -= 1
        out.extend(word[:lo])
        if lo < hi:
            out.append(word[lo:hi])
        out.extend(word[hi:])
    return out or [UNK]


# -- SNLI files -----------------------------------------------------------------
def parse_snli(path: str | Path) -> tuple[list[NliExample], int]:
    """Read line-delimited SNLI records. Returns (examples, number skipped for '-')."""
    examples: list[NliExample] = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                s1, s2, gold = rec["sentence1"], rec["sentence2"], rec["gold_label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed record ({exc})") from None
            if gold == "-":
                skipped += 1
                continue
            if gold not in LABEL_NAMES:
                raise DataError(f"{path}:{lineno}: unknown gold_label {gold!r}")
            p, h = tokenize(s1), tokenize(s2)
            if not p or not h:
                raise DataError(f"{path}:{lineno}: empty sentence")
            examples.append(NliExample(tuple(p), tuple(h), LABEL_NAMES[gold]))
    return examples, skipped


def write_snli(path: str | Path, examples: Iterable[NliExample]) -> None:
    names = {v: k for k, v in LABEL_NAMES.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {"sentence1": " ".join(ex.premise), "sentence2": " ".join(ex.hypothesis),
                   "gold_label": names[ex.label]}
            fh.write(json.dumps(rec) + "\n")


# -- vocabulary -----------------------------------------------------------------
@dataclass
class Vocab:
    itos: list[str] = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        if self.itos[:2] != [PAD, UNK]:
            raise DataError("vocab must start with the padding and unknown tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("duplicate tokens in vocab")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > UNK_ID

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def ids(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]


def build_vocab(corpus: Iterable[NliExample | Sequence[str]], min_count: int = 1) -> Vocab:
    """Ids by descending frequency, ties broken lexicographically."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for item in corpus:
        if isinstance(item, NliExample):
            counts.update(item.premise)
            counts.update(item.hypothesis)
        else:
            counts.update(item)
    for reserved in (PAD, UNK):
        counts.pop(reserved, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab([PAD, UNK] + kept)


# -- embeddings -----------------------------------------------------------------
@dataclass
class EmbeddingTable:
    matrix: np.ndarray  # (|V|, e); row 0 is padding and stays zero
    pretrained: np.ndarray  # bool per row
    trainable: bool = False
    duplicates: int = 0

    @property
    def coverage(self) -> tuple[int, int]:
        """(pretrained rows, real-token rows), reserved rows excluded."""
        return int(self.pretrained[2:].sum()), self.matrix.shape[0] - 2


def random_embeddings(vocab: Vocab, e: int, seed: int, trainable: bool = True) -> EmbeddingTable:
    """Standard-normal table for training from scratch (no pretrained file)."""
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((len(vocab), e))
    mat[PAD_ID] = 0.0
    return EmbeddingTable(mat, np.zeros(len(vocab), dtype=bool), trainable)


def load_embeddings(path: str | Path, vocab: Vocab, e: int, seed: int = 0,
                    trainable: bool = False) -> EmbeddingTable:
    """Text vectors, one 'token v1 .. ve' per line. Tokens missing from the file get U(-0.1, 0.1)."""
    rng = np.random.default_rng(seed)
    mat = rng.uniform(-0.1, 0.1, size=(len(vocab), e))
    mat[PAD_ID] = 0.0
    table = EmbeddingTable(mat, np.zeros(len(vocab), dtype=bool), trainable)
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != e:
                raise DataError(f"{path}:{lineno}: expected {e} values for {token!r}, got {len(values)}")
            if token not in vocab:
                continue
            if token in seen:
                table.duplicates += 1
            seen.add(token)
            row = vocab.id(token)
            table.matrix[row] = [float(v) for v in values]
            table.pretrained[row] = True
    if table.duplicates:
        log.warning("%s: %d duplicate tokens, last occurrence kept", path, table.duplicates)
    return table


# -- batching -------------------------------------------------------------------
@dataclass
class NliBatch:
    premise: np.ndarray  # (B, Tp) int ids, PAD_ID past each length
    premise_mask: np.ndarray  # (B, Tp) bool
    hypothesis: np.ndarray
    hypothesis_mask: np.ndarray
    labels: np.ndarray  # (B,)

    def __len__(self):
        return len(self.labels)


def pad_ids(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for r, s in enumerate(seqs):
        ids[r, : len(s)] = s
        mask[r, : len(s)] = True
    return ids, mask


def collate(examples: Sequence[NliExample], vocab: Vocab) -> NliBatch:
    p, pm = pad_ids([vocab.ids(ex.premise) for ex in examples])
    h, hm = pad_ids([vocab.ids(ex.hypothesis) for ex in examples])
    labels = np.array([int(ex.label) for ex in examples], dtype=np.int64)
    return NliBatch(p, pm, h, hm, labels)


def make_batches(examples: Sequence[NliExample], vocab: Vocab, batch_size: int,
                 seed: int | None) -> list[NliBatch]:
    """Shuffle with ``seed`` (None keeps order) and pad each batch to its own max length."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(examples)) if seed is None else np.random.default_rng(seed).permutation(len(examples))
    return [collate([examples[i] for i in order[k:k + batch_size]], vocab)
            for k in range(0, len(order), batch_size)]


# -- synthetic NLI --------------------------------------------------------------
CONTENT_TOKENS = tuple(f"a{i:02d}" for i in range(40))
DISTRACTOR_TOKENS = tuple(f"b{i}" for i in range(10))


def _ordered_subsequence(rng, premise, k):
    pos = np.sort(rng.choice(len(premise), size=k, replace=False))
    return [premise[i] for i in pos]


def gen_toy_nli(seed: int, count: int) -> list[NliExample]:
    """Separable stand-in for SNLI over 40 content and 10 distractor tokens.

    entailment: hypothesis is an ordered 2-4 token subsequence of the premise;
    contradiction: the same with one token swapped for a distractor;
    neutral: 2-4 content tokens drawn without looking at the premise.
    """
    if count < 3:
        raise ValueError("count must be >= 3")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(count) % 3)
    out = []
    for lab in labels:
        n = int(rng.integers(4, 9))
        premise = [CONTENT_TOKENS[i] for i in rng.choice(40, size=n, replace=False)]
        k = int(rng.integers(2, 5))
        if lab == NliLabel.NEUTRAL:
            hyp = [CONTENT_TOKENS[i] for i in rng.choice(40, size=k, replace=False)]
        else:
            hyp = _ordered_subsequence(rng, premise, k)
            if lab == NliLabel.CONTRADICTION:
                hyp[int(rng.integers(k))] = DISTRACTOR_TOKENS[int(rng.integers(10))]
        out.append(NliExample(tuple(premise), tuple(hyp), NliLabel(int(lab))))
    return out
