"""Tokenization, vocabularies and embedding tables."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK = "<unk>"
UNK_ID = 0


class EmbeddingLoadError(ValueError):
    pass


def _keep(ch: str) -> bool:
    return ch.isalnum() or ch == "'"


def tokenize(raw: str) -> list[str]:
    """Lowercase, split on whitespace and strip punctuation from both ends of each piece.

    Apostrophes are kept so contractions like ``let's`` survive.
    """
    tokens = []
    for piece in raw.lower().split():
        start, end = 0, len(piece)
        while start < end and not _keep(piece[start]):
            start += 1
        while end > start and not _keep(piece[end - 1]):
            end -= 1
        if start < end:
            tokens.append(piece[start:end])
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(repr=False, compare=False)
    unk_id: int = UNK_ID

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        tokens = tuple(tokens)
        if not tokens or tokens[0] != UNK:
            raise ValueError(f"vocabulary must start with {UNK!r}")
        index = {tok: i for i, tok in enumerate(tokens)}
        if len(index) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        return cls(tokens, index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_count`` times, most frequent first."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for utt in corpus for tok in utt)
    counts.pop(UNK, None)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens([UNK, *kept])


def lookup(tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [vocab.index.get(tok, vocab.unk_id) for tok in tokens]


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocabulary, dim: int = 300, seed: int = 0, trainable: bool = True) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    return EmbeddingTable(rng.uniform(-0.1, 0.1, size=(len(vocab), dim)), trainable)


def load_embeddings(path: str | Path, vocab: Vocabulary, dim: int = 300, seed: int = 0,
                    trainable: bool = False) -> EmbeddingTable:
    """Read GloVe-style text vectors for the tokens in ``vocab``.

    Tokens missing from the file (``<unk>`` included) keep a seeded uniform
    [-0.1, 0.1] initialization.
    """
    table = random_embeddings(vocab, dim, seed, trainable)
    file_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split(" ")
            values = parts[1:]
            if file_dim is None:
                file_dim = len(values)
                if file_dim != dim:
                    raise EmbeddingLoadError(
                        f"{path}: dimension mismatch, file has {file_dim} values per line, expected {dim}")
            if len(values) != dim:
                raise EmbeddingLoadError(f"{path}:{lineno}: expected {dim} floats, got {len(values)}")
            row = vocab.index.get(parts[0])
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise EmbeddingLoadError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise EmbeddingLoadError(f"{path}:{lineno}: non-finite value")
            if row is not None:
                table.matrix[row] = vec
    return table
