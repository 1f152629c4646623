"""Corpora: tokenization, filtering, dedup, subsampling, and splits.

Sentences are immutable token tuples tagged with a granularity level (word or
subword). Corpora come in two kinds: monolingual (Corpus) and parallel
(ParallelCorpus); both preserve sentence order across all operations and
serialization round-trips.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from btkit.errors import DataError

WORD = "word"
SUBWORD = "subword"


def _check_tokens(tokens: Sequence[str]) -> None:
    for tok in tokens:
        if not tok:
            raise DataError("empty token in sentence")
        for ch in tok:
            if ch.isspace():
                raise DataError(f"token contains whitespace: {tok!r}")


@dataclass(frozen=True, slots=True)
class Sentence:
    tokens: tuple[str, ...]
    level: str = WORD

    def __post_init__(self):
        if self.level not in (WORD, SUBWORD):
            raise DataError(f"bad granularity level: {self.level!r}")
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))
        _check_tokens(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True, slots=True)
class SentencePair:
    source: Sentence
    target: Sentence

    def __post_init__(self):
        if self.source.level != self.target.level:
            raise DataError("source/target granularity mismatch in pair")

    @property
    def level(self) -> str:
        return self.source.level


@dataclass
class Corpus:
    """Monolingual corpus: an ordered list of sentences plus a side label."""

    sentences: list[Sentence]
    side: str = ""

    @property
    def items(self) -> list:
        return self.sentences

    def with_items(self, items: list) -> "Corpus":
        return Corpus(list(items), side=self.side)

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass
class ParallelCorpus:
    """Parallel corpus: ordered sentence pairs plus source/target side labels."""

    pairs: list[SentencePair]
    src_side: str = ""
    tgt_side: str = ""

    @property
    def items(self) -> list:
        return self.pairs

    def with_items(self, items: list) -> "ParallelCorpus":
        return ParallelCorpus(list(items), src_side=self.src_side, tgt_side=self.tgt_side)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def source_corpus(self) -> Corpus:
        return Corpus([p.source for p in self.pairs], side=self.src_side)

    def target_corpus(self) -> Corpus:
        return Corpus([p.target for p in self.pairs], side=self.tgt_side)

    def swapped(self) -> "ParallelCorpus":
        """Reverse translation direction (for back-translation training)."""
        return ParallelCorpus(
            [SentencePair(p.target, p.source) for p in self.pairs],
            src_side=self.tgt_side,
            tgt_side=self.src_side,
        )


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(raw_line: str) -> Sentence:
    """Whitespace tokenizer that peels leading/trailing punctuation.

    Punctuation characters (unicode category P*) at the edges of a chunk
    become single-character tokens; interior punctuation stays attached
    ("don't", "a-b"). Empty input yields an empty sentence.
    """
    tokens: list[str] = []
    for chunk in raw_line.split():
        lead: list[str] = []
        i, j = 0, len(chunk)
        while i < j and _is_punct(chunk[i]):
            lead.append(chunk[i])
            i += 1
        trail: list[str] = []
        while j > i and _is_punct(chunk[j - 1]):
            trail.append(chunk[j - 1])
            j -= 1
        tokens.extend(lead)
        if i < j:
            tokens.append(chunk[i:j])
        tokens.extend(reversed(trail))
    return Sentence(tuple(tokens), WORD)


@dataclass(frozen=True)
class FilterConfig:
    max_len: int = 250
    max_ratio: float = 1.5

    def __post_init__(self):
        if self.max_len < 1:
            raise DataError("max_len must be >= 1")
        if self.max_ratio < 1.0:
            raise DataError("max_ratio must be >= 1")


def pair_passes_filter(pair: SentencePair, cfg: FilterConfig) -> bool:
    ls, lt = len(pair.source), len(pair.target)
    if ls == 0 or lt == 0:
        return False  # zero-length side counts as a ratio violation
    if max(ls, lt) > cfg.max_len:
        return False
    return max(ls / lt, lt / ls) <= cfg.max_ratio


def filter_pairs(corpus: ParallelCorpus, cfg: FilterConfig) -> ParallelCorpus:
    """Drop over-long pairs and pairs with an extreme length ratio."""
    return corpus.with_items([p for p in corpus.pairs if pair_passes_filter(p, cfg)])


def _dedup_key(item):
    if isinstance(item, SentencePair):
        return (item.source.tokens, item.target.tokens)
    return item.tokens


def dedup(corpus):
    """Keep the first occurrence of each exact sentence (or pair)."""
    seen = set()
    kept = []
    for item in corpus.items:
        key = _dedup_key(item)
        if key not in seen:
            seen.add(key)
            kept.append(item)
    return corpus.with_items(kept)


def subsample(corpus, n: int, seed: int):
    """Uniform sample of n items without replacement; original order kept."""
    size = len(corpus.items)
    if n < 0 or n > size:
        raise DataError(f"cannot subsample {n} of {size} sentences")
    rng = np.random.default_rng(seed)
    idx = sorted(rng.choice(size, size=n, replace=False).tolist())
    items = corpus.items
    return corpus.with_items([items[i] for i in idx])


def split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """floor(f_i * n) per part, remainder assigned to part 2 (the middle)."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise DataError("fractions must be three nonnegative reals")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {sum(fractions)!r}")
    sizes = [math.floor(f * n) for f in fractions]
    sizes[1] += n - sum(sizes)
    return tuple(sizes)  # type: ignore[return-value]


def three_way_split(corpus, fractions: tuple[float, float, float], seed: int):
    """Disjoint covering three-way split, deterministic given seed.

    Sizes are floor(f_i * N) with the remainder going to part 2, mirroring
    the middle (largest) share of the analysis protocol this supports.
    Original order is preserved within each part.
    """
    n = len(corpus.items)
    n1, n2, n3 = split_sizes(n, fractions)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    parts_idx = (
        sorted(perm[:n1].tolist()),
        sorted(perm[n1 : n1 + n2].tolist()),
        sorted(perm[n1 + n2 :].tolist()),
    )
    items = corpus.items
    return tuple(corpus.with_items([items[i] for i in idx]) for idx in parts_idx)


# ---------------------------------------------------------------------------
# File I/O. Monolingual: UTF-8, one sentence per line, LF endings.
# Parallel: TSV "source<TAB>target".


def read_mono(path, side: str = "", level: str = WORD) -> Corpus:
    sentences = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for line in fh:
            sentences.append(Sentence(tuple(line.rstrip("\n").split()), level))
    return Corpus(sentences, side=side)


def write_mono(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in corpus.sentences:
            fh.write(s.text() + "\n")


def read_parallel(path, src_side: str = "", tgt_side: str = "", level: str = WORD) -> ParallelCorpus:
    pairs = []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            cols = line.split("\t")
            if len(cols) < 2:
                raise DataError(f"{path}:{lineno}: expected source<TAB>target")
            pairs.append(
                SentencePair(
                    Sentence(tuple(cols[0].split()), level),
                    Sentence(tuple(cols[1].split()), level),
                )
            )
    return ParallelCorpus(pairs, src_side=src_side, tgt_side=tgt_side)


def write_parallel(corpus: ParallelCorpus, path, extra: Iterable[str] | None = None) -> None:
    """Write TSV pairs; `extra` optionally adds a third column per line."""
    extras = list(extra) if extra is not None else None
    if extras is not None and len(extras) != len(corpus.pairs):
        raise DataError("extra column length mismatch")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, p in enumerate(corpus.pairs):
            line = p.source.text() + "\t" + p.target.text()
            if extras is not None:
                line += "\t" + extras[i]
            fh.write(line + "\n")


def parallel_from_sides(src: Corpus, tgt: Corpus) -> ParallelCorpus:
    if len(src) != len(tgt):
        raise DataError("side length mismatch when zipping corpora")
    return ParallelCorpus(
        [SentencePair(s, t) for s, t in zip(src.sentences, tgt.sentences)],
        src_side=src.side,
        tgt_side=tgt.side,
    )
