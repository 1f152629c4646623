"""Joint byte-pair encoding: learn, apply, reverse.

Merges are learned greedily over a joint word-frequency table (all corpora
pooled), most frequent pair first, ties broken by lexicographic order of the
(left, right) symbol pair. The end-of-word marker is attached to each word's
final character before merging, which makes segmentation exactly reversible.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from btkit.corpus import SUBWORD, WORD, Corpus, ParallelCorpus, Sentence, SentencePair
from btkit.errors import DataError

END_OF_WORD = "</w>"


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    vocab: set[str]
    _ranks: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _cache: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        if len(self._ranks) != len(self.merges):
            raise DataError("duplicate merge in BPE model")

    @property
    def num_ops(self) -> int:
        return len(self.merges)

    def encode_word(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        syms = _word_symbols(word)
        while len(syms) > 1:
            best_rank = None
            best_pair = None
            for i in range(len(syms) - 1):
                rank = self._ranks.get((syms[i], syms[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = (syms[i], syms[i + 1])
            if best_pair is None:
                break
            syms = _merge_in_word(syms, best_pair)
        result = tuple(syms)
        self._cache[word] = result
        return result


def _word_symbols(word: str) -> list[str]:
    if END_OF_WORD in word:
        raise DataError(f"token contains the reserved end-of-word marker: {word!r}")
    chars = list(word)
    chars[-1] = chars[-1] + END_OF_WORD
    return chars


def _merge_in_word(syms: list[str], pair: tuple[str, str]) -> list[str]:
    left, right = pair
    merged = left + right
    out: list[str] = []
    i = 0
    n = len(syms)
    while i < n:
        if i < n - 1 and syms[i] == left and syms[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def _word_frequencies(corpora) -> Counter:
    freq: Counter = Counter()
    for corpus in corpora:
        if isinstance(corpus, ParallelCorpus):
            for p in corpus.pairs:
                _require_words(p.source)
                _require_words(p.target)
                freq.update(p.source.tokens)
                freq.update(p.target.tokens)
        else:
            for s in corpus.sentences:
                _require_words(s)
                freq.update(s.tokens)
    return freq


def _require_words(s: Sentence) -> None:
    if s.level != WORD:
        raise DataError("BPE expects word-level input")


def learn_bpe(corpora, num_ops: int) -> BpeModel:
    """Learn `num_ops` merges jointly over all given corpora.

    Pair counts are maintained incrementally (only words containing the
    merged pair are re-counted), with a lazy max-heap keyed by
    (-count, pair) so tie-breaking is lexicographic on the pair.
    """
    if num_ops < 0:
        raise DataError("num_ops must be >= 0")
    word_freq = _word_frequencies(corpora)
    words = []  # (symbol list, freq) per distinct word
    for word in word_freq:
        words.append([_word_symbols(word), word_freq[word]])

    pair_counts: dict[tuple[str, str], int] = defaultdict(int)
    pair_where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, (syms, freq) in enumerate(words):
        for i in range(len(syms) - 1):
            pair = (syms[i], syms[i + 1])
            pair_counts[pair] += freq
            pair_where[pair].add(wi)

    heap = [(-c, pair) for pair, c in pair_counts.items()]
    heapq.heapify(heap)
    merges: list[tuple[str, str]] = []
    merged_set: set[tuple[str, str]] = set()

    def push(pair):
        c = pair_counts[pair]
        if c > 0:
            heapq.heappush(heap, (-c, pair))

    while len(merges) < num_ops and heap:
        neg_c, pair = heapq.heappop(heap)
        if pair in merged_set or pair_counts.get(pair, 0) != -neg_c or -neg_c <= 0:
            continue  # stale heap entry
        merges.append(pair)
        merged_set.add(pair)
        touched: set[tuple[str, str]] = set()
        for wi in list(pair_where[pair]):
            syms, freq = words[wi]
            for i in range(len(syms) - 1):
                old = (syms[i], syms[i + 1])
                pair_counts[old] -= freq
                pair_where[old].discard(wi)
                touched.add(old)
            new_syms = _merge_in_word(syms, pair)
            words[wi][0] = new_syms
            for i in range(len(new_syms) - 1):
                new = (new_syms[i], new_syms[i + 1])
                pair_counts[new] += freq
                pair_where[new].add(wi)
                touched.add(new)
        for p in touched:
            if p not in merged_set:
                push(p)

    vocab: set[str] = set()
    for syms, _freq in words:
        vocab.update(syms)
    for word in word_freq:
        vocab.update(_word_symbols(word))  # single-character fallback units
    return BpeModel(merges=merges, vocab=vocab)


def apply_bpe(model: BpeModel, s: Sentence) -> Sentence:
    """Segment a word-level sentence into subword units."""
    _require_words(s)
    out: list[str] = []
    for word in s.tokens:
        out.extend(model.encode_word(word))
    return Sentence(tuple(out), SUBWORD)


def reverse_bpe_ex(s: Sentence) -> tuple[Sentence, int]:
    """Undo BPE segmentation; returns (sentence, dangling-unit warning count).

    A final unit without the end-of-word marker is treated as a word end and
    counted as a warning.
    """
    if s.level != SUBWORD:
        raise DataError("reverse_bpe expects subword-level input")
    words: list[str] = []
    buf: list[str] = []
    warnings = 0
    for unit in s.tokens:
        if unit.endswith(END_OF_WORD):
            buf.append(unit[: -len(END_OF_WORD)])
            words.append("".join(buf))
            buf = []
        else:
            buf.append(unit)
    if buf:
        words.append("".join(buf))
        warnings += 1
    return Sentence(tuple(w for w in words if w), WORD), warnings


def reverse_bpe(s: Sentence) -> Sentence:
    return reverse_bpe_ex(s)[0]


def apply_bpe_corpus(model: BpeModel, corpus):
    if isinstance(corpus, ParallelCorpus):
        return corpus.with_items(
            [SentencePair(apply_bpe(model, p.source), apply_bpe(model, p.target)) for p in corpus.pairs]
        )
    return corpus.with_items([apply_bpe(model, s) for s in corpus.sentences])


def reverse_bpe_corpus(corpus):
    if isinstance(corpus, ParallelCorpus):
        return corpus.with_items(
            [SentencePair(reverse_bpe(p.source), reverse_bpe(p.target)) for p in corpus.pairs]
        )
    return corpus.with_items([reverse_bpe(s) for s in corpus.sentences])


def write_merges(model: BpeModel, path) -> None:
    """Merges file: one "left right" per line, in merge-priority order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for left, right in model.merges:
            fh.write(f"{left} {right}\n")


def read_merges(path) -> BpeModel:
    merges = []
    vocab: set[str] = set()
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            cols = line.rstrip("\n").split(" ")
            if len(cols) != 2:
                raise DataError(f"{path}:{lineno}: expected 'left right'")
            merges.append((cols[0], cols[1]))
            vocab.add(cols[0])
            vocab.add(cols[1])
            vocab.add(cols[0] + cols[1])
    return BpeModel(merges=merges, vocab=vocab)
