"""N-gram language model with interpolated Kneser-Ney smoothing.

Counting is prediction-event based: for each sentence the events are its
tokens plus </s>, contexts are padded with a begin sentinel, and every order
1..n is counted per event. The begin sentinel is conditioned on but never
predicted, which keeps every conditional distribution normalized over the
vocabulary.

Estimation uses absolute discounting with interpolation. The top order is
estimated from raw event counts, lower orders from continuation counts
(number of distinct left extensions), and the recursion bottoms out in the
undiscounted unigram continuation distribution; a uniform 1/|V| floor is used
below that (degenerate counts, or order-1 models, where the raw unigram
distribution is discounted against the floor).

Tokens whose training unigram count is zero are mapped to <unk> at query
time. <unk> receives real counts when the training corpus is counted with
replace_singletons (singleton word types fold into <unk>).
"""

from __future__ import annotations

import math
from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from btkit import _kernels
from btkit.corpus import Corpus, Sentence
from btkit.errors import DataError
from btkit.vocab import BOS, EOS_ID, UNK, UNK_ID, Vocabulary

DEFAULT_DISCOUNT = 0.75
_DENSE_CACHE_CAP = 4096


@dataclass
class NgramCounts:
    """Exact event counts per order; counts[k-1] maps k-gram id tuples to ints."""

    order: int
    counts: list[dict[tuple[int, ...], int]]
    vocab: Vocabulary
    bos: bool = True
    eos: bool = True

    def total_events(self) -> int:
        return sum(self.counts[0].values())


def replace_singletons(corpus: Corpus) -> Corpus:
    """Replace word types occurring exactly once with the <unk> literal."""
    freq: Counter = Counter()
    for s in corpus.sentences:
        freq.update(s.tokens)
    out = []
    for s in corpus.sentences:
        toks = tuple(UNK if freq[t] == 1 else t for t in s.tokens)
        out.append(Sentence(toks, s.level))
    return Corpus(out, side=corpus.side)


def count_ngrams(
    corpus: Corpus,
    n: int,
    vocab: Vocabulary | None = None,
    bos: bool = True,
    eos: bool = True,
) -> NgramCounts:
    """Count all 1..n-gram prediction events.

    With bos, contexts are left-padded with the begin sentinel; with eos,
    </s> is appended as a final event. Both off reproduces plain windowed
    counting over the raw token sequence.
    """
    if n < 1:
        raise DataError("ngram order must be >= 1")
    if vocab is None:
        vocab = Vocabulary.from_sentences(corpus.sentences)
    bos_id = vocab.bos_id
    tables: list[dict[tuple[int, ...], int]] = [{} for _ in range(n)]
    for s in corpus.sentences:
        ids = list(vocab.ids(s.tokens))
        if eos:
            ids.append(EOS_ID)
        if bos:
            padded = [bos_id] * (n - 1) + ids
            start = n - 1
        else:
            padded = ids
            start = 0
        for pos in range(start, len(padded)):
            hi = pos + 1
            for k in range(1, min(n, pos + 1) + 1):
                gram = tuple(padded[hi - k : hi])
                tab = tables[k - 1]
                tab[gram] = tab.get(gram, 0) + 1
    return NgramCounts(order=n, counts=tables, vocab=vocab, bos=bos, eos=eos)


@dataclass
class NgramLm:
    order: int
    discount: float
    vocab: Vocabulary
    unigram: np.ndarray  # dense base distribution over the vocabulary
    ctx_tables: list[dict]  # per order 2..n: context -> (ids, vals, gamma)
    known: set[int]  # ids with nonzero training count
    bos_trained: bool = True
    eos_trained: bool = True
    counts: "NgramCounts | None" = None  # retained for serialization
    _dense_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def map_id(self, i: int) -> int:
        return i if i in self.known else UNK_ID

    def map_ids(self, ids) -> tuple[int, ...]:
        known = self.known
        return tuple(i if i in known else UNK_ID for i in ids)

    def _chain(self, ctx_ids: tuple[int, ...]):
        """Backoff chain (longest observed suffix first is the last element)."""
        tabs = []
        for k in range(2, self.order + 1):
            h = ctx_ids[len(ctx_ids) - (k - 1) :] if k > 1 else ()
            if len(h) < k - 1:
                break
            tab = self.ctx_tables[k - 2].get(h)
            if tab is None:
                break
            tabs.append(tab)
        return tabs

    def dense(self, ctx_ids: tuple[int, ...]) -> np.ndarray:
        """Conditional distribution vector P(.|ctx). Treat as read-only."""
        tabs = self._chain(ctx_ids)
        key = ctx_ids[len(ctx_ids) - len(tabs) :] if tabs else ()
        cached = self._dense_cache.get(key)
        if cached is not None:
            self._dense_cache.move_to_end(key)
            return cached
        vec = self.unigram.copy()
        for ids, vals, gamma in tabs:
            _kernels.scale_sparse_add(vec, gamma, ids, vals)
        self._dense_cache[key] = vec
        if len(self._dense_cache) > _DENSE_CACHE_CAP:
            self._dense_cache.popitem(last=False)
        return vec

    def prob_id(self, w: int, ctx_ids: tuple[int, ...]) -> float:
        p = float(self.unigram[w])
        for ids, vals, gamma in self._chain(ctx_ids):
            pos = int(np.searchsorted(ids, w))
            part = float(vals[pos]) if pos < len(ids) and ids[pos] == w else 0.0
            p = part + gamma * p
        return p

    def prob(self, token: str, context) -> float:
        """P(token | context tokens); context shorter than order-1 is fine."""
        w = self.map_id(self.vocab.id(token))
        ctx = self.map_ids(self.vocab.ids(context))
        ctx = self._pad(ctx)
        return self.prob_id(w, ctx)

    def _pad(self, ctx: tuple[int, ...]) -> tuple[int, ...]:
        need = self.order - 1
        if len(ctx) >= need:
            return ctx[len(ctx) - need :]
        if self.bos_trained:
            return (self.vocab.bos_id,) * (need - len(ctx)) + ctx
        return ctx

    def logprob_ids(self, ids) -> float:
        ids = self.map_ids(ids)
        seq = list(ids) + ([EOS_ID] if self.eos_trained else [])
        ctx: tuple[int, ...] = ()
        total = 0.0
        for w in seq:
            p = self.prob_id(w, self._pad(ctx))
            if p <= 0.0:
                return -math.inf
            total += math.log(p)
            ctx = ctx + (w,)
        return total


def estimate_kn(counts: NgramCounts, discount: float = DEFAULT_DISCOUNT) -> NgramLm:
    """Interpolated Kneser-Ney estimation with a fixed discount."""
    if not (0.0 < discount < 1.0):
        raise DataError("discount must be in (0, 1)")
    n = counts.order
    vocab = counts.vocab
    v_size = len(vocab)

    # Numerator tables: raw counts at the top order, continuation counts
    # (distinct left extensions, derived from the raw counts one order up)
    # below it.
    numerators: list[dict[tuple[int, ...], float]] = [dict() for _ in range(n)]
    numerators[n - 1] = {g: float(c) for g, c in counts.counts[n - 1].items()}
    for k in range(n - 1, 0, -1):
        cont: dict[tuple[int, ...], float] = {}
        for gram in counts.counts[k]:  # raw (k+1)-grams
            suffix = gram[1:]
            cont[suffix] = cont.get(suffix, 0.0) + 1.0
        numerators[k - 1] = cont

    unigram = np.zeros(v_size, dtype=np.float64)
    if n == 1:
        total = float(sum(numerators[0].values()))
        if total > 0.0:
            types = float(len(numerators[0]))
            floor_mass = discount * types / total / v_size
            unigram += floor_mass
            for (w,), c in numerators[0].items():
                unigram[w] += max(c - discount, 0.0) / total
        else:
            unigram += 1.0 / v_size
    else:
        total = float(sum(numerators[0].values()))
        if total > 0.0:
            for (w,), c in numerators[0].items():
                unigram[w] = c / total
        else:
            unigram += 1.0 / v_size

    ctx_tables: list[dict] = []
    for k in range(2, n + 1):
        by_ctx: dict[tuple[int, ...], list] = {}
        for gram, c in numerators[k - 1].items():
            by_ctx.setdefault(gram[:-1], []).append((gram[-1], c))
        table: dict[tuple[int, ...], tuple] = {}
        for h, entries in by_ctx.items():
            entries.sort()
            den = sum(c for _w, c in entries)
            if den <= 0.0:
                continue
            ids = np.array([w for w, _c in entries], dtype=np.int32)
            vals = np.array(
                [max(c - discount, 0.0) / den for _w, c in entries], dtype=np.float64
            )
            gamma = discount * len(entries) / den
            table[h] = (ids, vals, gamma)
        ctx_tables.append(table)

    known = {g[0] for g in counts.counts[0]}
    return NgramLm(
        order=n,
        discount=discount,
        vocab=vocab,
        unigram=unigram,
        ctx_tables=ctx_tables,
        known=known,
        bos_trained=counts.bos,
        eos_trained=counts.eos,
        counts=counts,
    )


def train_kn_lm(
    corpus: Corpus,
    order: int = 5,
    discount: float = DEFAULT_DISCOUNT,
    unk_singletons: bool = True,
) -> NgramLm:
    """Count + estimate in one step (the pipeline entry point)."""
    if unk_singletons:
        corpus = replace_singletons(corpus)
    return estimate_kn(count_ngrams(corpus, order), discount)


def lm_logprob(lm: NgramLm, s: Sentence) -> float:
    """Natural-log probability of a sentence including </s>; OOV -> <unk>."""
    return lm.logprob_ids(lm.vocab.ids(s.tokens))


def perplexity(lm: NgramLm, corpus: Corpus) -> float:
    if len(corpus) == 0:
        raise DataError("perplexity of an empty corpus is undefined")
    total_lp = 0.0
    total_tokens = 0
    per_sentence_eos = 1 if lm.eos_trained else 0
    for s in corpus.sentences:
        total_lp += lm_logprob(lm, s)
        total_tokens += len(s.tokens) + per_sentence_eos
    if total_tokens == 0:
        raise DataError("perplexity over zero tokens is undefined")
    return math.exp(-total_lp / total_tokens)


# ---------------------------------------------------------------------------
# Plain-text serialization: "order tok1 ... tokk count" rows.

COUNTS_FORMAT_VERSION = "btkit-ngram-counts v1"


def write_counts(counts: NgramCounts, path) -> None:
    vocab = counts.vocab
    if BOS in vocab:
        raise DataError("corpus token collides with the begin-sentinel rendering")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(COUNTS_FORMAT_VERSION + "\n")
        fh.write(
            f"order={counts.order} bos={int(counts.bos)} eos={int(counts.eos)} "
            f"vocab={len(vocab)}\n"
        )
        for tok in vocab.tokens:
            fh.write(tok + "\n")
        for k in range(1, counts.order + 1):
            tab = counts.counts[k - 1]
            for gram in sorted(tab):
                toks = " ".join(vocab.token(i) for i in gram)
                fh.write(f"{k} {toks} {tab[gram]}\n")


def read_counts(path) -> NgramCounts:
    with open(path, encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != COUNTS_FORMAT_VERSION:
        raise DataError(f"{path}: not a {COUNTS_FORMAT_VERSION} file")
    meta = dict(kv.split("=", 1) for kv in lines[1].split())
    order = int(meta["order"])
    v_size = int(meta["vocab"])
    tokens = tuple(lines[2 : 2 + v_size])
    if len(tokens) != v_size or (tokens and not tokens[-1]):
        raise DataError(f"{path}: truncated vocabulary section")
    vocab = Vocabulary(tokens)
    index = dict(vocab.index)
    index[BOS] = vocab.bos_id
    tables: list[dict[tuple[int, ...], int]] = [{} for _ in range(order)]
    for line in lines[2 + v_size :]:
        if not line:
            continue
        cols = line.split(" ")
        k = int(cols[0])
        if len(cols) != k + 2:
            raise DataError(f"{path}: malformed count row: {line!r}")
        gram = tuple(index[t] for t in cols[1 : 1 + k])
        tables[k - 1][gram] = int(cols[-1])
    return NgramCounts(
        order=order,
        counts=tables,
        vocab=vocab,
        bos=bool(int(meta["bos"])),
        eos=bool(int(meta["eos"])),
    )
