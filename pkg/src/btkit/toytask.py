"""Synthetic language pair for end-to-end experiments.

Target language: sentences drawn from a seeded sparse first-order Markov
chain over pseudo-words, with Zipfian starts/jumps, so a larger LM training
sample genuinely improves next-word prediction. Source language: each target
word maps through a many-to-one dictionary (synonym groups share one source
word), then adjacent tokens swap with a fixed probability. Translating
source to target therefore requires context to pick the right group member,
which is exactly the headroom that back-translated target-side data can buy.

Everything is deterministic given the seed. The generator is the documented
data process for the shipped toy experiments; real corpora plug into the
same pipeline via the prep stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from btkit.corpus import WORD, Corpus, ParallelCorpus, Sentence, SentencePair
from btkit.errors import DataError
from btkit.rng import make_rng

_TGT_ONSETS = "b d g k l m n p r s t v z".split()
_SRC_ONSETS = "bh ch dh fh gh kh lh mh nh ph rh sh th".split()
_VOWELS = "a e i o u".split()


def _pseudo_words(n: int, onsets, rng, syllables=2) -> list[str]:
    words: list[str] = []
    seen = set()
    extra = 0
    while len(words) < n:
        parts = []
        for _ in range(syllables + extra):
            parts.append(onsets[int(rng.integers(len(onsets)))])
            parts.append(_VOWELS[int(rng.integers(len(_VOWELS)))])
        w = "".join(parts)
        if w not in seen:
            seen.add(w)
            words.append(w)
        else:
            extra = (extra + 1) % 2  # nudge length to escape collisions
    return words


@dataclass(frozen=True)
class ToyTaskConfig:
    target_vocab: int = 900
    branching: int = 5
    jump_prob: float = 0.12
    ambig_fraction: float = 0.55  # share of words living in shared-source groups
    max_group: int = 3
    swap_prob: float = 0.15
    min_len: int = 5
    max_len: int = 14

    def __post_init__(self):
        if self.target_vocab < 10:
            raise DataError("toy target vocabulary is too small")
        if not (0 <= self.ambig_fraction <= 1):
            raise DataError("ambig_fraction must lie in [0, 1]")


# Every sentence ends with an explicit terminal word (the language's full
# stop). It is the only word that precedes </s> in training data, which gives
# the n-gram LM a sharp termination signal, and its source-side image carries
# the length cue to the bag-of-words lexical model.
TGT_STOP = "eno"
SRC_STOP = "enho"


@dataclass
class ToyLanguage:
    cfg: ToyTaskConfig
    tgt_words: list[str]
    src_of: list[int]  # target word id -> source word id
    src_words: list[str]
    start_cum: np.ndarray
    succ_ids: np.ndarray  # (V, branching)
    succ_cum: np.ndarray  # (V, branching) cumulative weights


def build_language(seed: int, cfg: ToyTaskConfig) -> ToyLanguage:
    rng = make_rng(seed, "toy-language")
    v = cfg.target_vocab
    tgt_words = _pseudo_words(v, _TGT_ONSETS, rng)

    # Zipfian start/jump distribution over target words.
    ranks = np.arange(v, dtype=np.float64)
    zipf = 1.0 / (ranks + 2.0)
    zipf /= zipf.sum()
    start_cum = np.cumsum(zipf)

    succ_ids = np.empty((v, cfg.branching), dtype=np.int64)
    succ_cum = np.empty((v, cfg.branching), dtype=np.float64)
    base = 1.0 / (np.arange(cfg.branching, dtype=np.float64) + 1.0)
    for w in range(v):
        pool = rng.choice(v - 1, size=cfg.branching, replace=False)
        pool = pool + (pool >= w)  # successors exclude the word itself
        succ_ids[w] = pool
        weights = base * (0.5 + rng.random(cfg.branching))
        succ_cum[w] = np.cumsum(weights / weights.sum())

    # Synonym groups: a slice of the vocabulary shares source words.
    perm = rng.permutation(v).tolist()
    n_grouped = int(v * cfg.ambig_fraction)
    grouped, singles = perm[:n_grouped], perm[n_grouped:]
    src_of = [0] * v
    src_groups: list[list[int]] = []
    i = 0
    while i < len(grouped):
        size = int(rng.integers(2, cfg.max_group + 1))
        members = grouped[i : i + size]
        if len(members) == 1:
            singles.append(members[0])
        else:
            src_groups.append(members)
        i += size
    for w in singles:
        src_groups.append([w])
    src_words = _pseudo_words(len(src_groups), _SRC_ONSETS, rng)
    for gid, members in enumerate(src_groups):
        for w in members:
            src_of[w] = gid

    return ToyLanguage(
        cfg=cfg,
        tgt_words=tgt_words,
        src_of=src_of,
        src_words=src_words,
        start_cum=start_cum,
        succ_ids=succ_ids,
        succ_cum=succ_cum,
    )


def _sample_target_ids(lang: ToyLanguage, rng) -> list[int]:
    cfg = lang.cfg
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    ids = [int(np.searchsorted(lang.start_cum, rng.random()))]
    for _ in range(length - 1):
        if rng.random() < cfg.jump_prob:
            ids.append(int(np.searchsorted(lang.start_cum, rng.random())))
        else:
            prev = ids[-1]
            j = int(np.searchsorted(lang.succ_cum[prev], rng.random()))
            ids.append(int(lang.succ_ids[prev][min(j, lang.cfg.branching - 1)]))
    return ids


def _derive_source(lang: ToyLanguage, tgt_ids: list[int], rng) -> list[str]:
    src = [lang.src_words[lang.src_of[w]] for w in tgt_ids]
    i = 0
    while i < len(src) - 1:  # one left-to-right pass of adjacent swaps
        if rng.random() < lang.cfg.swap_prob:
            src[i], src[i + 1] = src[i + 1], src[i]
            i += 2
        else:
            i += 1
    return src


def sample_pair(lang: ToyLanguage, rng) -> SentencePair:
    tgt_ids = _sample_target_ids(lang, rng)
    tgt = Sentence(tuple(lang.tgt_words[w] for w in tgt_ids) + (TGT_STOP,), WORD)
    src = Sentence(tuple(_derive_source(lang, tgt_ids, rng)) + (SRC_STOP,), WORD)
    return SentencePair(src, tgt)


@dataclass
class ToyData:
    bitext: ParallelCorpus
    mono: Corpus  # target-language monolingual sentences
    dev: ParallelCorpus
    test: ParallelCorpus


def generate_toy_task(
    seed: int,
    n_bitext: int = 10_000,
    n_mono: int = 50_000,
    n_dev: int = 1_000,
    n_test: int = 1_000,
    cfg: ToyTaskConfig | None = None,
) -> ToyData:
    cfg = cfg or ToyTaskConfig()
    lang = build_language(seed, cfg)

    def draw_pairs(n, stream):
        rng = make_rng(seed, "toy-draw", stream)
        return [sample_pair(lang, rng) for _ in range(n)]

    bitext = ParallelCorpus(draw_pairs(n_bitext, "bitext"), src_side="src", tgt_side="tgt")
    dev = ParallelCorpus(draw_pairs(n_dev, "dev"), src_side="src", tgt_side="tgt")
    test = ParallelCorpus(draw_pairs(n_test, "test"), src_side="src", tgt_side="tgt")
    mono_rng = make_rng(seed, "toy-draw", "mono")
    mono_sents = [
        Sentence(tuple(lang.tgt_words[w] for w in _sample_target_ids(lang, mono_rng)), WORD)
        for _ in range(n_mono)
    ]
    return ToyData(bitext=bitext, mono=Corpus(mono_sents, side="tgt"), dev=dev, test=test)
