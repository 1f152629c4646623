"""Back-translation pipeline: synthetic source generation, copy filtering,
and bitext/synthetic mixing under an upsampling rate.

back_translate draws one synthetic source per monolingual target sentence
(single sample per target; more targets beat more samples at fixed budget),
with a per-sentence rng stream derived from (seed, sentence index) so output
is independent of any sharding. For beam+noise the beam output is reversed
to word level, noised, and (when a BPE model is given) re-segmented for
training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from btkit.bpe import BpeModel, apply_bpe, reverse_bpe
from btkit.corpus import WORD, Corpus, ParallelCorpus, Sentence, SentencePair
from btkit.decode import GenerationConfig, generate
from btkit.errors import DataError
from btkit.noise import NoiseConfig, noise_sentence
from btkit.rng import make_rng

log = logging.getLogger(__name__)


@dataclass
class AugmentedDataset:
    """Bitext plus synthetic pairs (machine source, genuine target) and the
    rate at which bitext is upsampled relative to its natural share."""

    bitext: ParallelCorpus
    synthetic: ParallelCorpus
    upsample_rate: float = 1.0

    def __post_init__(self):
        if self.upsample_rate <= 0:
            raise DataError("upsample rate must be positive")

    @property
    def bitext_fraction(self) -> float:
        """Expected share of bitext per batch slot: r*B / (r*B + S)."""
        b, s = len(self.bitext), len(self.synthetic)
        if b + s == 0:
            raise DataError("cannot mix two empty corpora")
        return self.upsample_rate * b / (self.upsample_rate * b + s)


def back_translate(
    reverse_model,
    mono: Corpus,
    gen: GenerationConfig,
    noise_cfg: NoiseConfig | None = None,
    bpe_model: BpeModel | None = None,
) -> tuple[ParallelCorpus, int]:
    """Synthesize one source per target sentence; returns (pairs, n_dropped).

    Output order matches input order; a per-sentence generation failure drops
    that pair (counted), never reorders. Deterministic given gen.seed.
    """
    if gen.method == "beam_noise" and noise_cfg is None:
        raise DataError("beam_noise generation requires a noise config")
    pairs = []
    dropped = 0
    for idx, target in enumerate(mono.sentences):
        try:
            rng = make_rng(gen.seed, "backtranslate", idx)
            hyp = generate(reverse_model, target, gen, rng)
            source = Sentence(hyp.surface_tokens(), target.level)
            if gen.method == "beam_noise":
                word_source = reverse_bpe(source) if source.level != WORD else source
                noised = noise_sentence(word_source, noise_cfg, rng)
                source = apply_bpe(bpe_model, noised) if bpe_model is not None else noised
                if source.level != target.level:
                    raise DataError("noised source granularity mismatch")
            pairs.append(SentencePair(source, target))
        except DataError as exc:
            dropped += 1
            log.warning("back-translation dropped sentence %d: %s", idx, exc)
    return (
        ParallelCorpus(pairs, src_side=mono.side + "-synth", tgt_side=mono.side),
        dropped,
    )


def jaccard_unigram(a: Sentence, b: Sentence) -> float:
    """|set(a) & set(b)| / |set(a) | set(b)|; two empty sentences -> 1."""
    sa, sb = set(a.tokens), set(b.tokens)
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def filter_copies(
    pairs: ParallelCorpus, threshold: float = 0.5
) -> tuple[ParallelCorpus, ParallelCorpus, float]:
    """Split pairs into (kept, flagged source copies, copy rate).

    A pair is flagged iff the source/target unigram Jaccard similarity
    strictly exceeds the threshold.
    """
    if not (0.0 <= threshold <= 1.0):
        raise DataError("copy threshold must lie in [0, 1]")
    kept, flagged = [], []
    for p in pairs.pairs:
        if jaccard_unigram(p.source, p.target) > threshold:
            flagged.append(p)
        else:
            kept.append(p)
    rate = len(flagged) / len(pairs.pairs) if pairs.pairs else 0.0
    return pairs.with_items(kept), pairs.with_items(flagged), rate


def _pair_cost(p: SentencePair) -> int:
    return max(len(p.source), len(p.target), 1)


def combine_upsampled(ds: AugmentedDataset, batch_size: int, seed: int):
    """Infinite deterministic stream of token-budgeted training batches.

    Each batch slot comes from the bitext with probability r*B/(r*B+S), else
    from the synthetic pool; within each pool, epochs are random permutations
    without replacement. Yields lists of (SentencePair, pool_name) where
    pool_name is "bitext" or "synthetic".
    """
    if batch_size < 1:
        raise DataError("batch size must be >= 1")
    b, s = len(ds.bitext), len(ds.synthetic)
    if b + s == 0:
        raise DataError("cannot mix two empty corpora")
    p_bitext = ds.bitext_fraction
    choice_rng = make_rng(seed, "upsample-choice")
    pool_rngs = {
        "bitext": make_rng(seed, "upsample-perm", "bitext"),
        "synthetic": make_rng(seed, "upsample-perm", "synthetic"),
    }
    pools = {"bitext": ds.bitext.pairs, "synthetic": ds.synthetic.pairs}
    cursors = {"bitext": [], "synthetic": []}

    def next_pair(name):
        if not cursors[name]:
            order = pool_rngs[name].permutation(len(pools[name])).tolist()
            order.reverse()  # pop from the end
            cursors[name] = order
        return pools[name][cursors[name].pop()]

    pending = None  # slot drawn but not yet placed (carries across batches)
    while True:
        batch = []
        budget = 0
        while True:
            if pending is not None:
                name, pair = pending
                pending = None
            else:
                name = "bitext" if choice_rng.random() < p_bitext else "synthetic"
                pair = next_pair(name)
            cost = _pair_cost(pair)
            if batch and budget + cost > batch_size:
                pending = (name, pair)
                break
            batch.append((pair, name))
            budget += cost
            if budget >= batch_size:
                break
        yield batch
