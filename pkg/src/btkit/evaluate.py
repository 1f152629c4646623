"""Evaluation: corpus BLEU and the two training-signal diagnostics
(per-epoch loss separation, LM perplexity of synthetic sources).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from btkit.augment import back_translate
from btkit.corpus import Corpus, ParallelCorpus, three_way_split
from btkit.decode import GenerationConfig
from btkit.errors import DataError
from btkit.lm import perplexity, train_kn_lm
from btkit.model import cross_entropy, train_translation_model
from btkit.noise import NoiseConfig
from btkit.rng import derive_seed

BLEU_ORDER = 4


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]  # p1..p4
    brevity_penalty: float
    hyp_len: int
    ref_len: int


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyps: Corpus, refs: Corpus) -> BleuReport:
    """Corpus-level case-sensitive BLEU, single reference, no smoothing.

    Modified n-gram precision with clipping for n=1..4, geometric mean,
    brevity penalty min(1, exp(1 - ref_len/hyp_len)). Any zero precision
    yields BLEU 0 (the precisions are still reported).
    """
    if len(hyps) != len(refs):
        raise DataError("hypothesis/reference corpus length mismatch")
    if len(hyps) == 0:
        raise DataError("BLEU of an empty corpus is undefined")
    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps.sentences, refs.sentences):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, BLEU_ORDER + 1):
            hyp_counts = _ngrams(hyp.tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref.tokens, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(
                min(c, ref_counts.get(g, 0)) for g, c in hyp_counts.items()
            )
    precisions = tuple(
        (matches[i] / totals[i]) if totals[i] > 0 else 0.0 for i in range(BLEU_ORDER)
    )
    if hyp_len == 0:
        return BleuReport(0.0, precisions, 0.0, hyp_len, ref_len)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / BLEU_ORDER) * 100.0
    return BleuReport(score, precisions, bp, hyp_len, ref_len)


@dataclass(frozen=True)
class LossRow:
    epoch: int
    pool: str  # "synthetic" or "bitext"
    cross_entropy: float

    @property
    def ppl(self) -> float:
        return math.exp(self.cross_entropy)


def loss_analysis(
    model_checkpoints,
    synthetic_sample: ParallelCorpus,
    bitext_sample: ParallelCorpus,
) -> list[LossRow]:
    """Token-averaged cross entropy of per-epoch checkpoints on a synthetic
    sample and an equally sized bitext sample."""
    if len(synthetic_sample) == 0 or len(bitext_sample) == 0:
        raise DataError("loss analysis needs nonempty samples")
    if len(synthetic_sample) != len(bitext_sample):
        raise DataError("synthetic and bitext samples must have equal size")
    rows = []
    for epoch, model in enumerate(model_checkpoints):
        rows.append(LossRow(epoch, "synthetic", cross_entropy(model, synthetic_sample)))
        rows.append(LossRow(epoch, "bitext", cross_entropy(model, bitext_sample)))
    return rows


HUMAN_ROW = "human data"


def richness_analysis(
    bitext: ParallelCorpus,
    split_fracs: tuple[float, float, float],
    gen_configs: list[tuple[str, GenerationConfig]],
    seed: int,
    lm_order: int = 5,
    lm_discount: float = 0.75,
    noise_cfg: NoiseConfig | None = None,
    em_iterations: int = 8,
    lm_lambda: float = 0.5,
    model_lm_order: int = 3,
) -> list[tuple[str, float]]:
    """LM perplexity of synthetic sources versus genuine sources.

    Protocol: split the bitext three ways; train a reverse (target-to-source)
    model on part 1; train a Kneser-Ney LM on the source side of part 2;
    back-translate the target side of part 3 under each generation config and
    score every source variant, plus the genuine sources, with the LM.
    Returns [(method, perplexity)] with the genuine-source row first.
    """
    part1, part2, part3 = three_way_split(bitext, split_fracs, derive_seed(seed, "split"))
    if min(len(part1), len(part2), len(part3)) == 0:
        raise DataError("richness analysis needs three nonempty parts")
    reverse_model, _hist = train_translation_model(
        part1.swapped(),
        em_iterations=em_iterations,
        lm_order=model_lm_order,
        lambda_lex=1.0 - lm_lambda,
        lambda_lm=lm_lambda,
    )
    lm = train_kn_lm(part2.source_corpus(), order=lm_order, discount=lm_discount)
    rows = [(HUMAN_ROW, perplexity(lm, part3.source_corpus()))]
    mono = part3.target_corpus()
    for name, cfg in gen_configs:
        if cfg.method == "beam_noise" and noise_cfg is None:
            raise DataError("beam_noise in richness analysis needs a noise config")
        synth, _dropped = back_translate(
            reverse_model,
            mono,
            GenerationConfig(
                method=cfg.method,
                beam_size=cfg.beam_size,
                topk_k=cfg.topk_k,
                max_len=cfg.max_len,
                seed=derive_seed(seed, "richness", name),
                temperature=cfg.temperature,
            ),
            noise_cfg=noise_cfg,
        )
        rows.append((name, perplexity(lm, synth.source_corpus())))
    return rows
