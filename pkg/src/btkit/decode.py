"""Sequence generation strategies: greedy, beam, sampling, top-k sampling,
plus exhaustive oracles (exact MAP and full sequence-distribution
enumeration) for testing.

Every decoder touches the model only through the next-token-distribution
interface: `model.source_context(source)` once, then
`model.step_dist(ctx, prefix_ids) -> (vec, total)` per step. Length handling:
`max_len` caps TOTAL tokens including </s>; a hypothesis that reaches
max_len surface tokens without </s> is finished but flagged unterminated
(terminated=False) and carries no </s> probability factor.

Determinism: all ties break toward the lowest token id; beam candidates tie
toward (lower parent rank, lower token id); equal-probability sequences in
the oracles and the beam pool tie toward the lexicographically smaller token
id sequence. Beam keeps the top-k candidates jointly ranked by cumulative
log-probability; finished candidates among them retire to a pool and the
live set shrinks, which makes beam(k=1) coincide with greedy exactly and
beam(k >= |sequence space|) coincide with exact_map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from btkit import _kernels
from btkit.errors import DataError, GuardError
from btkit.model import default_max_len

ENUMERATION_GUARD = 10_000_000
METHODS = ("greedy", "beam", "sampling", "topk", "beam_noise")


@dataclass(frozen=True)
class GenerationConfig:
    method: str = "beam"
    beam_size: int = 5
    topk_k: int = 10
    max_len: int | None = None  # None: 2*len(source)+5 per sentence
    seed: int = 0
    temperature: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"unknown generation method: {self.method!r}")
        if self.beam_size < 1 or self.topk_k < 1:
            raise DataError("beam_size and topk_k must be >= 1")
        if self.temperature <= 0:
            raise DataError("temperature must be positive")


@dataclass(frozen=True)
class Hypothesis:
    token_ids: tuple[int, ...]  # includes the final </s> id when terminated
    tokens: tuple[str, ...]
    score: float  # cumulative natural-log probability
    finished: bool
    terminated: bool  # ended with </s> (False: max_len cut, "unfinished")

    def surface_ids(self, eos_id: int) -> tuple[int, ...]:
        if self.terminated and self.token_ids and self.token_ids[-1] == eos_id:
            return self.token_ids[:-1]
        return self.token_ids

    def surface_tokens(self) -> tuple[str, ...]:
        if self.terminated and self.tokens:
            return self.tokens[:-1]
        return self.tokens


def _resolve_max_len(model, source, max_len):
    if max_len is not None:
        if max_len < 1:
            raise DataError("max_len must be >= 1")
        return max_len
    ctx = model.source_context(source)
    return default_max_len(len(ctx))


def _make_hyp(model, ids: tuple[int, ...], score: float, terminated: bool) -> Hypothesis:
    tokens = tuple(model.tgt_token(i) for i in ids)
    return Hypothesis(
        token_ids=ids, tokens=tokens, score=score, finished=True, terminated=terminated
    )


def greedy(model, source, max_len: int | None = None) -> Hypothesis:
    """Pick the argmax token each step; ties go to the lowest token id."""
    max_len = _resolve_max_len(model, source, max_len)
    ctx = model.source_context(source)
    eos = model.eos_id
    prefix: tuple[int, ...] = ()
    score = 0.0
    for _step in range(max_len):
        vec, total = model.step_dist(ctx, prefix)
        i = _kernels.argmax_tie(vec)
        p = vec[i] / total if total > 0 else 0.0
        if p <= 0.0:
            break  # dead end: no continuation has mass
        score += math.log(p)
        prefix = prefix + (i,)
        if i == eos:
            return _make_hyp(model, prefix, score, terminated=True)
    return _make_hyp(model, prefix, score, terminated=False)


def sample(model, source, rng, max_len: int | None = None,
           temperature: float = 1.0) -> Hypothesis:
    """Draw each token from the full next-token distribution."""
    max_len = _resolve_max_len(model, source, max_len)
    ctx = model.source_context(source)
    eos = model.eos_id
    prefix: tuple[int, ...] = ()
    score = 0.0
    for _step in range(max_len):
        vec, total = model.step_dist(ctx, prefix)
        if total <= 0.0:
            break
        if temperature != 1.0:
            draw_vec = np.power(vec, 1.0 / temperature)
            i = _kernels.sample_cdf(draw_vec, float(draw_vec.sum()), rng.random())
        else:
            i = _kernels.sample_cdf(vec, total, rng.random())
        if i < 0:
            break
        score += math.log(vec[i] / total)  # model probability, not tempered
        prefix = prefix + (i,)
        if i == eos:
            return _make_hyp(model, prefix, score, terminated=True)
    return _make_hyp(model, prefix, score, terminated=False)


def topk_renormalized(vec, k: int):
    """Top-k restriction of one step distribution: (ids, renormalized weights)."""
    ids = _kernels.topk_tie(np.ascontiguousarray(vec, dtype=np.float64), k)
    weights = np.array([vec[i] for i in ids], dtype=np.float64)
    s = float(weights.sum())
    if s > 0.0:
        weights /= s
    return ids, weights


def sample_topk(model, source, k: int, rng, max_len: int | None = None,
                temperature: float = 1.0) -> Hypothesis:
    """Restrict each step to the k most likely tokens, renormalize, sample."""
    if k < 1:
        raise DataError("top-k cutoff must be >= 1")
    max_len = _resolve_max_len(model, source, max_len)
    ctx = model.source_context(source)
    eos = model.eos_id
    prefix: tuple[int, ...] = ()
    score = 0.0
    for _step in range(max_len):
        vec, total = model.step_dist(ctx, prefix)
        if total <= 0.0:
            break
        ids, weights = topk_renormalized(vec, k)
        if temperature != 1.0:
            weights = np.power(weights, 1.0 / temperature)
        pos = _kernels.sample_cdf(weights, float(weights.sum()), rng.random())
        if pos < 0:
            break
        i = ids[pos]
        p = vec[i] / total
        if p <= 0.0:
            break
        score += math.log(p)
        prefix = prefix + (i,)
        if i == eos:
            return _make_hyp(model, prefix, score, terminated=True)
    return _make_hyp(model, prefix, score, terminated=False)


def _hyp_order(h: Hypothesis):
    return (-h.score, h.token_ids)


def beam(model, source, k: int = 5, max_len: int | None = None):
    """Length-unnormalized beam search.

    Returns (best, finished_list): the highest-scoring terminated hypothesis
    and the terminated pool sorted best-first (at most k entries). If nothing
    terminated within max_len, best is the highest-scoring unterminated
    hypothesis, flagged via terminated=False, and finished_list is empty.
    """
    if k < 1:
        raise DataError("beam size must be >= 1")
    max_len = _resolve_max_len(model, source, max_len)
    ctx = model.source_context(source)
    eos = model.eos_id
    live: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    pool: list[tuple[float, tuple[int, ...]]] = []
    cut: list[tuple[float, tuple[int, ...]]] = []
    for _step in range(max_len):
        if not live:
            break
        scores = np.array([s for s, _p in live], dtype=np.float64)
        rows = []
        totals = []
        for _s, prefix in live:
            vec, total = model.step_dist(ctx, prefix)
            rows.append(vec)
            totals.append(total if total > 0 else 1.0)
        dists = np.ascontiguousarray(np.stack(rows))
        parents, toks, cand_scores = _kernels.beam_step(
            scores, dists, np.array(totals, dtype=np.float64), k
        )
        new_live = []
        for pi, tok, sc in zip(parents, toks, cand_scores):
            seq = live[pi][1] + (tok,)
            if tok == eos:
                pool.append((sc, seq))
            elif len(seq) >= max_len:
                cut.append((sc, seq))
            else:
                new_live.append((sc, seq))
        live = new_live
    finished = sorted(
        (_make_hyp(model, seq, sc, terminated=True) for sc, seq in pool),
        key=_hyp_order,
    )
    if finished:
        return finished[0], finished[:k]
    leftovers = sorted(
        (_make_hyp(model, seq, sc, terminated=False) for sc, seq in cut + live),
        key=_hyp_order,
    )
    if not leftovers:
        raise DataError("beam search produced no hypotheses")
    return leftovers[0], []


def _check_guard(vocab_size: int, max_len: int) -> None:
    if vocab_size ** max_len > ENUMERATION_GUARD:
        raise GuardError(
            f"sequence space {vocab_size}^{max_len} exceeds the "
            f"{ENUMERATION_GUARD} enumeration guard"
        )


def _walk_sequences(model, source, max_len: int | None) -> dict:
    """Log-probability of every terminated sequence with total length <=
    max_len, accumulated step-by-step exactly like the decoders score."""
    max_len = _resolve_max_len(model, source, max_len)
    ctx = model.source_context(source)
    eos = model.eos_id
    vec0, _ = model.step_dist(ctx, ())
    _check_guard(len(vec0), max_len)
    out: dict[tuple[int, ...], float] = {}

    def walk(prefix: tuple[int, ...], logp: float):
        vec, total = model.step_dist(ctx, prefix)
        if total <= 0.0:
            return
        p_eos = vec[eos] / total
        if p_eos > 0.0:
            out[prefix + (eos,)] = logp + math.log(p_eos)
        if len(prefix) + 2 > max_len:  # a surface child could never terminate
            return
        for w in range(len(vec)):
            if w == eos:
                continue
            p = vec[w] / total
            if p > 0.0:
                walk(prefix + (w,), logp + math.log(p))

    walk((), 0.0)
    return out


def enumerate_distribution(model, source, max_len: int | None = None) -> dict:
    """Probabilities of all terminated sequences of total length <= max_len.

    Keys are token-id tuples including the final </s>. The values sum to at
    most 1; the deficit is exactly the probability mass on sequences longer
    than max_len.
    """
    return {seq: math.exp(lp) for seq, lp in _walk_sequences(model, source, max_len).items()}


def exact_map(model, source, max_len: int | None = None) -> Hypothesis:
    """True argmax over all terminated sequences (guarded exhaustive search)."""
    dist = _walk_sequences(model, source, max_len)
    if not dist:
        raise DataError("no terminated sequence exists within max_len")
    best_seq = None
    best_lp = -math.inf
    for seq, lp in dist.items():
        if lp > best_lp or (lp == best_lp and (best_seq is None or seq < best_seq)):
            best_lp = lp
            best_seq = seq
    return _make_hyp(model, best_seq, best_lp, terminated=True)


def generate(model, source, cfg: GenerationConfig, rng=None) -> Hypothesis:
    """Dispatch one sentence through the configured generation method.

    beam_noise decodes with beam here; the noise transform is applied by the
    augmentation pipeline afterwards.
    """
    if cfg.method == "greedy":
        return greedy(model, source, cfg.max_len)
    if cfg.method in ("beam", "beam_noise"):
        best, _ = beam(model, source, cfg.beam_size, cfg.max_len)
        return best
    if rng is None:
        raise DataError(f"method {cfg.method!r} needs a seeded rng")
    if cfg.method == "sampling":
        return sample(model, source, rng, cfg.max_len, cfg.temperature)
    if cfg.method == "topk":
        return sample_topk(model, source, cfg.topk_k, rng, cfg.max_len, cfg.temperature)
    raise DataError(f"unknown generation method: {cfg.method!r}")
