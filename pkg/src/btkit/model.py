"""Trainable conditional translation model.

A lexical translation table (IBM Model 1, trained by EM with a NULL source
token) mixed with a Kneser-Ney n-gram LM over target tokens. The mixture

    P(w | source, prefix)  ~  lambda_lex * lex_mix(w|source)
                            + lambda_lm  * P_lm(w | prefix tail)

with lex_mix(w|x) = (1/(|x|+1)) * sum_j t(w|x_j) over the source tokens plus
NULL, lex_mix(</s>|x) = 0 (termination is owned by the LM), renormalized, is
the single interface all generation strategies consume. The model works for
either translation direction; back-translation just trains it on swapped
pairs.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from btkit import _kernels
from btkit.corpus import Corpus, ParallelCorpus, Sentence
from btkit.errors import DataError
from btkit.lm import NgramCounts, count_ngrams, estimate_kn
from btkit.vocab import BOS, EOS_ID, Vocabulary

NULL_TOKEN = "<null>"
_LEXVEC_CACHE_CAP = 256


@dataclass
class LexTable:
    """Sparse t(target|source) with one extra NULL row past the source vocab."""

    vocab_src: Vocabulary
    vocab_tgt: Vocabulary
    rows: dict[int, tuple[np.ndarray, np.ndarray]]  # src id -> (tgt ids, probs)

    @property
    def null_id(self) -> int:
        return len(self.vocab_src)

    def prob(self, src_token: str, tgt_token: str) -> float:
        """t(tgt|src); src NULL_TOKEN addresses the NULL row."""
        s = self.null_id if src_token == NULL_TOKEN else self.vocab_src.id(src_token)
        row = self.rows.get(s)
        if row is None:
            return 0.0
        w = self.vocab_tgt.id(tgt_token)
        ids, probs = row
        pos = int(np.searchsorted(ids, w))
        if pos < len(ids) and ids[pos] == w:
            return float(probs[pos])
        return 0.0

    def row_sum(self, s: int) -> float:
        row = self.rows.get(s)
        return float(row[1].sum()) if row is not None else 0.0


def _prepare_em(bitext: ParallelCorpus, vocab_src: Vocabulary, vocab_tgt: Vocabulary,
                weights):
    """Flatten the bitext into alignment-event arrays for the EM kernel.

    Lexical pairs are indexed sorted by (source id, target id), so a table
    snapshot is just per-source slicing of the flat probability array.
    """
    null_id = len(vocab_src)
    pair_index: dict[tuple[int, int], int] = {}
    ev_pairs_raw: list[int] = []
    ev_off: list[int] = [0]
    ev_weight: list[float] = []
    for k, pair in enumerate(bitext.pairs):
        w = 1.0 if weights is None else float(weights[k])
        src_ids = (null_id,) + vocab_src.ids(pair.source.tokens)
        tgt_ids = vocab_tgt.ids(pair.target.tokens)
        for t in tgt_ids:
            for s in src_ids:
                key = (s, t)
                idx = pair_index.get(key)
                if idx is None:
                    idx = len(pair_index)
                    pair_index[key] = idx
                ev_pairs_raw.append(idx)
            ev_off.append(len(ev_pairs_raw))
            ev_weight.append(w)
    n = len(pair_index)
    src_raw = np.empty(n, dtype=np.int32)
    tgt_raw = np.empty(n, dtype=np.int32)
    for (s, t), idx in pair_index.items():
        src_raw[idx] = s
        tgt_raw[idx] = t
    order = np.lexsort((tgt_raw, src_raw))
    inv = np.empty(n, dtype=np.int32)
    inv[order] = np.arange(n, dtype=np.int32)
    ev_pairs = inv[np.asarray(ev_pairs_raw, dtype=np.int32)]
    return (
        np.asarray(ev_off, dtype=np.int64),
        np.ascontiguousarray(ev_pairs, dtype=np.int32),
        np.asarray(ev_weight, dtype=np.float64),
        np.ascontiguousarray(src_raw[order]),
        np.ascontiguousarray(tgt_raw[order]),
    )


def _table_from_snapshot(pair_src, pair_tgt, t_snap, vocab_src, vocab_tgt) -> LexTable:
    rows: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if len(pair_src):
        change = np.flatnonzero(pair_src[1:] != pair_src[:-1]) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [len(pair_src)]))
        for b in range(len(starts)):
            lo, hi = int(starts[b]), int(ends[b])
            rows[int(pair_src[lo])] = (pair_tgt[lo:hi], t_snap[lo:hi])
    return LexTable(vocab_src=vocab_src, vocab_tgt=vocab_tgt, rows=rows)


def train_ibm1_em(
    bitext: ParallelCorpus,
    iterations: int,
    vocab_src: Vocabulary | None = None,
    vocab_tgt: Vocabulary | None = None,
    weights=None,
    on_iteration=None,
) -> tuple[LexTable, list[float]]:
    """IBM Model 1 EM. Returns the table and per-iteration log-likelihoods.

    Uniform initialization; the log-likelihood is evaluated with the
    pre-update table each iteration, so the returned sequence is
    non-decreasing. `on_iteration(i, table, loglik)` sees the table after
    each M-step and may raise StopTraining to end early.
    """
    if iterations < 1:
        raise DataError("EM needs at least one iteration")
    if len(bitext) == 0:
        raise DataError("cannot train on an empty bitext")
    if vocab_src is None:
        vocab_src = Vocabulary.from_sentences(p.source for p in bitext.pairs)
    if vocab_tgt is None:
        vocab_tgt = Vocabulary.from_sentences(p.target for p in bitext.pairs)
    ev_off, ev_pairs, ev_weight, pair_src, pair_tgt = _prepare_em(
        bitext, vocab_src, vocab_tgt, weights
    )
    n_pairs = len(pair_src)
    if n_pairs == 0:
        raise DataError("bitext contains no alignable tokens")
    t = np.full(n_pairs, 1.0 / len(vocab_tgt), dtype=np.float64)
    counts = np.empty(n_pairs, dtype=np.float64)
    n_groups = len(vocab_src) + 1  # incl. NULL
    history: list[float] = []
    for it in range(iterations):
        counts[:] = 0.0
        ll = _kernels.em_estep(ev_off, ev_pairs, ev_weight, t, counts)
        _kernels.group_normalize(counts, pair_src, n_groups, t)
        history.append(float(ll))
        if on_iteration is not None:
            table = _table_from_snapshot(pair_src, pair_tgt, t.copy(), vocab_src, vocab_tgt)
            try:
                on_iteration(it, table, float(ll))
            except StopTraining:
                return table, history
    table = _table_from_snapshot(pair_src, pair_tgt, t, vocab_src, vocab_tgt)
    return table, history


class StopTraining(Exception):
    """Raised by an on_iteration hook to end EM early (e.g. convergence)."""


def default_max_len(source_len: int) -> int:
    """Hard generation cap: total tokens including </s>."""
    return 2 * source_len + 5


@dataclass
class TranslationModel:
    lex: LexTable
    lm: NgramLm
    lambda_lex: float
    lambda_lm: float
    _lexvec_cache: OrderedDict = field(default_factory=OrderedDict, repr=False)

    def __post_init__(self):
        if abs(self.lambda_lex + self.lambda_lm - 1.0) > 1e-9:
            raise DataError("lambda_lex + lambda_lm must equal 1")
        if self.lambda_lex < 0 or self.lambda_lm < 0:
            raise DataError("mixture weights must be nonnegative")
        if len(self.vocab_tgt) == 0:
            raise DataError("empty target vocabulary")

    @property
    def vocab_src(self) -> Vocabulary:
        return self.lex.vocab_src

    @property
    def vocab_tgt(self) -> Vocabulary:
        return self.lex.vocab_tgt

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def tgt_vocab_size(self) -> int:
        return len(self.vocab_tgt)

    def tgt_token(self, i: int) -> str:
        return self.vocab_tgt.token(i)

    # -- decoder-facing interface --------------------------------------

    def source_context(self, source: Sentence | tuple[int, ...]) -> tuple[int, ...]:
        if isinstance(source, Sentence):
            return self.vocab_src.ids(source.tokens)
        return tuple(source)

    def _lex_vector(self, src_ids: tuple[int, ...]) -> np.ndarray:
        cached = self._lexvec_cache.get(src_ids)
        if cached is not None:
            self._lexvec_cache.move_to_end(src_ids)
            return cached
        vec = np.zeros(len(self.vocab_tgt), dtype=np.float64)
        scale = 1.0 / (len(src_ids) + 1)
        for s in src_ids + (self.lex.null_id,):
            row = self.lex.rows.get(s)
            if row is not None:
                _kernels.add_sparse(vec, row[0], row[1], scale)
        vec[EOS_ID] = 0.0  # termination belongs to the LM component
        self._lexvec_cache[src_ids] = vec
        if len(self._lexvec_cache) > _LEXVEC_CACHE_CAP:
            self._lexvec_cache.popitem(last=False)
        return vec

    def step_dist(self, src_ids: tuple[int, ...], prefix_ids: tuple[int, ...]):
        """Unnormalized mixture over the target vocabulary; returns (vec, total)."""
        lex_vec = self._lex_vector(src_ids)
        need = self.lm.order - 1
        tail = prefix_ids[len(prefix_ids) - need :] if need > 0 else ()
        lm_vec = self.lm.dense(self.lm._pad(self.lm.map_ids(tail)))
        out = np.empty(len(self.vocab_tgt), dtype=np.float64)
        total = _kernels.mix2(out, lex_vec, lm_vec, self.lambda_lex, self.lambda_lm)
        return out, total

    # -- public surface -------------------------------------------------

    def next_token_distribution(self, source: Sentence, prefix: Sentence) -> np.ndarray:
        """Normalized P(. | source, prefix) over the target vocabulary."""
        src_ids = self.source_context(source)
        prefix_ids = self.vocab_tgt.ids(prefix.tokens)
        vec, total = self.step_dist(src_ids, prefix_ids)
        if total <= 0.0:
            raise DataError("next-token distribution has no mass")
        return vec / total

    def sequence_logprob(self, source: Sentence | tuple[int, ...], target) -> float:
        """log P(target, </s> | source); -inf if any step has zero probability."""
        src_ids = self.source_context(source)
        if isinstance(target, Sentence):
            tgt_ids = self.vocab_tgt.ids(target.tokens)
        else:
            tgt_ids = tuple(target)
        total_lp = 0.0
        prefix: tuple[int, ...] = ()
        for w in tgt_ids + (EOS_ID,):
            vec, total = self.step_dist(src_ids, prefix)
            p = vec[w] / total if total > 0.0 else 0.0
            if p <= 0.0:
                return -math.inf
            total_lp += math.log(p)
            prefix = prefix + (w,)
        return total_lp


def cross_entropy(model: TranslationModel, corpus: ParallelCorpus) -> float:
    """Token-averaged negative log-likelihood (nats, includes </s>)."""
    if len(corpus) == 0:
        raise DataError("cross-entropy over an empty corpus is undefined")
    total_lp = 0.0
    total_tokens = 0
    for p in corpus.pairs:
        total_lp += model.sequence_logprob(p.source, p.target)
        total_tokens += len(p.target) + 1
    return -total_lp / total_tokens


@dataclass
class TrainHistory:
    em_loglik: list[float]
    heldout_ce: list[float]
    stopped_at: int


def train_translation_model(
    bitext: ParallelCorpus,
    em_iterations: int = 8,
    lm_order: int = 3,
    lm_discount: float = 0.75,
    lambda_lex: float = 0.5,
    lambda_lm: float = 0.5,
    weights=None,
    heldout: ParallelCorpus | None = None,
    heldout_tol: float = 1e-4,
    heldout_patience: int = 3,
    on_checkpoint=None,
) -> tuple[TranslationModel, TrainHistory]:
    """Build vocabularies, train the target LM and the EM lexicon.

    `weights` upsamples pairs: floats scale EM expected counts exactly, and
    LM counting replicates sentences by the (integer) weight. With `heldout`,
    training stops once held-out cross-entropy fails to improve by
    `heldout_tol` over `heldout_patience` consecutive evaluations.
    `on_checkpoint(iteration, model)` runs after every EM iteration.
    """
    if len(bitext) == 0:
        raise DataError("cannot train on an empty bitext")
    vocab_src = Vocabulary.from_sentences(p.source for p in bitext.pairs)
    vocab_tgt = Vocabulary.from_sentences(p.target for p in bitext.pairs)

    tgt_sentences = []
    for k, p in enumerate(bitext.pairs):
        reps = 1
        if weights is not None:
            w = weights[k]
            reps = int(round(w))
            if abs(w - reps) > 1e-9:
                raise DataError("LM upsampling weights must be integers")
        tgt_sentences.extend([p.target] * reps)
    lm = estimate_kn(
        count_ngrams(Corpus(tgt_sentences), lm_order, vocab=vocab_tgt), lm_discount
    )

    state = {"model": None, "best": math.inf, "since": 0, "stopped": None}
    ho_hist: list[float] = []

    def iteration_hook(it, table, _ll):
        model = TranslationModel(
            lex=table, lm=lm, lambda_lex=lambda_lex, lambda_lm=lambda_lm
        )
        state["model"] = model
        if on_checkpoint is not None:
            on_checkpoint(it, model)
        if heldout is not None:
            ce = cross_entropy(model, heldout)
            ho_hist.append(ce)
            if ce < state["best"] - heldout_tol:
                state["best"] = ce
                state["since"] = 0
            else:
                state["since"] += 1
                if state["since"] >= heldout_patience:
                    state["stopped"] = it
                    raise StopTraining()

    _table, em_hist = train_ibm1_em(
        bitext,
        em_iterations,
        vocab_src=vocab_src,
        vocab_tgt=vocab_tgt,
        weights=weights,
        on_iteration=iteration_hook,
    )
    stopped = state["stopped"] if state["stopped"] is not None else len(em_hist) - 1
    return state["model"], TrainHistory(
        em_loglik=em_hist, heldout_ce=ho_hist, stopped_at=stopped
    )


# ---------------------------------------------------------------------------
# Versioned structured-text serialization. Probabilities are written with
# repr() (shortest round-trip decimal, i.e. bit-exact on read-back); the LM
# is stored as its integer count tables and re-estimated on load, which is
# deterministic.

MODEL_FORMAT_VERSION = "btkit-model v1"


def save_model(model: TranslationModel, path) -> None:
    lm = model.lm
    lex = model.lex
    if lm.counts is None:
        raise DataError("model LM carries no count tables; cannot serialize")
    if BOS in model.vocab_src or BOS in model.vocab_tgt:
        raise DataError("corpus token collides with the begin-sentinel rendering")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MODEL_FORMAT_VERSION + "\n")
        fh.write(
            "meta"
            f" lambda_lex={model.lambda_lex!r}"
            f" lambda_lm={model.lambda_lm!r}"
            f" lm_order={lm.order}"
            f" lm_discount={lm.discount!r}"
            f" lm_bos={int(lm.bos_trained)}"
            f" lm_eos={int(lm.eos_trained)}\n"
        )
        fh.write(f"section src-vocab {len(model.vocab_src)}\n")
        for tok in model.vocab_src.tokens:
            fh.write(tok + "\n")
        fh.write(f"section tgt-vocab {len(model.vocab_tgt)}\n")
        for tok in model.vocab_tgt.tokens:
            fh.write(tok + "\n")
        count_rows = []
        for k in range(1, lm.order + 1):
            tab = lm.counts.counts[k - 1]
            for gram in sorted(tab):
                toks = " ".join(model.vocab_tgt.token(i) for i in gram)
                count_rows.append(f"{k} {toks} {tab[gram]}")
        fh.write(f"section lm-counts {len(count_rows)}\n")
        for row in count_rows:
            fh.write(row + "\n")
        lex_rows = []
        for s in sorted(lex.rows):
            src_tok = NULL_TOKEN if s == lex.null_id else model.vocab_src.token(s)
            ids, probs = lex.rows[s]
            for j in range(len(ids)):
                tgt_tok = model.vocab_tgt.token(int(ids[j]))
                lex_rows.append(f"{src_tok} {tgt_tok} {probs[j]!r}")
        fh.write(f"section lex {len(lex_rows)}\n")
        for row in lex_rows:
            fh.write(row + "\n")
        fh.write("end\n")


def _expect_section(lines, pos, name):
    if pos >= len(lines):
        raise DataError(f"truncated model file: missing section {name}")
    cols = lines[pos].split(" ")
    if len(cols) != 3 or cols[0] != "section" or cols[1] != name:
        raise DataError(f"malformed model file: expected section {name}")
    return int(cols[2]), pos + 1


def load_model(path) -> TranslationModel:
    with open(path, encoding="utf-8", newline="\n") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0] != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: unknown model format version")
    if len(lines) < 3 or not lines[1].startswith("meta "):
        raise DataError(f"{path}: missing meta line")
    meta = dict(kv.split("=", 1) for kv in lines[1].split()[1:])
    pos = 2

    n_src, pos = _expect_section(lines, pos, "src-vocab")
    src_tokens = tuple(lines[pos : pos + n_src])
    pos += n_src
    n_tgt, pos = _expect_section(lines, pos, "tgt-vocab")
    tgt_tokens = tuple(lines[pos : pos + n_tgt])
    pos += n_tgt
    if len(src_tokens) != n_src or len(tgt_tokens) != n_tgt:
        raise DataError(f"{path}: truncated vocabulary section")
    vocab_src = Vocabulary(src_tokens)
    vocab_tgt = Vocabulary(tgt_tokens)
    tgt_index = dict(vocab_tgt.index)
    tgt_index[BOS] = vocab_tgt.bos_id

    order = int(meta["lm_order"])
    n_counts, pos = _expect_section(lines, pos, "lm-counts")
    tables: list[dict[tuple[int, ...], int]] = [{} for _ in range(order)]
    for line in lines[pos : pos + n_counts]:
        cols = line.split(" ")
        k = int(cols[0])
        if len(cols) != k + 2:
            raise DataError(f"{path}: malformed count row: {line!r}")
        gram = tuple(tgt_index[t] for t in cols[1 : 1 + k])
        tables[k - 1][gram] = int(cols[-1])
    pos += n_counts
    counts = NgramCounts(
        order=order,
        counts=tables,
        vocab=vocab_tgt,
        bos=bool(int(meta["lm_bos"])),
        eos=bool(int(meta["lm_eos"])),
    )
    lm = estimate_kn(counts, float(meta["lm_discount"]))

    n_lex, pos = _expect_section(lines, pos, "lex")
    null_id = len(vocab_src)
    by_src: dict[int, list[tuple[int, float]]] = {}
    for line in lines[pos : pos + n_lex]:
        cols = line.split(" ")
        if len(cols) != 3:
            raise DataError(f"{path}: malformed lex row: {line!r}")
        s = null_id if cols[0] == NULL_TOKEN else vocab_src.index[cols[0]]
        by_src.setdefault(s, []).append((tgt_index[cols[1]], float(cols[2])))
    pos += n_lex
    if pos >= len(lines) or lines[pos] != "end":
        raise DataError(f"{path}: truncated model file (missing end marker)")
    rows = {}
    for s, entries in by_src.items():
        entries.sort()
        rows[s] = (
            np.array([w for w, _p in entries], dtype=np.int32),
            np.array([p for _w, p in entries], dtype=np.float64),
        )
    lex = LexTable(vocab_src=vocab_src, vocab_tgt=vocab_tgt, rows=rows)
    return TranslationModel(
        lex=lex,
        lm=lm,
        lambda_lex=float(meta["lambda_lex"]),
        lambda_lm=float(meta["lambda_lm"]),
    )
