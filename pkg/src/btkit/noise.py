"""Word-level noising of generated sources: deletion, filler replacement,
and bounded local shuffling.

Applied in that order. Deletion drops each token independently; if it would
empty a nonempty sentence, one uniformly chosen token is retained (empty
sources would break training pairs). Surviving tokens are replaced by the
reserved BLANK filler independently. The shuffle draws a key q_i = i + u_i
with u_i uniform on [0, window+1) per position and stable-sorts by key,
which never moves a token more than `window` positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from btkit.corpus import WORD, Sentence
from btkit.errors import DataError
from btkit.vocab import BLANK


@dataclass(frozen=True)
class NoiseConfig:
    p_del: float = 0.1
    p_blank: float = 0.1
    swap_window: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_del <= 1.0 and 0.0 <= self.p_blank <= 1.0):
            raise DataError("noise probabilities must lie in [0, 1]")
        if self.swap_window < 0:
            raise DataError("swap window must be >= 0")


def swap_permutation(n: int, window: int, rng) -> list[int]:
    """Output order of a bounded local shuffle: position j takes input perm[j].

    |new position - old position| <= window for every token.
    """
    if n <= 1 or window == 0:
        return list(range(n))
    keys = np.arange(n, dtype=np.float64) + rng.random(n) * (window + 1)
    return np.argsort(keys, kind="stable").tolist()


def noise_sentence(s: Sentence, cfg: NoiseConfig, rng) -> Sentence:
    """Delete, blank out, then locally shuffle a word-level sentence."""
    if s.level != WORD:
        raise DataError("noise_sentence expects word-level input")
    tokens = list(s.tokens)
    n = len(tokens)
    if n == 0:
        return s

    if cfg.p_del > 0.0:
        keep = rng.random(n) >= cfg.p_del
        survivors = [tok for tok, k in zip(tokens, keep) if k]
        if not survivors:
            survivors = [tokens[int(rng.integers(n))]]
    else:
        survivors = tokens

    m = len(survivors)
    if cfg.p_blank > 0.0:
        blank = rng.random(m) < cfg.p_blank
        survivors = [BLANK if b else tok for tok, b in zip(survivors, blank)]

    perm = swap_permutation(m, cfg.swap_window, rng)
    return Sentence(tuple(survivors[i] for i in perm), WORD)
