"""Token/id vocabulary with reserved symbols.

Reserved symbols occupy the first ids: <unk> (OOV), </s> (sentence end),
BLANK (the noise filler). Corpus occurrences of the reserved literals map to
the reserved ids. A begin-of-sentence sentinel used by the language model for
context padding sits one past the last id and is never predicted.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

UNK = "<unk>"
EOS = "</s>"
BLANK = "BLANK"
RESERVED = (UNK, EOS, BLANK)
UNK_ID, EOS_ID, BLANK_ID = 0, 1, 2
BOS = "<s>"  # rendering of the internal begin sentinel


@dataclass
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:3]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved symbols")
        if not self.index:
            self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    @classmethod
    def from_token_counts(cls, counts: Counter) -> "Vocabulary":
        ordinary = sorted(
            (tok for tok in counts if tok not in RESERVED),
            key=lambda tok: (-counts[tok], tok),
        )
        return cls(tuple(RESERVED) + tuple(ordinary))

    @classmethod
    def from_sentences(cls, sentences) -> "Vocabulary":
        counts: Counter = Counter()
        for s in sentences:
            counts.update(s.tokens)
        return cls.from_token_counts(counts)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def bos_id(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        """Token id, mapping OOV to <unk>."""
        return self.index.get(token, UNK_ID)

    def ids(self, tokens) -> tuple[int, ...]:
        idx = self.index
        return tuple(idx.get(t, UNK_ID) for t in tokens)

    def token(self, i: int) -> str:
        if i == self.bos_id:
            return BOS
        return self.tokens[i]
