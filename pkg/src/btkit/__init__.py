"""btkit: a desk-scale lab for back-translation generation methods.

Corpus preparation (tokenize/filter/dedup/joint BPE), a small trainable
translation model (IBM-1 lexicon + Kneser-Ney LM mixture), five synthetic-
source generation strategies (greedy, beam, sampling, top-k, noised beam),
dataset augmentation with bitext upsampling and copy filtering, BLEU, and
the training-signal analyses, all deterministic under explicit seeds.
"""

from btkit._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
