"""Kernel backend selection.

The compiled extension (btkit._kernels._fast) is preferred; the pure-Python
mirror (btkit._kernels._ref) is the fallback. Set BTKIT_PURE_PYTHON=1 to
force the fallback, e.g. to run the benchmark comparison or to debug.
"""

import os

if os.environ.get("BTKIT_PURE_PYTHON", "0") == "1":
    from btkit._kernels import _ref as _impl
else:
    try:
        from btkit._kernels import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        from btkit._kernels import _ref as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND
argmax_tie = _impl.argmax_tie
topk_tie = _impl.topk_tie
sample_cdf = _impl.sample_cdf
mix2 = _impl.mix2
scale_sparse_add = _impl.scale_sparse_add
add_sparse = _impl.add_sparse
beam_step = _impl.beam_step
em_estep = _impl.em_estep
group_normalize = _impl.group_normalize

__all__ = [
    "BACKEND",
    "argmax_tie",
    "topk_tie",
    "sample_cdf",
    "mix2",
    "scale_sparse_add",
    "add_sparse",
    "beam_step",
    "em_estep",
    "group_normalize",
]
