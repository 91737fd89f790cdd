"""Hot-kernel backend selection.

Prefers the compiled Cython extension; falls back to the pure numpy twin when
the extension is missing or when the LAYOUTPREF_PURE environment variable is
set to a non-empty value. Both backends expose the same functions and agree
numerically (see tests/test_kernels.py and benchmarks/bench_kernels.py).
"""

import os

if os.environ.get("LAYOUTPREF_PURE"):
    from . import _fallback as impl
else:
    try:
        from . import _core as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _fallback as impl

BACKEND = impl.BACKEND

bin_tokens = impl.bin_tokens
unbin_tokens = impl.unbin_tokens
iou_many = impl.iou_many
alignment_score = impl.alignment_score
overlap_raw = impl.overlap_raw
