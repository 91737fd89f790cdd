"""Layout quality heuristics: alignment, overlap, combined quality and mu-sigma filtering.

Alignment rewards elements whose key coordinates (left/center/right edges on x,
top/center/bottom on y) coincide with another element's matching key; distances
are canvas-normalized so the score is scale invariant and sits in [0, 1].
Overlap penalizes pairwise intersection relative to each element's own area;
the raw form is exposed as printed (unbounded in N), and a pair-averaged
variant in [0, 1] feeds the combined score. Background elements count toward
neither metric: a full-canvas base would saturate overlap regardless of design
quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateElementError
from .geometry import Layout


@dataclass(frozen=True)
class QualityReport:
    q_align: float
    q_overlap_raw: float
    q_overlap_norm: float
    q: float


@dataclass(frozen=True)
class DatasetQualityStats:
    mean: float
    std: float
    threshold: float
    count: int


def _foreground_corners(layout: Layout) -> np.ndarray:
    """(n, 4) corner array (left, top, right, bottom) of non-background placements."""
    fg = layout.foreground()
    out = np.empty((len(fg), 4), dtype=np.float64)
    for i, (_, box) in enumerate(fg):
        out[i] = box.corners()
    return out


def alignment_score(layout: Layout) -> float:
    """Alignment quality in [0, 1]; layouts with fewer than 2 foreground elements score 1."""
    corners = _foreground_corners(layout)
    n = corners.shape[0]
    if n < 2:
        return 1.0
    w_c, h_c = layout.canvas.width, layout.canvas.height
    xs = np.stack(
        [corners[:, 0], (corners[:, 0] + corners[:, 2]) / 2.0, corners[:, 2]], axis=1
    ) / w_c
    ys = np.stack(
        [corners[:, 1], (corners[:, 1] + corners[:, 3]) / 2.0, corners[:, 3]], axis=1
    ) / h_c
    return _kernels.alignment_score(xs, ys)


def overlap_score(layout: Layout) -> tuple[float, float]:
    """(raw, normalized) overlap quality; higher means less overlap.

    Raw is the printed form (1/N) sum_i sum_{j!=i} (1 - inter_ij / area_i);
    normalized divides by (N - 1) so it lies in [0, 1]. Fewer than 2
    foreground elements yield (1.0, 1.0).
    """
    corners = _foreground_corners(layout)
    n = corners.shape[0]
    areas = (corners[:, 2] - corners[:, 0]) * (corners[:, 3] - corners[:, 1])
    if np.any(areas <= 0.0):
        fg = layout.foreground()
        bad = fg[int(np.argmax(areas <= 0.0))][0].id
        raise DegenerateElementError(f"element {bad!r} has zero area; overlap ratio undefined")
    if n < 2:
        return 1.0, 1.0
    raw = _kernels.overlap_raw(corners, areas)
    return raw, raw / (n - 1)


def quality(layout: Layout) -> QualityReport:
    """Combined quality: the mean of alignment and normalized overlap."""
    q_align = alignment_score(layout)
    raw, norm = overlap_score(layout)
    return QualityReport(
        q_align=q_align,
        q_overlap_raw=raw,
        q_overlap_norm=norm,
        q=(q_align + norm) / 2.0,
    )


def dataset_stats(qualities: Sequence[float]) -> DatasetQualityStats:
    """Population mean/std of quality values and the mean-minus-std keep threshold."""
    if len(qualities) == 0:
        raise ValueError("cannot compute quality statistics of an empty dataset")
    arr = np.asarray(qualities, dtype=np.float64)
    if np.all(arr == arr[0]):
        # exact zero spread; keeps the strict > rule honest for identical inputs
        v = float(arr[0])
        return DatasetQualityStats(mean=v, std=0.0, threshold=v, count=len(arr))
    mean = float(arr.mean())
    std = float(math.sqrt(float(((arr - mean) ** 2).mean())))
    return DatasetQualityStats(mean=mean, std=std, threshold=mean - std, count=len(arr))


def filter_layouts(layouts: Sequence[Layout]) -> tuple[list[int], DatasetQualityStats]:
    """Two-pass filter: compute all qualities, then keep indexes strictly above mean - std."""
    if len(layouts) == 0:
        raise ValueError("cannot filter an empty dataset")
    qualities = [quality(layout).q for layout in layouts]
    stats = dataset_stats(qualities)
    kept = [i for i, q in enumerate(qualities) if q > stats.threshold]
    return kept, stats
