"""Preference-optimized graphic layout generation.

Layout tokenization, quality heuristics, judge-driven preference pairing,
cross-entropy and preference-alignment training of a small categorical layout
policy, and evaluation via mean IoU and judge win rate.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .geometry import (
    BBox,
    Canvas,
    Element,
    ElementKind,
    Layout,
    TokenizedLayout,
    bin_coord,
    detokenize_layout,
    intersection_area,
    iou,
    tokenize_layout,
    unbin_coord,
)
from .metrics import (
    DatasetQualityStats,
    QualityReport,
    alignment_score,
    dataset_stats,
    filter_layouts,
    overlap_score,
    quality,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Canvas",
    "DatasetQualityStats",
    "Element",
    "ElementKind",
    "KERNEL_BACKEND",
    "Layout",
    "QualityReport",
    "TokenizedLayout",
    "alignment_score",
    "bin_coord",
    "dataset_stats",
    "detokenize_layout",
    "filter_layouts",
    "intersection_area",
    "iou",
    "overlap_score",
    "quality",
    "tokenize_layout",
    "unbin_coord",
]
