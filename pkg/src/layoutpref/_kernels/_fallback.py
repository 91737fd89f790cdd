"""Pure numpy implementations of the hot kernels.

Mirrors the signatures of the compiled module ``_core``; selected at import
time by the package ``__init__`` when the extension is unavailable (or when
LAYOUTPREF_PURE is set).
"""

import numpy as np

BACKEND = "python"

# evaluated through the same ufunc as the scores so zero distances score exactly 1
_E_MINUS_1 = float(np.exp(np.float64(1.0))) - 1.0


def bin_tokens(values, extents, k):
    """Vectorized coordinate binning: clamp to [0, extent], floor(a/D*K), clamp to [0, K]."""
    a = np.clip(np.asarray(values, dtype=np.float64), 0.0, extents)
    t = np.floor(a / extents * k)
    return np.clip(t, 0, k).astype(np.int64)


def unbin_tokens(tokens, extents, k):
    """Bin-center reconstruction, clamped to the extent."""
    t = np.asarray(tokens, dtype=np.float64)
    return np.minimum((t + 0.5) / k * extents, extents)


def iou_many(a, b):
    """Elementwise IoU for two (n, 4) corner arrays (left, top, right, bottom)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    iw = np.maximum(0.0, np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]))
    ih = np.maximum(0.0, np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]))
    inter = iw * ih
    area_a = np.maximum(0.0, a[:, 2] - a[:, 0]) * np.maximum(0.0, a[:, 3] - a[:, 1])
    area_b = np.maximum(0.0, b[:, 2] - b[:, 0]) * np.maximum(0.0, b[:, 3] - b[:, 1])
    union = area_a + area_b - inter
    out = np.zeros(len(a), dtype=np.float64)
    nz = union > 0.0
    out[nz] = inter[nz] / union[nz]
    return out


def alignment_score(xs, ys):
    """Alignment quality for one layout.

    ``xs``/``ys`` are (n, 3) arrays of canvas-normalized key coordinates
    (x: left/center/right, y: top/center/bottom) with n >= 2.  Per element,
    the nearest same-key distance across the other elements is taken per
    axis, passed through exp(1 - d), and the worse axis keeps the score.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    n = xs.shape[0]
    dx = np.abs(xs[:, None, :] - xs[None, :, :])
    dy = np.abs(ys[:, None, :] - ys[None, :, :])
    eye = np.eye(n, dtype=bool)
    dx[eye] = np.inf
    dy[eye] = np.inf
    best_dx = np.minimum(dx.min(axis=(1, 2)), 1.0)
    best_dy = np.minimum(dy.min(axis=(1, 2)), 1.0)
    fx = np.exp(1.0 - best_dx)
    fy = np.exp(1.0 - best_dy)
    scores = (np.minimum(fx, fy) - 1.0) / _E_MINUS_1
    return float(scores.mean())


def overlap_raw(corners, areas):
    """Raw overlap quality for one layout: (1/N) sum_i sum_{j!=i} (1 - inter_ij / area_i).

    ``corners`` is (n, 4) in (left, top, right, bottom); ``areas`` the matching
    positive element areas; n >= 2.
    """
    c = np.asarray(corners, dtype=np.float64)
    areas = np.asarray(areas, dtype=np.float64)
    n = c.shape[0]
    iw = np.maximum(0.0, np.minimum(c[:, None, 2], c[None, :, 2]) - np.maximum(c[:, None, 0], c[None, :, 0]))
    ih = np.maximum(0.0, np.minimum(c[:, None, 3], c[None, :, 3]) - np.maximum(c[:, None, 1], c[None, :, 1]))
    inter = iw * ih
    terms = 1.0 - inter / areas[:, None]
    np.fill_diagonal(terms, 0.0)
    return float(terms.sum() / n)
