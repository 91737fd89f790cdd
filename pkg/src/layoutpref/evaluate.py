"""Evaluation harness: mean IoU in All/Single/Multiple modes and judge win rate.

All three IoU modes macro-average: per-instance scores are averaged into the
report. ALL predicts every foreground element; SINGLE enumerates one instance
per text element with every other element fixed at ground truth; MULTIPLE
predicts all text elements jointly with non-text elements fixed. Win rate
passes the predicted layout as input 1 and ground truth as input 2.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .dataio import DatasetSample
from .errors import JudgeUnavailableError
from .geometry import BBox, bin_coord, detokenize_layout
from .judge import DecisionCache, cached_compare
from .policy import PolicyParams, featurize, greedy_decode

logger = logging.getLogger(__name__)


class EvalMode(str, Enum):
    ALL = "all"
    SINGLE = "single"
    MULTIPLE = "multiple"


@dataclass(frozen=True)
class EvalReport:
    mode: EvalMode
    mean_iou_percent: float
    n_instances: int
    n_skipped: int = 0
    win_rate_percent: Optional[float] = None
    n_failed: int = 0


# A predictor fills boxes for the requested target ids, given the sample and
# the token-quadruples of elements whose positions are fixed.
Predictor = Callable[
    [DatasetSample, Sequence[str], Mapping[str, tuple[int, int, int, int]]],
    dict[str, BBox],
]


class PolicyPredictor:
    """Greedy-decode predictor backed by policy parameters."""

    def __init__(self, params: PolicyParams):
        self.params = params

    def __call__(self, sample, target_ids, known) -> dict[str, BBox]:
        elements = sample.foreground_elements()
        features = featurize(sample.canvas, elements, known_positions=known, k=self.params.k)
        tokens = greedy_decode(self.params, features)
        layout = detokenize_layout(tokens, elements, sample.canvas)
        boxes = {e.id: b for e, b in layout.placements}
        return {tid: boxes[tid] for tid in target_ids}


class OraclePredictor:
    """Returns the ground-truth boxes; scores exactly 100 in every mode."""

    def __call__(self, sample, target_ids, known) -> dict[str, BBox]:
        return {tid: sample.gt_box(tid) for tid in target_ids}


def _known_tokens(sample: DatasetSample, ids: Sequence[str], k: int) -> dict[str, tuple]:
    known = {}
    for element_id in ids:
        box = sample.gt_box(element_id)
        known[element_id] = (
            bin_coord(box.x, sample.canvas.width, k),
            bin_coord(box.y, sample.canvas.height, k),
            bin_coord(box.w, sample.canvas.width, k),
            bin_coord(box.h, sample.canvas.height, k),
        )
    return known


def _instance_iou(sample: DatasetSample, predicted: Mapping[str, BBox], target_ids) -> float:
    pred = np.empty((len(target_ids), 4), dtype=np.float64)
    gt = np.empty((len(target_ids), 4), dtype=np.float64)
    for i, tid in enumerate(target_ids):
        pred[i] = predicted[tid].corners()
        gt[i] = sample.gt_box(tid).corners()
    return float(_kernels.iou_many(pred, gt).mean())


def mean_iou(
    samples: Sequence[DatasetSample],
    predictor: Predictor,
    mode: EvalMode,
    k: int,
) -> tuple[EvalReport, list[tuple[str, float]]]:
    """Macro-averaged IoU report plus per-instance (id, score) rows."""
    rows: list[tuple[str, float]] = []
    skipped = 0
    for sample in samples:
        fg_ids = [e.id for e in sample.foreground_elements()]
        text_ids = [e.id for e in sample.text_elements()]
        if mode is EvalMode.ALL:
            if not fg_ids:
                skipped += 1
                continue
            predicted = predictor(sample, fg_ids, {})
            rows.append((sample.id, _instance_iou(sample, predicted, fg_ids)))
        elif mode is EvalMode.SINGLE:
            if not text_ids:
                skipped += 1
                continue
            for tid in text_ids:
                others = [i for i in fg_ids if i != tid]
                known = _known_tokens(sample, others, k)
                predicted = predictor(sample, [tid], known)
                rows.append((f"{sample.id}:{tid}", _instance_iou(sample, predicted, [tid])))
        else:
            if not text_ids:
                skipped += 1
                continue
            others = [i for i in fg_ids if i not in text_ids]
            known = _known_tokens(sample, others, k)
            predicted = predictor(sample, text_ids, known)
            rows.append((sample.id, _instance_iou(sample, predicted, text_ids)))
    if not rows:
        raise ValueError(f"no evaluable instances for mode {mode.value}")
    mean = 100.0 * float(np.mean([score for _, score in rows]))
    report = EvalReport(
        mode=mode, mean_iou_percent=mean, n_instances=len(rows), n_skipped=skipped
    )
    return report, rows


def win_rate(
    samples: Sequence[DatasetSample],
    predictor: Predictor,
    judge,
    cache: Optional[DecisionCache] = None,
    threads: int = 1,
) -> tuple[EvalReport, list[tuple[str, int]]]:
    """Fraction of samples whose predicted layout beats ground truth (predicted is input 1).

    Per-sample judging may run on a thread pool (remote judges bound the
    in-flight request count themselves); results reduce in sample order so
    reports are stable for any thread count.
    """

    def judge_one(sample) -> tuple[str, Optional[int]]:
        fg_ids = [e.id for e in sample.foreground_elements()]
        if not fg_ids:
            return "skipped", None
        predicted = sample.with_predicted(predictor(sample, fg_ids, {}))
        gt = sample.gt_layout()
        try:
            decision = cached_compare(cache, judge, predicted, gt)
        except JudgeUnavailableError as exc:
            logger.warning("judge failed for sample %s: %s", sample.id, exc)
            return "failed", None
        return "ok", 1 if decision.d == 1 else 0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(judge_one, samples))
    else:
        outcomes = [judge_one(s) for s in samples]

    rows: list[tuple[str, int]] = []
    wins = 0
    failed = 0
    skipped = 0
    for sample, (status, win) in zip(samples, outcomes):
        if status == "skipped":
            skipped += 1
        elif status == "failed":
            failed += 1
        else:
            wins += win
            rows.append((sample.id, win))
    if not rows:
        raise ValueError("no samples were successfully judged")
    rate = 100.0 * wins / len(rows)
    report = EvalReport(
        mode=EvalMode.ALL,
        mean_iou_percent=float("nan"),
        n_instances=len(rows),
        n_skipped=skipped,
        win_rate_percent=rate,
        n_failed=failed,
    )
    return report, rows
