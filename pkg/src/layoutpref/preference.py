"""Preference-pair construction: candidate sampling, quality filtering, adjudication, persistence.

Each attempt draws either a (model sample, ground truth) or a (model sample,
model sample) pair, filters both members against a mu-minus-sigma quality
threshold computed over the whole run's candidate pool, and asks the judge for
the winner. Pairs whose token sequences coincide are dropped: the preference
objective is vacuous at zero margin.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataio import DatasetSample
from .errors import DatasetError, DegenerateElementError
from .geometry import Canvas, Element, ElementKind, Layout, TokenizedLayout, detokenize_layout, tokenize_layout
from .judge import DecisionCache, cached_compare
from .metrics import dataset_stats, quality
from .policy import PolicyParams, featurize, sample_tokens

logger = logging.getLogger(__name__)

PROVENANCE_MODEL = "model-vs-model"
PROVENANCE_GT = "model-vs-gt"


@dataclass(frozen=True)
class PairingConfig:
    p_gt: float = 0.5
    candidates_per_input: int = 2
    temperature: float = 1.0
    seed: int = 0
    apply_quality_filter: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_gt <= 1.0:
            raise ValueError("p_gt must lie in [0, 1]")
        if self.candidates_per_input < 2:
            raise ValueError("candidates_per_input must be >= 2")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class PreferencePair:
    sample_id: str
    canvas: Canvas
    elements: tuple[Element, ...]
    winner_tokens: TokenizedLayout
    loser_tokens: TokenizedLayout
    provenance: str
    judge_id: str

    def __post_init__(self):
        if len(self.winner_tokens) != len(self.loser_tokens):
            raise ValueError("winner and loser token sequences must have equal length")
        if self.winner_tokens.tokens == self.loser_tokens.tokens:
            raise ValueError("winner must differ from loser")


@dataclass
class PairingSummary:
    attempts: int = 0
    emitted: int = 0
    skipped_below_threshold: int = 0
    skipped_identical: int = 0
    skipped_degenerate: int = 0
    skipped_missing_gt: int = 0
    provenance: dict = field(default_factory=lambda: {PROVENANCE_MODEL: 0, PROVENANCE_GT: 0})
    judge_calls: int = 0
    cache_hits: int = 0
    threshold: Optional[float] = None

    @property
    def skipped(self) -> int:
        return (
            self.skipped_below_threshold
            + self.skipped_identical
            + self.skipped_degenerate
            + self.skipped_missing_gt
        )

    def to_json(self) -> dict:
        return {
            "attempts": self.attempts,
            "emitted": self.emitted,
            "skipped_below_threshold": self.skipped_below_threshold,
            "skipped_identical": self.skipped_identical,
            "skipped_degenerate": self.skipped_degenerate,
            "skipped_missing_gt": self.skipped_missing_gt,
            "provenance": dict(self.provenance),
            "judge_calls": self.judge_calls,
            "cache_hits": self.cache_hits,
            "threshold": self.threshold,
        }


def generate_candidates(
    params: PolicyParams,
    sample: DatasetSample,
    cfg: PairingConfig,
    rng: np.random.Generator,
) -> list[Layout]:
    """Seeded policy samples, detokenized onto the sample's canvas."""
    elements = sample.foreground_elements()
    features = featurize(sample.canvas, elements)
    out = []
    for _ in range(cfg.candidates_per_input):
        tokens = sample_tokens(params, features, cfg.temperature, rng)
        out.append(detokenize_layout(tokens, elements, sample.canvas))
    return out


@dataclass
class _Attempt:
    sample: DatasetSample
    candidates: list[Layout]
    branch_draw: float


def _gt_foreground_layout(sample: DatasetSample) -> Layout:
    placements = [
        (r.element, r.gt_bbox)
        for r in sample.elements
        if r.element.kind is not ElementKind.BACKGROUND
    ]
    return Layout(sample.canvas, placements)


def build_pair(
    attempt: _Attempt,
    judge,
    cfg: PairingConfig,
    k: int,
    threshold: Optional[float],
    summary: PairingSummary,
    cache: Optional[DecisionCache] = None,
) -> Optional[PreferencePair]:
    """Adjudicate one attempt into a preference pair, or record why it was skipped."""
    sample = attempt.sample
    summary.attempts += 1
    use_gt = attempt.branch_draw < cfg.p_gt
    if use_gt and not sample.has_full_gt():
        summary.skipped_missing_gt += 1
        return None
    g1 = attempt.candidates[0]
    if use_gt:
        g2 = _gt_foreground_layout(sample)
        provenance = PROVENANCE_GT
    else:
        g2 = attempt.candidates[1]
        provenance = PROVENANCE_MODEL

    tokens1 = tokenize_layout(g1, k)
    tokens2 = tokenize_layout(g2, k)
    if tokens1.tokens == tokens2.tokens:
        summary.skipped_identical += 1
        return None

    try:
        q1 = quality(g1).q
        q2 = quality(g2).q
    except DegenerateElementError as exc:
        logger.info("skipping pair for %s: %s", sample.id, exc)
        summary.skipped_degenerate += 1
        return None
    if threshold is not None and (q1 <= threshold or q2 <= threshold):
        summary.skipped_below_threshold += 1
        return None

    before = getattr(judge, "calls", 0)
    decision = cached_compare(cache, judge, g1, g2)
    summary.judge_calls += getattr(judge, "calls", 0) - before
    if cache is not None:
        summary.cache_hits = cache.hits

    winner_tokens, loser_tokens = (
        (tokens1, tokens2) if decision.d == 1 else (tokens2, tokens1)
    )
    summary.provenance[provenance] += 1
    summary.emitted += 1
    return PreferencePair(
        sample_id=sample.id,
        canvas=sample.canvas,
        elements=tuple(sample.foreground_elements()),
        winner_tokens=winner_tokens,
        loser_tokens=loser_tokens,
        provenance=provenance,
        judge_id=decision.judge_id,
    )


def pair_to_json(pair: PreferencePair) -> dict:
    descriptors = []
    for e in pair.elements:
        d: dict = {"id": e.id, "kind": e.kind.value}
        if e.text is not None:
            d["text"] = e.text
        if e.intrinsic_aspect is not None:
            d["aspect"] = e.intrinsic_aspect
        descriptors.append(d)
    return {
        "sample_id": pair.sample_id,
        "provenance": pair.provenance,
        "judge_id": pair.judge_id,
        "winner_tokens": list(pair.winner_tokens.tokens),
        "loser_tokens": list(pair.loser_tokens.tokens),
        "canvas": {"w": pair.canvas.width, "h": pair.canvas.height},
        "element_descriptors": descriptors,
    }


def pair_from_json(obj: dict, k: int, line: int = 0) -> PreferencePair:
    try:
        canvas = Canvas(float(obj["canvas"]["w"]), float(obj["canvas"]["h"]))
        elements = []
        for d in obj["element_descriptors"]:
            elements.append(
                Element(
                    id=str(d["id"]),
                    kind=ElementKind(d["kind"]),
                    text=d.get("text"),
                    intrinsic_aspect=d.get("aspect"),
                )
            )
        return PreferencePair(
            sample_id=str(obj["sample_id"]),
            canvas=canvas,
            elements=tuple(elements),
            winner_tokens=TokenizedLayout(obj["winner_tokens"], k),
            loser_tokens=TokenizedLayout(obj["loser_tokens"], k),
            provenance=str(obj["provenance"]),
            judge_id=str(obj["judge_id"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"bad preference pair: {exc}", line)


def load_pairs(path, k: int) -> list[PreferencePair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", lineno)
            if "partial" in obj and len(obj) == 1:
                raise DatasetError("dataset ends with a partial-write marker", lineno)
            pairs.append(pair_from_json(obj, k, lineno))
    return pairs


def build_dataset(
    samples: Sequence[DatasetSample],
    params: PolicyParams,
    judge,
    cfg: PairingConfig,
    out_path,
    rounds: int = 1,
    cache: Optional[DecisionCache] = None,
    threads: int = 1,
) -> PairingSummary:
    """Stream preference pairs to JSONL; returns the accounting summary.

    The quality-filter threshold is the mu-minus-sigma rule over this run's
    candidate pool (model candidates plus available ground truths). Multiple
    rounds revisit every sample with fresh candidate draws. Candidate scoring
    parallelizes across attempts; pairs are reduced in submission order so the
    output is deterministic regardless of thread count.
    """
    if len(samples) == 0:
        raise ValueError("samples must be nonempty")
    seeds = np.random.SeedSequence(cfg.seed).spawn(rounds * len(samples))
    attempts: list[_Attempt] = []
    i = 0
    for _ in range(rounds):
        for sample in samples:
            rng = np.random.default_rng(seeds[i])
            i += 1
            candidates = generate_candidates(params, sample, cfg, rng)
            attempts.append(_Attempt(sample, candidates, float(rng.random())))

    summary = PairingSummary()
    if cfg.apply_quality_filter:

        def candidate_qualities(attempt: _Attempt) -> list[float]:
            return [quality(c).q for c in attempt.candidates]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool_exec:
                scored = list(pool_exec.map(candidate_qualities, attempts))
        else:
            scored = [candidate_qualities(a) for a in attempts]
        pool = [q for qs in scored for q in qs]
        for sample in samples:
            if sample.has_full_gt():
                try:
                    pool.append(quality(_gt_foreground_layout(sample)).q)
                except DegenerateElementError:
                    pass
        summary.threshold = dataset_stats(pool).threshold

    k = params.k
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            for attempt in attempts:
                pair = build_pair(attempt, judge, cfg, k, summary.threshold, summary, cache)
                if pair is not None:
                    try:
                        fh.write(json.dumps(pair_to_json(pair), separators=(",", ":")) + "\n")
                    except OSError:
                        fh.write('{"partial":true}\n')
                        raise
    except OSError:
        logger.error("pair dataset write to %s aborted", out_path)
        raise
    return summary
