"""Pairwise aesthetic judging: prompt, verdict parsing, remote client, offline heuristic, cache.

The remote judge speaks an OpenAI-compatible chat-completion protocol with two
inline PNG attachments and expects a JSON verdict ``{"better_layout":
"image_1"|"image_2"}`` somewhere in the reply. The offline heuristic judge
orders layouts by the combined quality score, breaking exact ties toward the
second input (in evaluation the ground truth is passed second, so ties count
against the model).
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests

from . import render as render_mod
from .errors import CacheError, JudgeUnavailableError, UnparsableVerdictError
from .geometry import Layout
from .metrics import quality

logger = logging.getLogger(__name__)

JUDGE_PROMPT = """You are a visual language model designed to evaluate and rate visual templates. You are presented with 2 visual templates, and your task is to choose the better template between these 2 based on the following criteria:

Aesthetics: How visually appealing is the template,
Clarity: How clear and easy to understand is the template,
Usability: How practical and user-friendly is the template,
Creativity: How unique and innovative is the design,
Consistency: How consistent is the template with design principles and standards.

Please provide your answer in the following JSON format and do not include any other details:

{"better_layout": "answer"}

where answer could either be image_1 or image_2."""

API_KEY_ENV = "JUDGE_API_KEY"


@dataclass(frozen=True)
class JudgeDecision:
    d: int  # 1: first input wins, 2: second input wins
    judge_id: str = ""
    raw_response: Optional[str] = None
    swapped: bool = False

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"decision must be 1 or 2, got {self.d}")


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str
    model_name: str
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    swap_and_vote: bool = False
    retry_backoff: float = 0.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def judge_prompt() -> str:
    """The verbatim pairwise-comparison prompt (byte-stable)."""
    return JUDGE_PROMPT


def parse_decision(text: str) -> JudgeDecision:
    """Extract the verdict from the first well-formed JSON object in the text."""
    decoder = json.JSONDecoder()
    obj = None
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text, start)
            break
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
    if not isinstance(obj, dict):
        raise UnparsableVerdictError("no JSON object found in judge reply")
    value = obj.get("better_layout")
    if value == "image_1":
        return JudgeDecision(d=1, raw_response=text)
    if value == "image_2":
        return JudgeDecision(d=2, raw_response=text)
    raise UnparsableVerdictError(f"unrecognized better_layout value: {value!r}")


def _image_content(img: np.ndarray) -> dict:
    payload = base64.b64encode(render_mod.encode_png(img)).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{payload}"}}


def _request_verdict(cfg: JudgeConfig, img1: np.ndarray, img2: np.ndarray) -> JudgeDecision:
    """One judge exchange with retries on transport failure or unparsable verdicts."""
    body = {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": judge_prompt()},
                    _image_content(img1),
                    _image_content(img2),
                ],
            }
        ],
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    attempts = cfg.max_retries + 1
    last_error: Exception | None = None
    for attempt in range(attempts):
        if attempt > 0 and cfg.retry_backoff > 0:
            time.sleep(cfg.retry_backoff * attempt)
        try:
            resp = requests.post(
                cfg.endpoint.rstrip("/") + "/chat/completions",
                json=body,
                headers=headers,
                timeout=cfg.timeout,
            )
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
            return parse_decision(content)
        except (requests.RequestException, UnparsableVerdictError, KeyError, ValueError) as exc:
            last_error = exc
            logger.debug("judge attempt %d/%d failed: %s", attempt + 1, attempts, exc)
    raise JudgeUnavailableError(f"judge failed after {attempts} attempts: {last_error}")


def compare_remote(
    cfg: JudgeConfig,
    img1: np.ndarray,
    img2: np.ndarray,
    layouts: Optional[tuple[Layout, Layout]] = None,
) -> JudgeDecision:
    """Remote pairwise comparison; first image is input 1.

    With swap_and_vote a second call runs with the images swapped; on
    disagreement the heuristic judge breaks the tie (requires ``layouts``)
    and the decision is flagged as swapped.
    """
    if img1.size == 0 or img2.size == 0:
        raise ValueError("judge images must be nonempty")
    judge_id = f"remote:{cfg.model_name}"
    first = _request_verdict(cfg, img1, img2)
    if not cfg.swap_and_vote:
        return JudgeDecision(d=first.d, judge_id=judge_id, raw_response=first.raw_response)
    second = _request_verdict(cfg, img2, img1)
    if first.d == 1 and second.d == 2:
        return JudgeDecision(d=1, judge_id=judge_id, raw_response=first.raw_response)
    if first.d == 2 and second.d == 1:
        return JudgeDecision(d=2, judge_id=judge_id, raw_response=first.raw_response)
    if layouts is None:
        raise JudgeUnavailableError("position-biased verdict and no layouts for heuristic fallback")
    fallback = HeuristicJudge().compare(layouts[0], layouts[1])
    return JudgeDecision(
        d=fallback.d, judge_id=judge_id, raw_response=first.raw_response, swapped=True
    )


class HeuristicJudge:
    """Deterministic offline judge: higher combined quality wins; exact ties go to input 2."""

    judge_id = "heuristic-quality-v1"

    def __init__(self):
        self.calls = 0
        self._calls_lock = threading.Lock()

    def compare(self, g1: Layout, g2: Layout) -> JudgeDecision:
        with self._calls_lock:
            self.calls += 1
        q1 = quality(g1).q
        q2 = quality(g2).q
        return JudgeDecision(d=1 if q1 > q2 else 2, judge_id=self.judge_id)


class RemoteJudge:
    """Remote judge over rendered layouts, with a bounded in-flight request limit."""

    def __init__(
        self,
        cfg: JudgeConfig,
        style: Optional[render_mod.RenderStyle] = None,
        assets: Optional[render_mod.AssetResolver] = None,
        max_inflight: int = 4,
    ):
        self.cfg = cfg
        self.style = style or render_mod.RenderStyle()
        self.assets = assets
        self.judge_id = f"remote:{cfg.model_name}"
        self.calls = 0
        self._calls_lock = threading.Lock()
        self._gate = threading.Semaphore(max_inflight)

    def compare(self, g1: Layout, g2: Layout) -> JudgeDecision:
        with self._calls_lock:
            self.calls += 1
        img1 = render_mod.render(g1, self.style, self.assets)
        img2 = render_mod.render(g2, self.style, self.assets)
        with self._gate:
            return compare_remote(self.cfg, img1, img2, layouts=(g1, g2))


def layout_hash(layout: Layout) -> str:
    """Content hash of a layout (canvas, ordered elements, boxes)."""
    payload = {
        "canvas": [layout.canvas.width, layout.canvas.height],
        "placements": [
            [e.id, e.kind.value, e.text, e.asset_ref, e.intrinsic_aspect, [b.x, b.y, b.w, b.h]]
            for e, b in layout.placements
        ],
    }
    blob = json.dumps(payload, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def image_hash(img: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(img).tobytes()).hexdigest()


class DecisionCache:
    """Append-only JSONL store of judge decisions keyed by content hashes.

    Corrupt lines are skipped with a warning; write failures degrade to
    uncached judging rather than aborting a pairing run.
    """

    def __init__(self, path):
        self.path = path
        self.entries: dict[tuple[str, str, str], JudgeDecision] = {}
        self.hits = 0
        self.misses = 0
        self._write_lock = threading.Lock()
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        obj = json.loads(line)
                        key = (obj["key1"], obj["key2"], obj["judge_id"])
                        self.entries[key] = JudgeDecision(
                            d=int(obj["d"]),
                            judge_id=obj["judge_id"],
                            raw_response=obj.get("raw_response"),
                        )
                    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                        logger.warning("skipping corrupt cache line %d in %s: %s", lineno, path, exc)
        except FileNotFoundError:
            pass

    def get(self, key: tuple[str, str, str]) -> Optional[JudgeDecision]:
        return self.entries.get(key)

    def count_hit(self) -> None:
        with self._write_lock:
            self.hits += 1

    def count_miss(self) -> None:
        with self._write_lock:
            self.misses += 1

    def put(self, key: tuple[str, str, str], decision: JudgeDecision) -> None:
        record = {
            "key1": key[0],
            "key2": key[1],
            "judge_id": key[2],
            "d": decision.d,
            "raw_response": decision.raw_response,
            "timestamp": time.time(),
        }
        try:
            with self._write_lock:
                self.entries[key] = decision
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, separators=(",", ":")) + "\n")
        except OSError as exc:
            raise CacheError(str(exc))


def cached_compare(cache: Optional[DecisionCache], judge, g1: Layout, g2: Layout) -> JudgeDecision:
    """Consult the cache before invoking the judge; swapped inputs are distinct keys."""
    if cache is None:
        return judge.compare(g1, g2)
    key = (layout_hash(g1), layout_hash(g2), judge.judge_id)
    hit = cache.get(key)
    if hit is not None:
        cache.count_hit()
        return hit
    cache.count_miss()
    decision = judge.compare(g1, g2)
    try:
        cache.put(key, decision)
    except CacheError as exc:
        logger.warning("decision cache write failed, judging uncached: %s", exc)
    return decision
