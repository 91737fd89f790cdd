"""Training loops for the layout policy: cross-entropy and preference alignment.

Both loops draw seeded iid batches, log one machine-parsable record per step
(with the loss computed before the update, so the first record reflects the
initial parameters), and step AdamW under the cosine-with-warmup schedule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dataio import DatasetSample
from .geometry import tokenize_layout
from .policy import (
    AdamWState,
    PolicyParams,
    aapa_loss_and_grad,
    adamw_step,
    ce_loss_and_grad,
    featurize,
    init_adamw,
    init_params,
    lr_schedule,
)
from .preference import PreferencePair

logger = logging.getLogger(__name__)

StepLogger = Callable[[int, float, float], None]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 16
    base_lr: float = 0.05
    warmup_ratio: float = 0.03
    weight_decay: float = 0.01
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")


def ce_examples(samples: Sequence[DatasetSample], k: int) -> list[tuple[np.ndarray, object]]:
    """(features, gt tokens) per sample; samples without foreground or gt are skipped."""
    out = []
    for sample in samples:
        elements = sample.foreground_elements()
        if not elements or not sample.has_full_gt():
            continue
        features = featurize(sample.canvas, elements)
        tokens = tokenize_layout(sample.gt_layout(), k)
        out.append((features, tokens))
    return out


def pair_examples(pairs: Sequence[PreferencePair]) -> list[tuple[np.ndarray, object, object]]:
    return [
        (featurize(p.canvas, p.elements), p.winner_tokens, p.loser_tokens) for p in pairs
    ]


def _run_loop(
    params: PolicyParams,
    examples: list,
    loss_and_grad: Callable,
    cfg: TrainConfig,
    log: Optional[StepLogger],
) -> PolicyParams:
    if not examples:
        raise ValueError("no trainable examples")
    rng = np.random.default_rng(cfg.seed)
    state: AdamWState = init_adamw(params)
    for step in range(cfg.steps):
        idx = rng.integers(0, len(examples), size=cfg.batch_size)
        batch = [examples[i] for i in idx]
        lr = lr_schedule(step, cfg.steps, cfg.base_lr, cfg.warmup_ratio)
        loss, grads = loss_and_grad(params, batch)
        if log is not None and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            log(step + 1, lr, loss)
        params, state = adamw_step(
            params, grads, state, lr=lr, weight_decay=cfg.weight_decay
        )
    return params


def train_ce(
    samples: Sequence[DatasetSample],
    k: int,
    cfg: TrainConfig,
    init: Optional[PolicyParams] = None,
    log: Optional[StepLogger] = None,
) -> PolicyParams:
    """Instruction-tune the policy on ground-truth tokens with cross-entropy."""
    params = init.copy() if init is not None else init_params(k)
    if params.k != k:
        raise ValueError(f"checkpoint k={params.k} does not match requested k={k}")
    examples = ce_examples(samples, k)
    return _run_loop(params, examples, ce_loss_and_grad, cfg, log)


def train_aapa(
    pairs: Sequence[PreferencePair],
    init: PolicyParams,
    cfg: TrainConfig,
    beta: float = 0.1,
    log: Optional[StepLogger] = None,
) -> tuple[PolicyParams, PolicyParams]:
    """Preference-align the policy; the reference is frozen at the starting weights.

    Returns (trained params, reference params).
    """
    params = init.copy()
    ref = init.copy()
    examples = pair_examples(pairs)

    def loss_and_grad(p, batch):
        return aapa_loss_and_grad(p, ref, batch, beta=beta)

    params = _run_loop(params, examples, loss_and_grad, cfg, log)
    return params, ref
