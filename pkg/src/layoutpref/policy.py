"""The trainable layout policy and its training math.

A factorized linear-softmax model: each element is described by a fixed
13-dimensional feature vector, and four independent heads (x, y, w, h) emit
logits over the K+1 position tokens. Tokens within a layout are conditionally
independent given the features. All math is double precision; gradients are
analytic and checked against central finite differences.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .geometry import Canvas, Element, ElementKind, TokenizedLayout

ATTRS = ("x", "y", "w", "h")
FEATURE_DIM = 13
KIND_ORDER = (ElementKind.IMAGE, ElementKind.TEXT, ElementKind.SHAPE, ElementKind.BACKGROUND)

_CKPT_MAGIC = b"LPOL"
_CKPT_VERSION = 1


def featurize(
    canvas: Canvas,
    elements: Sequence[Element],
    known_positions: Optional[Mapping[str, Sequence[int]]] = None,
    k: Optional[int] = None,
) -> np.ndarray:
    """One feature row per non-background element.

    Layout: kind one-hot (4) | intrinsic aspect (1) | index/count (1) |
    count/32 capped (1) | log canvas aspect clipped to [1/4, 4] (1) |
    known-position flag plus K-normalized known box (5).
    """
    known_positions = known_positions or {}
    if known_positions and k is None:
        raise ValueError("k is required to normalize known positions")
    fg = [e for e in elements if e.kind is not ElementKind.BACKGROUND]
    n = len(fg)
    out = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    aspect = math.log(min(max(canvas.width / canvas.height, 0.25), 4.0))
    for i, element in enumerate(fg):
        out[i, KIND_ORDER.index(element.kind)] = 1.0
        out[i, 4] = element.intrinsic_aspect if element.intrinsic_aspect is not None else 1.0
        out[i, 5] = i / n
        out[i, 6] = min(n / 32.0, 1.0)
        out[i, 7] = aspect
        if element.id in known_positions:
            tokens = known_positions[element.id]
            if len(tokens) != 4:
                raise ValueError(f"known position for {element.id!r} must be 4 tokens")
            out[i, 8] = 1.0
            out[i, 9:13] = [t / k for t in tokens]
    return out


@dataclass
class PolicyParams:
    """Four (K+1) x 13 heads plus biases; a frozen copy serves as the reference policy."""

    k: int
    weights: np.ndarray  # (4, k+1, FEATURE_DIM)
    biases: np.ndarray  # (4, k+1)
    temperature: float = 1.0

    @property
    def n_classes(self) -> int:
        return self.k + 1

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[2]

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            k=self.k,
            weights=self.weights.copy(),
            biases=self.biases.copy(),
            temperature=self.temperature,
        )

    def n_parameters(self) -> int:
        return self.weights.size + self.biases.size


@dataclass
class PolicyGrads:
    weights: np.ndarray
    biases: np.ndarray


def init_params(
    k: int,
    feature_dim: int = FEATURE_DIM,
    scale: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> PolicyParams:
    """Zero (uniform-softmax) initialization by default; optional random scale."""
    if scale > 0.0:
        rng = rng or np.random.default_rng(0)
        w = rng.normal(0.0, scale, size=(4, k + 1, feature_dim))
        b = rng.normal(0.0, scale, size=(4, k + 1))
    else:
        w = np.zeros((4, k + 1, feature_dim))
        b = np.zeros((4, k + 1))
    return PolicyParams(k=k, weights=w, biases=b)


def zero_grads(params: PolicyParams) -> PolicyGrads:
    return PolicyGrads(np.zeros_like(params.weights), np.zeros_like(params.biases))


def logits(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    """(n, 4, K+1) logits for per-element, per-attribute token distributions."""
    # einsum over heads: features (n, F) x weights (4, C, F) -> (n, 4, C)
    z = np.einsum("nf,acf->nac", features, params.weights)
    return z + params.biases[None, :, :]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def _token_matrix(tokens, n: int) -> np.ndarray:
    """Validate and reshape a 4n token sequence into an (n, 4) int array."""
    t = np.asarray(tokens.tokens if isinstance(tokens, TokenizedLayout) else tokens, dtype=np.int64)
    if t.size != 4 * n:
        raise ValueError(f"token count {t.size} does not match 4 x {n} elements")
    return t.reshape(n, 4)


def log_prob(params: PolicyParams, features: np.ndarray, tokens) -> float:
    """Total log-probability of the token sequence under the policy; always <= 0."""
    n = features.shape[0]
    tok = _token_matrix(tokens, n)
    if np.any(tok < 0) or np.any(tok > params.k):
        raise ValueError(f"token outside [0, {params.k}]")
    lp = _log_softmax(logits(params, features))
    idx_n = np.arange(n)[:, None]
    idx_a = np.arange(4)[None, :]
    return float(lp[idx_n, idx_a, tok].sum())


def log_prob_and_grad(
    params: PolicyParams, features: np.ndarray, tokens
) -> tuple[float, PolicyGrads]:
    """log_prob plus its gradient: per head, (one-hot - softmax) outer features."""
    n = features.shape[0]
    tok = _token_matrix(tokens, n)
    if np.any(tok < 0) or np.any(tok > params.k):
        raise ValueError(f"token outside [0, {params.k}]")
    z = logits(params, features)
    lp = _log_softmax(z)
    idx_n = np.arange(n)[:, None]
    idx_a = np.arange(4)[None, :]
    total = float(lp[idx_n, idx_a, tok].sum())

    dlogits = -_softmax(z)  # (n, 4, C)
    dlogits[idx_n, idx_a, tok] += 1.0
    gw = np.einsum("nac,nf->acf", dlogits, features)
    gb = dlogits.sum(axis=0)
    return total, PolicyGrads(gw, gb)


def ce_loss_and_grad(
    params: PolicyParams, batch: Sequence[tuple[np.ndarray, object]]
) -> tuple[float, PolicyGrads]:
    """Cross-entropy over ground-truth tokens: mean over samples of the per-token -log p sum."""
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    total = 0.0
    grads = zero_grads(params)
    for features, tokens in batch:
        lp, g = log_prob_and_grad(params, features, tokens)
        total -= lp
        grads.weights -= g.weights
        grads.biases -= g.biases
    s = len(batch)
    grads.weights /= s
    grads.biases /= s
    return total / s, grads


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def aapa_loss_and_grad(
    params: PolicyParams,
    ref_params: PolicyParams,
    batch: Sequence[tuple[np.ndarray, object, object]],
    beta: float = 0.1,
) -> tuple[float, PolicyGrads]:
    """Preference loss over (features, winner_tokens, loser_tokens) triples.

    loss = mean of -log sigmoid(beta * ((lp_w - lp_w_ref) - (lp_l - lp_l_ref)));
    the gradient flows through the trainable policy only, the reference stays
    frozen.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    if beta <= 0:
        raise ValueError("beta must be positive")
    total = 0.0
    grads = zero_grads(params)
    for features, winner, loser in batch:
        lw, gw = log_prob_and_grad(params, features, winner)
        ll, gl = log_prob_and_grad(params, features, loser)
        lw_ref = log_prob(ref_params, features, winner)
        ll_ref = log_prob(ref_params, features, loser)
        z = beta * ((lw - lw_ref) - (ll - ll_ref))
        total += float(np.logaddexp(0.0, -z))
        coef = -beta * _sigmoid(-z)
        grads.weights += coef * (gw.weights - gl.weights)
        grads.biases += coef * (gw.biases - gl.biases)
    s = len(batch)
    grads.weights /= s
    grads.biases /= s
    return total / s, grads


def implicit_margins(
    params: PolicyParams,
    ref_params: PolicyParams,
    batch: Sequence[tuple[np.ndarray, object, object]],
    beta: float = 0.1,
) -> np.ndarray:
    """Per-pair implicit-reward margins beta * (delta_winner - delta_loser)."""
    out = np.empty(len(batch), dtype=np.float64)
    for i, (features, winner, loser) in enumerate(batch):
        dw = log_prob(params, features, winner) - log_prob(ref_params, features, winner)
        dl = log_prob(params, features, loser) - log_prob(ref_params, features, loser)
        out[i] = beta * (dw - dl)
    return out


def sample_tokens(
    params: PolicyParams,
    features: np.ndarray,
    temperature: float,
    rng: np.random.Generator,
) -> TokenizedLayout:
    """Independent categorical draw per token from the tempered softmax; seeded."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = features.shape[0]
    probs = _softmax(logits(params, features) / temperature).reshape(n * 4, params.n_classes)
    cdf = np.cumsum(probs, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(n * 4)
    tokens = (cdf < u[:, None]).sum(axis=1)
    return TokenizedLayout(tokens.tolist(), params.k)


def greedy_decode(params: PolicyParams, features: np.ndarray) -> TokenizedLayout:
    """Argmax decoding (the temperature -> 0 limit of sampling)."""
    z = logits(params, features)
    tokens = z.argmax(axis=-1).reshape(-1)
    return TokenizedLayout(tokens.tolist(), params.k)


@dataclass
class AdamWState:
    step: int
    m_weights: np.ndarray
    v_weights: np.ndarray
    m_biases: np.ndarray
    v_biases: np.ndarray


def init_adamw(params: PolicyParams) -> AdamWState:
    return AdamWState(
        step=0,
        m_weights=np.zeros_like(params.weights),
        v_weights=np.zeros_like(params.weights),
        m_biases=np.zeros_like(params.biases),
        v_biases=np.zeros_like(params.biases),
    )


def adamw_step(
    params: PolicyParams,
    grads: PolicyGrads,
    state: AdamWState,
    lr: float,
    weight_decay: float = 0.01,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[PolicyParams, AdamWState]:
    """One decoupled-weight-decay adaptive update, in place."""
    if grads.weights.shape != params.weights.shape or grads.biases.shape != params.biases.shape:
        raise ValueError("gradient shapes do not match parameters")
    b1, b2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1**t
    bc2_sqrt = math.sqrt(1.0 - b2**t)
    for p, g, m, v in (
        (params.weights, grads.weights, state.m_weights, state.v_weights),
        (params.biases, grads.biases, state.m_biases, state.v_biases),
    ):
        p *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v) / bc2_sqrt + eps
        p -= (lr / bc1) * m / denom
    return params, state


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_ratio: float = 0.03) -> float:
    """Linear warmup to base_lr, then cosine decay to zero at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(warmup_ratio * total_steps)
    if warmup > 0 and step < warmup:
        return base_lr * step / warmup
    if total_steps <= warmup:
        return base_lr
    progress = (step - warmup) / (total_steps - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def finite_diff_check(
    loss_fn: Callable[[PolicyParams], tuple[float, PolicyGrads]],
    params: PolicyParams,
    eps: float = 1e-5,
    n_coords: int = 256,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    Probes a random subset of coordinates (weights and biases jointly).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = rng or np.random.default_rng(0)
    loss0, grads = loss_fn(params)
    flat_grad = np.concatenate([grads.weights.ravel(), grads.biases.ravel()])
    total = flat_grad.size
    coords = rng.choice(total, size=min(n_coords, total), replace=False)
    # keeps central-difference cancellation noise on near-zero gradients from
    # registering as relative error while leaving real mismatches visible
    floor = 1e-4 * max(1.0, abs(loss0))

    work = params.copy()
    w_size = params.weights.size
    max_rel = 0.0
    for c in coords:
        if c < w_size:
            view = work.weights.ravel()
            idx = c
        else:
            view = work.biases.ravel()
            idx = c - w_size
        orig = view[idx]
        view[idx] = orig + eps
        lp, _ = loss_fn(work)
        view[idx] = orig - eps
        lm, _ = loss_fn(work)
        view[idx] = orig
        fd = (lp - lm) / (2.0 * eps)
        an = flat_grad[c]
        rel = abs(fd - an) / max(abs(fd), abs(an), floor)
        max_rel = max(max_rel, rel)
    return max_rel


def save_checkpoint(params: PolicyParams, path, manifest: Optional[Mapping[str, object]] = None):
    """Versioned binary checkpoint plus a sidecar text manifest (no timestamps)."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<III", _CKPT_VERSION, params.k, params.feature_dim))
        fh.write(struct.pack("<d", params.temperature))
        fh.write(np.ascontiguousarray(params.weights, dtype=np.float64).tobytes())
        fh.write(np.ascontiguousarray(params.biases, dtype=np.float64).tobytes())
    if manifest is not None:
        with open(str(path) + ".manifest", "w", encoding="utf-8") as fh:
            for key in sorted(manifest):
                fh.write(f"{key}={manifest[key]}\n")


def load_checkpoint(path) -> tuple[PolicyParams, dict[str, str]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a policy checkpoint: bad magic {magic!r}")
        version, k, feat = struct.unpack("<III", fh.read(12))
        if version != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (temperature,) = struct.unpack("<d", fh.read(8))
        w = np.frombuffer(fh.read(8 * 4 * (k + 1) * feat), dtype=np.float64).reshape(
            4, k + 1, feat
        ).copy()
        b = np.frombuffer(fh.read(8 * 4 * (k + 1)), dtype=np.float64).reshape(4, k + 1).copy()
    manifest: dict[str, str] = {}
    manifest_path = str(path) + ".manifest"
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if "=" in line:
                    key, _, value = line.partition("=")
                    manifest[key.strip()] = value.strip()
    except FileNotFoundError:
        pass
    return PolicyParams(k=k, weights=w, biases=b, temperature=temperature), manifest
