"""Command-line pipeline: synth/ingest -> stats/filter -> train-ce -> pair -> train-aapa -> eval.

Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness flows
from --seed; a flat key=value --config file overrides parsed flags. Every run
logs its fully resolved configuration before executing.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np

from . import _kernels, dataio, evaluate, judge as judge_mod, metrics, policy, preference, render as render_mod, training
from .errors import LayoutPrefError
from .geometry import TokenizedLayout

logger = logging.getLogger("layoutpref")

DEFAULT_K = 224


def _add_global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for parallel stages")
    parser.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    parser.add_argument("--config", default=None, help="flat key=value file overriding flags")


def _add_judge_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--judge", default="heuristic", choices=["heuristic", "remote"])
    parser.add_argument("--endpoint", default=None, help="remote judge base URL")
    parser.add_argument("--model", default="vision-judge", help="remote judge model name")
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--swap-and-vote", action="store_true")
    parser.add_argument("--cache", default=None, help="decision-cache JSONL path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutpref",
        description="Preference-optimized layout generation pipeline",
    )
    _add_global_flags(parser)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic layout corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--style", default="grid_aligned", choices=dataio.SYNTHETIC_STYLES)
    p.add_argument("--elements", default="4:8", help="element count range LO:HI")
    p.add_argument("--canvas", action="append", default=None, help="canvas size WxH (repeatable)")
    p.add_argument("--jitter", type=float, default=24.0)

    p = sub.add_parser("ingest", help="load and validate a dataset file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--validate", action="store_true")

    p = sub.add_parser("stats", help="per-layout quality report and mu-sigma filter verdicts")
    p.add_argument("--data", required=True)
    p.add_argument("--csv", default=None, help="write the report here instead of stdout")

    p = sub.add_parser("filter", help="write the quality-filtered subset of a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ce", help="cross-entropy instruction tuning")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--warmup-ratio", type=float, default=0.03)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--log-every", type=int, default=1)

    p = sub.add_parser("pair", help="build a preference-pair dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--p-gt", type=float, default=0.5)
    p.add_argument("--candidates", type=int, default=2)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--no-filter", action="store_true", help="disable quality filtering")
    _add_judge_flags(p)

    p = sub.add_parser("train-aapa", help="preference-alignment training")
    p.add_argument("--pairs", required=True)
    p.add_argument("--init", required=True, help="checkpoint used for policy and frozen reference")
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--warmup-ratio", type=float, default=0.03)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--log-every", type=int, default=1)

    p = sub.add_parser("eval-iou", help="mean IoU in all/single/multiple modes")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--mode", default="all", choices=[m.value for m in evaluate.EvalMode])
    p.add_argument("--predictor", default="policy", choices=["policy", "oracle"])
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--csv", default=None)

    p = sub.add_parser("eval-winrate", help="judge win rate of predictions vs ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--predictor", default="policy", choices=["policy", "oracle"])
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--csv", default=None)
    _add_judge_flags(p)

    p = sub.add_parser("render", help="rasterize one sample to PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--mode", default="boxes", choices=["boxes", "composite"])
    p.add_argument("--out", required=True)
    p.add_argument("--long-side", type=int, default=512)

    p = sub.add_parser("gradcheck", help="finite-difference verification of analytic gradients")
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--coords", type=int, default=256)

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    """Override parsed flags with key=value lines; keys use flag dest names."""
    if not args.config:
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line (expected key=value): {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            current = getattr(args, key, None)
            if isinstance(current, bool):
                coerced: object = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                coerced = int(value)
            elif isinstance(current, float):
                coerced = float(value)
            else:
                coerced = value
            setattr(args, key, coerced)


def _log_resolved_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())}
    logger.info("resolved config: %s", json.dumps(resolved, default=str))
    logger.info("kernel backend: %s", _kernels.BACKEND)


def _build_judge(args: argparse.Namespace):
    if args.judge == "heuristic":
        return judge_mod.HeuristicJudge()
    if not args.endpoint:
        raise ValueError("--endpoint is required for the remote judge")
    cfg = judge_mod.JudgeConfig(
        endpoint=args.endpoint,
        model_name=args.model,
        timeout=args.timeout,
        max_retries=args.max_retries,
        swap_and_vote=args.swap_and_vote,
    )
    return judge_mod.RemoteJudge(cfg)


def _open_cache(args: argparse.Namespace) -> Optional[judge_mod.DecisionCache]:
    return judge_mod.DecisionCache(args.cache) if args.cache else None


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def _parse_canvas(values: Optional[list[str]]) -> tuple[tuple[float, float], ...]:
    if not values:
        return ((512.0, 512.0),)
    out = []
    for v in values:
        w, _, h = v.lower().partition("x")
        out.append((float(w), float(h)))
    return tuple(out)


def _step_printer(out=None):
    def log(step: int, lr: float, loss: float) -> None:
        print(f"{step},{lr:.8f},{loss:.6f}", file=out or sys.stdout)

    return log


def _cmd_synth(args) -> int:
    spec = dataio.SyntheticSpec(
        seed=args.seed,
        n_samples=args.n,
        elements_per_sample=_parse_range(args.elements),
        style=args.style,
        canvas_sizes=_parse_canvas(args.canvas),
        jitter=args.jitter,
    )
    samples = dataio.make_synthetic(spec)
    dataio.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    samples = dataio.load_dataset(args.input)
    n_boxes = sum(len(s.elements) for s in samples)
    print(f"ok: {len(samples)} samples, {n_boxes} elements")
    return 0


def _quality_rows(samples, threads: int):
    layouts = [s.gt_layout() for s in samples]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(metrics.quality, layouts))
    else:
        reports = [metrics.quality(layout) for layout in layouts]
    return reports


def _cmd_stats(args) -> int:
    samples = dataio.load_dataset(args.data)
    if not samples:
        raise ValueError("dataset is empty")
    reports = _quality_rows(samples, args.threads)
    stats = metrics.dataset_stats([r.q for r in reports])
    lines = ["id,q_align,q_overlap_raw,q_overlap_norm,q,kept"]
    kept_count = 0
    for sample, r in zip(samples, reports):
        kept = r.q > stats.threshold
        kept_count += kept
        lines.append(
            f"{sample.id},{r.q_align:.6f},{r.q_overlap_raw:.6f},"
            f"{r.q_overlap_norm:.6f},{r.q:.6f},{int(kept)}"
        )
    text = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    logger.info(
        "quality stats: mean=%.6f std=%.6f threshold=%.6f kept=%d/%d",
        stats.mean, stats.std, stats.threshold, kept_count, len(samples),
    )
    if kept_count == 0:
        logger.warning(
            "strict filtering dropped every layout (std=%.3g); threshold equals the mean",
            stats.std,
        )
    return 0


def _cmd_filter(args) -> int:
    samples = dataio.load_dataset(args.data)
    if not samples:
        raise ValueError("dataset is empty")
    kept_idx, stats = metrics.filter_layouts([s.gt_layout() for s in samples])
    dataio.save_dataset([samples[i] for i in kept_idx], args.out)
    if not kept_idx:
        logger.warning("strict filtering dropped every layout (std=%.3g)", stats.std)
    print(f"kept {len(kept_idx)}/{len(samples)} (threshold {stats.threshold:.6f})")
    return 0


def _cmd_train_ce(args) -> int:
    samples = dataio.load_dataset(args.data)
    init = None
    if args.resume:
        init, _ = policy.load_checkpoint(args.resume)
        if init.k != args.k:
            raise ValueError(f"--k {args.k} does not match resume checkpoint k={init.k}")
    cfg = training.TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        base_lr=args.lr,
        warmup_ratio=args.warmup_ratio,
        weight_decay=args.weight_decay,
        seed=args.seed,
        log_every=args.log_every,
    )
    params = training.train_ce(samples, args.k, cfg, init=init, log=_step_printer())
    policy.save_checkpoint(
        params,
        args.out,
        manifest={
            "kind": "ce",
            "k": args.k,
            "steps": cfg.steps,
            "base_lr": cfg.base_lr,
            "warmup_ratio": cfg.warmup_ratio,
            "weight_decay": cfg.weight_decay,
            "seed": cfg.seed,
        },
    )
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_pair(args) -> int:
    samples = dataio.load_dataset(args.data)
    params, _ = policy.load_checkpoint(args.ckpt)
    cfg = preference.PairingConfig(
        p_gt=args.p_gt,
        candidates_per_input=args.candidates,
        temperature=args.temperature,
        seed=args.seed,
        apply_quality_filter=not args.no_filter,
    )
    judge = _build_judge(args)
    cache = _open_cache(args)
    summary = preference.build_dataset(
        samples, params, judge, cfg, args.out, rounds=args.rounds, cache=cache,
        threads=args.threads,
    )
    print(json.dumps(summary.to_json()))
    return 0


def _cmd_train_aapa(args) -> int:
    init, _ = policy.load_checkpoint(args.init)
    pairs = preference.load_pairs(args.pairs, init.k)
    cfg = training.TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        base_lr=args.lr,
        warmup_ratio=args.warmup_ratio,
        weight_decay=args.weight_decay,
        seed=args.seed,
        log_every=args.log_every,
    )
    params, _ref = training.train_aapa(pairs, init, cfg, beta=args.beta, log=_step_printer())
    policy.save_checkpoint(
        params,
        args.out,
        manifest={
            "kind": "aapa",
            "k": init.k,
            "beta": args.beta,
            "steps": cfg.steps,
            "base_lr": cfg.base_lr,
            "warmup_ratio": cfg.warmup_ratio,
            "weight_decay": cfg.weight_decay,
            "seed": cfg.seed,
            "reference": args.init,
        },
    )
    print(f"saved checkpoint to {args.out}")
    return 0


def _make_predictor(args):
    if args.predictor == "oracle":
        return evaluate.OraclePredictor(), args.k
    if not args.ckpt:
        raise ValueError("--ckpt is required for the policy predictor")
    params, _ = policy.load_checkpoint(args.ckpt)
    return evaluate.PolicyPredictor(params), params.k


def _write_rows_csv(path: Optional[str], header: str, rows) -> None:
    if not path:
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for instance_id, score in rows:
            fh.write(f"{instance_id},{score}\n")


def _cmd_eval_iou(args) -> int:
    samples = dataio.load_dataset(args.data)
    predictor, k = _make_predictor(args)
    report, rows = evaluate.mean_iou(samples, predictor, evaluate.EvalMode(args.mode), k)
    _write_rows_csv(args.csv, "instance_id,score", [(i, f"{s:.6f}") for i, s in rows])
    print(
        f"mode={report.mode.value} mean_iou={report.mean_iou_percent:.4f} "
        f"instances={report.n_instances} skipped={report.n_skipped}"
    )
    return 0


def _cmd_eval_winrate(args) -> int:
    samples = dataio.load_dataset(args.data)
    predictor, _ = _make_predictor(args)
    judge = _build_judge(args)
    cache = _open_cache(args)
    report, rows = evaluate.win_rate(samples, predictor, judge, cache=cache, threads=args.threads)
    _write_rows_csv(args.csv, "instance_id,score", rows)
    print(
        f"win_rate={report.win_rate_percent:.4f} instances={report.n_instances} "
        f"failed={report.n_failed} skipped={report.n_skipped}"
    )
    return 0


def _cmd_render(args) -> int:
    samples = dataio.load_dataset(args.input)
    by_id = {s.id: s for s in samples}
    if args.id not in by_id:
        raise ValueError(f"sample {args.id!r} not found in {args.input}")
    style = render_mod.RenderStyle(mode=args.mode, target_long_side=args.long_side)
    img = render_mod.render(by_id[args.id].gt_layout(), style)
    render_mod.save_png(img, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    k = args.k
    spec = dataio.SyntheticSpec(seed=args.seed, n_samples=8, style="random")
    samples = dataio.make_synthetic(spec)
    params = policy.init_params(k, scale=0.1, rng=rng)
    examples = training.ce_examples(samples, k)

    def ce_fn(p):
        return policy.ce_loss_and_grad(p, examples)

    ce_err = policy.finite_diff_check(ce_fn, params, eps=args.eps, n_coords=args.coords, rng=rng)

    ref = policy.init_params(k, scale=0.1, rng=np.random.default_rng(args.seed + 1))
    pair_batch = []
    for features, tokens in examples[:4]:
        loser_tokens = list(tokens.tokens)
        loser_tokens[0] = (loser_tokens[0] + 1) % (k + 1)
        pair_batch.append((features, tokens, TokenizedLayout(loser_tokens, k)))

    def aapa_fn(p):
        return policy.aapa_loss_and_grad(p, ref, pair_batch, beta=0.1)

    aapa_err = policy.finite_diff_check(
        aapa_fn, params, eps=args.eps, n_coords=args.coords, rng=rng
    )
    print(f"ce_max_rel_error={ce_err:.3e}")
    print(f"aapa_max_rel_error={aapa_err:.3e}")
    if ce_err >= 1e-4 or aapa_err >= 1e-4:
        raise RuntimeError("gradient check failed: analytic gradients disagree with finite differences")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "stats": _cmd_stats,
    "filter": _cmd_filter,
    "train-ce": _cmd_train_ce,
    "pair": _cmd_pair,
    "train-aapa": _cmd_train_aapa,
    "eval-iou": _cmd_eval_iou,
    "eval-winrate": _cmd_eval_winrate,
    "render": _cmd_render,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        _apply_config_file(args)
        logging.basicConfig(
            level=getattr(logging, args.log_level.upper()),
            format="%(levelname)s %(name)s: %(message)s",
        )
        _log_resolved_config(args)
        return _COMMANDS[args.command](args)
    except (LayoutPrefError, ValueError, OSError, RuntimeError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
