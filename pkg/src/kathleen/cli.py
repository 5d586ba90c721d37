"""Command line: train, evaluate, gradcheck, bench, inspect.

Exit codes: 0 success, 1 check failed (gradcheck, inspect violations),
2 configuration / input error, 3 training diverged.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench, checkpoint, gradsuite
from .autodiff import no_grad
from .config import ConfigError, ModelConfig, defaults_text, load_run_config
from .data import DataError, load_dataset, num_classes_of
from .model import STRUCTURAL_EXPECTATIONS, KathleenModel, parameter_groups
from .nn import make_rng
from .training import DivergenceError, evaluate, summarize_seeds, train

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(ConfigError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _emit(obj: dict) -> None:
    print(json.dumps(obj), flush=True)


def _load_run(config_path: str):
    run = load_run_config(config_path)
    train_split, test_split = load_dataset(run.data)
    classes = num_classes_of(run.data, train_split, test_split)
    model_cfg = run.model
    if classes != model_cfg.num_classes:
        if run.data.class_names:
            raise ConfigError(
                f"model.num_classes={model_cfg.num_classes} but data declares {classes} classes"
            )
        model_cfg = dataclasses.replace(model_cfg, num_classes=classes)
    return run, model_cfg, train_split, test_split


def cmd_train(args) -> int:
    run, model_cfg, train_split, test_split = _load_run(args.config)
    seeds = args.seeds or [args.seed if args.seed is not None else run.train.seed]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for seed in seeds:
        report_path = out / f"report-seed{seed}.jsonl"
        ckpt_path = out / f"model-seed{seed}.kath"
        with report_path.open("w", encoding="utf-8") as fh:

            def on_epoch(record, seed=seed, fh=fh):
                line = json.dumps({"seed": seed, **json.loads(record.to_json())})
                fh.write(line + "\n")
                fh.flush()
                print(line, flush=True)

            report = train(model_cfg, run.train, train_split, test_split, seed, ckpt_path, on_epoch)
            summary = {**report.summary(), "checkpoint": str(ckpt_path)}
            fh.write(json.dumps(summary) + "\n")
        _emit(summary)
        reports.append(report)
    if len(reports) > 1:
        seeds_summary = summarize_seeds(reports)
        _emit(json.loads(seeds_summary.to_json()))
        print(seeds_summary.line(), file=sys.stderr)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    run = load_run_config(args.config)
    ckpt = checkpoint.load(args.checkpoint)
    if args.strict_config and ckpt.config != run.model:
        diff = [
            f"{f.name}: config={getattr(run.model, f.name)!r} checkpoint={getattr(ckpt.config, f.name)!r}"
            for f in dataclasses.fields(ModelConfig)
            if getattr(run.model, f.name) != getattr(ckpt.config, f.name)
        ]
        raise ConfigError("checkpoint architecture differs from config: " + "; ".join(diff))
    model = checkpoint.load_model(args.checkpoint)
    train_split, test_split = load_dataset(run.data)
    split = train_split if args.split == "train" else test_split
    result = evaluate(model, split, run.train.max_len)
    _emit(
        {
            "type": "evaluation",
            "split": args.split,
            "count": result.count,
            "accuracy": result.accuracy,
            "loss": result.loss,
            "confusion": result.confusion.tolist(),
        }
    )
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.size != "tiny":
        raise UsageError(f"unknown size {args.size!r}")
    rows = gradsuite.run(seed=args.seed)
    if args.json:
        for r in rows:
            _emit({**dataclasses.asdict(r), "ok": r.ok})
    else:
        print(gradsuite.format_table(rows))
    failed = [r.name for r in rows if not r.ok]
    if failed:
        print(f"FAIL: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_bench(args) -> int:
    model = checkpoint.load_model(args.checkpoint) if args.checkpoint else None
    rows = bench.run(args.lengths, repeat=args.repeat, batch=args.batch, backward=args.backward, model=model)
    text = bench.to_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    for r in bench.ratios(rows):
        print(json.dumps({"type": "ratio", **r}), file=sys.stderr)
    return EXIT_OK


def gamma_range(model: KathleenModel, length: int = 256, batch: int = 4, seed: int = 0) -> tuple[float, float]:
    """Observed decay range over valid positions for random bytes."""
    if model.sequencer.reverb is None:
        raise ConfigError("the reverb channel is disabled")
    rng = make_rng(seed)
    data = rng.integers(0, 256, size=(batch, length), dtype=np.uint8)
    mask = np.ones_like(data, dtype=bool)
    model.eval()
    with no_grad():
        hidden, fmask = model.frontend(data, mask)
        gamma = model.sequencer.reverb.gates(hidden, fmask).data
    valid = np.broadcast_to(fmask[..., None], gamma.shape)
    return float(gamma[valid].min()), float(gamma[valid].max())


def inspect_checkpoint(path) -> tuple[dict[str, int], list[str], Optional[tuple[float, float]]]:
    ckpt = checkpoint.load(path)
    counts = parameter_groups((name, value.size) for name, value in ckpt.tensors.items())
    counts["total"] = sum(v.size for v in ckpt.tensors.values())
    violations = [
        f"{label} has {counts.get(label, 0)} parameters, expected {expected}"
        for label, expected in STRUCTURAL_EXPECTATIONS.items()
        if counts.get(label, 0) != expected
    ]
    gammas = None
    if ckpt.config.use_reverb:
        model = checkpoint.load_model(path)
        length = min(ckpt.config.l_max, frames_to_bytes(ckpt.config))
        gammas = gamma_range(model, length=length)
        lo, hi = ckpt.config.gamma_min, ckpt.config.gamma_max
        if not (lo < gammas[0] and gammas[1] < hi):
            violations.append(f"decay range [{gammas[0]:.6f}, {gammas[1]:.6f}] leaves ({lo}, {hi})")
    return counts, violations, gammas


def frames_to_bytes(cfg: ModelConfig) -> int:
    """Longest byte length whose frame count fits the positional table."""
    return (cfg.l_max - 1) * cfg.hop + cfg.window


def cmd_inspect(args) -> int:
    if args.defaults:
        sys.stdout.write(defaults_text())
        return EXIT_OK
    if not args.checkpoint:
        raise UsageError("inspect needs a checkpoint path (or --defaults)")
    counts, violations, gammas = inspect_checkpoint(args.checkpoint)
    if args.json:
        _emit({"type": "inspect", "parameters": counts, "gamma_range": gammas, "violations": violations})
    else:
        width = max(len(k) for k in counts)
        for label, n in counts.items():
            flag = ""
            if label in STRUCTURAL_EXPECTATIONS:
                flag = "ok" if n == STRUCTURAL_EXPECTATIONS[label] else f"VIOLATION (expected {STRUCTURAL_EXPECTATIONS[label]})"
            print(f"{label:<{width}}  {n:>10}  {flag}".rstrip())
        if gammas is not None:
            print(f"{'reverb.gamma':<{width}}  [{gammas[0]:.6f}, {gammas[1]:.6f}]")
        for v in violations:
            print(f"VIOLATION: {v}", file=sys.stderr)
    return EXIT_CHECK if violations else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kathleen", description="Byte-level text classifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a run config")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--seed", type=int)
    group.add_argument("--seeds", type=_int_list, help="comma-separated, e.g. 42,123,456")
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy and confusion matrix of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument(
        "--strict-config", action="store_true", help="require the config's [model] section to match the checkpoint"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter tensor")
    p.add_argument("--size", default="tiny", choices=("tiny",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="wall time and peak memory versus sequence length (CSV)")
    p.add_argument("--lengths", type=_int_list, default=[1024, 2048, 4096])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--backward", action="store_true", help="time forward + backward")
    p.add_argument("--checkpoint", help="benchmark these weights instead of a random init")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="parameter accounting and structural checks")
    p.add_argument("checkpoint", nargs="?")
    p.add_argument("--defaults", action="store_true", help="print every config default and exit")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, checkpoint.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(exc.dump(), file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
