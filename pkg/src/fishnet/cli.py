"""Command-line front end: train, evaluate, predict, and bench subcommands.

Every subcommand is deterministic given (flags, seed, data); reports carry no
timestamps or wall-clock values, so reruns produce byte-identical artifacts
(the bench timings are the one inherently non-reproducible output).  The
``CNF_THREADS`` environment variable supplies the GEMM worker count when
``--threads`` is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import gemm, model_io, models
from .data import (
    DEFAULT_BALANCE_TARGET,
    DEFAULT_HOLDOUT_COUNTS,
    build_split_plan,
    decode_image,
    load_dataset,
    resize_image,
)
from .gemm import TileConfig, bench_gemm
from .optim import SgdConfig

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def _env_threads() -> int | None:
    raw = os.environ.get("CNF_THREADS")
    return int(raw) if raw else None


def _tile_config(args) -> TileConfig:
    return TileConfig(tile=args.tile, threads=args.threads or _env_threads())


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _parse_counts(raw: str, length: int) -> tuple[int, ...]:
    counts = tuple(int(v) for v in raw.split(","))
    if len(counts) != length:
        raise ValueError(f"expected {length} comma-separated counts, got {len(counts)}")
    return counts


def cmd_train(args) -> int:
    data_root = Path(args.data)
    if not data_root.is_dir():
        print(f"error: data directory not found: {data_root}", file=sys.stderr)
        return 2

    gemm.set_default_config(_tile_config(args))
    config = models.model_config(args.variant, dropout_p=args.dropout)
    cfg = SgdConfig(
        lr=args.lr,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        batch_size=args.batch,
        epochs_per_fold=args.epochs,
    )
    holdout_counts = _parse_counts(args.holdout_counts, len(config.class_names))

    dataset, table = load_dataset(data_root, size=config.input_shape[1])
    print(
        f"loaded {table.total} images: "
        + ", ".join(f"{n}={c}" for n, c in zip(table.names, table.counts))
    )
    plan = build_split_plan(
        dataset,
        seed=args.seed,
        holdout_counts=holdout_counts,
        target=args.balance_target,
        k=args.folds,
    )
    model, report = models.train(
        config,
        dataset,
        cfg,
        plan,
        seed=args.seed,
        fresh_per_fold=args.fresh_per_fold,
    )
    model.flags["dropout_p"] = args.dropout

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_io.save_model(out_dir / "model.cnf", model)
    _atomic_write_text(
        out_dir / "report.json", json.dumps(report.to_json_dict(), indent=2) + "\n"
    )
    _atomic_write_text(out_dir / "split.json", plan.to_json() + "\n")

    print(f"train logloss (last epoch): {report.train_logloss_last:.4f}")
    for rec in report.folds:
        print(f"fold {rec.fold}: validation logloss {rec.val_logloss:.4f}")
    if report.holdout is not None:
        print(f"holdout logloss {report.holdout.logloss:.4f}, "
              f"accuracy {report.holdout.accuracy:.4f}")
        print(report.holdout.confusion.format_table(config.class_names))
    print(f"artifacts written to {out_dir}")
    return 0


def _gather_image_paths(inputs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(
                q for q in sorted(p.iterdir())
                if q.is_file() and q.suffix.lower() in _IMAGE_SUFFIXES
            )
        else:
            paths.append(p)
    return paths


def cmd_predict(args) -> int:
    model = model_io.load_model(args.model)
    hw = model.config.input_shape[1]
    paths = _gather_image_paths(args.images)
    if not paths:
        print("error: no input images found", file=sys.stderr)
        return 2

    names: list[str] = []
    batches: list[np.ndarray] = []
    for path in paths:
        try:
            pixels = resize_image(decode_image(path), (hw, hw))
        except (ValueError, OSError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
            continue
        names.append(path.name)
        batches.append(pixels)
    if not batches:
        print("error: no input image could be decoded", file=sys.stderr)
        return 1

    probs = models.predict(model, np.stack(batches))
    lines = ["image," + ",".join(model.config.class_names)]
    for name, row in zip(names, probs):
        rounded = np.round(row / row.sum(), 6)
        # push the rounding residue onto the largest entry so rows sum to 1
        rounded[int(np.argmax(rounded))] += 1.0 - rounded.sum()
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in rounded))
    csv_text = "\n".join(lines) + "\n"

    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(out_path, csv_text)
        print(f"wrote {len(names)} predictions to {out_path}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_evaluate(args) -> int:
    data_root = Path(args.data)
    if not data_root.is_dir():
        print(f"error: data directory not found: {data_root}", file=sys.stderr)
        return 2
    model = model_io.load_model(args.model)
    dataset, _ = load_dataset(data_root, size=model.config.input_shape[1])
    if not dataset:
        print("error: no labeled images found", file=sys.stderr)
        return 2
    report = models.evaluate(model, dataset)
    print(f"logloss  {report.logloss:.6f}")
    print(f"accuracy {report.accuracy:.6f}")
    print(report.confusion.format_table(report.class_names))
    if args.out:
        _atomic_write_text(
            Path(args.out), json.dumps(report.to_json_dict(), indent=2) + "\n"
        )
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    report = bench_gemm(sizes, reps=args.reps, cfg=_tile_config(args))
    sys.stdout.write(report.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fishnet",
        description="CNN training framework on a cache-tiled, multi-threaded GEMM core",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model variant on a labeled image tree")
    p.add_argument("--variant", choices=models.MODEL_VARIANTS, default="model1")
    p.add_argument("--data", required=True, help="root directory, one subdir per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=100, help="epochs per fold")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--batch", type=int, default=24)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.8)
    p.add_argument("--weight-decay", type=float, default=1e-6)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--tile", type=int, default=32)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--fresh-per-fold", action="store_true",
                   help="re-initialize parameters at each fold")
    p.add_argument("--holdout-counts",
                   default=",".join(str(c) for c in DEFAULT_HOLDOUT_COUNTS),
                   help="per-class holdout sizes, comma-separated")
    p.add_argument("--balance-target", type=int, default=DEFAULT_BALANCE_TARGET,
                   help="replicate classes below this count up to it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a labeled image tree")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="optional metrics JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="emit a probability CSV for images")
    p.add_argument("--model", required=True)
    p.add_argument("--images", nargs="+", required=True,
                   help="image files or directories")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="time naive vs tiled vs parallel GEMM")
    p.add_argument("--sizes", default="128,256,512,1024",
                   help="comma-separated square matrix orders")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--tile", type=int, default=32)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
