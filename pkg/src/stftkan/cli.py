"""Command-line entry point: ``stftkan <command> ...``.

Exit codes: 0 success, 1 usage/config, 2 data, 3 numerical failure, 4 checkpoint.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import data, gradcheck, model, report, train
from .errors import DataError, StftKanError, UsageError

log = logging.getLogger("stftkan")

GRADCHECK_TOL = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_split(spec: str, seed: int) -> data.DatasetSplit:
    """``spec`` is a cache path or ``synthetic[:per_class[:points]]``."""
    if spec.startswith("synthetic"):
        parts = spec.split(":")
        per_class = int(parts[1]) if len(parts) > 1 else 30
        points = int(parts[2]) if len(parts) > 2 else 256
        ds = data.synthetic_shapes(per_class, points, seed=0)
    else:
        try:
            ds = data.read_cache(spec)
        except FileNotFoundError:
            raise DataError(f"{spec}: no such cache file") from None
    return data.stratified_split(ds.clouds, ds.class_names, 0.8, seed)


def _writer():
    return csv.writer(sys.stdout, lineterminator="\n")


def cmd_preprocess(args) -> int:
    raw = data.load_directory(args.input)
    ds = data.preprocess(raw, args.points)
    data.write_cache(ds, args.output)
    split = data.stratified_split(ds.clouds, ds.class_names, 0.8, args.seed)
    w = _writer()
    w.writerow(["class", "train", "test", "weight"])
    for label, name in enumerate(ds.class_names):
        n_train = sum(c.label == label for c in split.train)
        n_test = sum(c.label == label for c in split.test)
        w.writerow([name, n_train, n_test, f"{split.class_weights[label]:.4f}"])
    w.writerow(["total", len(split.train), len(split.test), ""])
    return 0


def _config_from_args(args) -> train.TrainConfig:
    overrides = {"variant": args.variant, "seed": args.seed, "epochs": args.epochs,
                 "batch_size": args.batch, "threads": args.threads}
    if args.no_augment:
        overrides["augment"] = False
    cfg = train.load_config(args.config, overrides)
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key, value)
    return cfg


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    split = _load_split(args.data, cfg.seed)
    out = Path(args.out)

    def progress(row, elapsed):
        print(f"epoch {row['epoch']:4d}  loss {row['train_loss']:.4f}  "
              f"oa {row['test_oa']:.4f}  ba {row['test_ba']:.4f}  {elapsed:.2f}s", file=sys.stderr)

    result = train.train(cfg, split, out_dir=out, resume=args.resume, progress=progress)
    if not args.no_plot:
        report.training_curves(result.history, out / "curves.png", result.timing, title=cfg.variant)
    w = _writer()
    w.writerow(["variant", "param_count", "final_oa", "final_ba", "best_epoch", "best_oa", "mean_epoch_time_s"])
    w.writerow([cfg.variant, result.model.param_count(), f"{result.final.oa:.6f}", f"{result.final.ba:.6f}",
                result.best_epoch, f"{result.state.best_oa:.6f}", f"{result.final.epoch_time_s:.3f}"])
    return 0


def cmd_eval(args) -> int:
    split = _load_split(args.data, args.seed)
    clouds = {"test": split.test, "train": split.train, "all": split.train + split.test}[args.split]
    metrics = train.evaluate(args.ckpt, split, clouds)
    w = _writer()
    w.writerow(["split", "samples", "oa", "ba", "param_count"])
    w.writerow([args.split, len(clouds), f"{metrics.oa:.6f}", f"{metrics.ba:.6f}", metrics.param_count])
    w.writerow([])
    w.writerow(["class", "recall"] + [f"pred_{n}" for n in split.class_names])
    for i, name in enumerate(split.class_names):
        w.writerow([name, f"{metrics.recall[i]:.6f}"] + list(metrics.confusion[i]))
    return 0


def cmd_params(args) -> int:
    variants = list(model.Variant) if args.variant == "all" else [model.Variant.parse(args.variant)]
    w = _writer()
    w.writerow(["variant", "param_count", "millions"])
    counts = {}
    for v in variants:
        n = model.param_count(v, args.classes)
        counts[v.label] = n
        w.writerow([v.label, n, f"{n / 1e6:.2f}"])
    if args.plot:
        report.param_bars(counts, args.plot)
    return 0


def cmd_gradcheck(args) -> int:
    w = _writer()
    w.writerow(["check", "max_rel_error", "status"])
    ok = True
    for r in gradcheck.run_all(args.seed):
        passed = r.max_rel_error < GRADCHECK_TOL
        ok &= passed
        w.writerow([r.name, f"{r.max_rel_error:.3e}", "pass" if passed else "FAIL"])
    return 0 if ok else 3


def cmd_search(args) -> int:
    space = train.read_space(args.space) if args.space else train.default_space()
    base = train.load_config(args.config, {"seed": args.seed, "threads": args.threads})
    split = _load_split(args.data, base.seed)
    rows = train.random_search(space, args.trials, args.epochs, base, split, seed=args.seed,
                               progress=lambda r: print(f"trial {r['trial']}: oa {r['test_oa']:.4f}", file=sys.stderr))
    cols = train.search_columns()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train.write_csv(out / "search.csv", rows, cols)
    if not args.no_plot:
        report.search_ranking(rows, out / "search.png")
    w = _writer()
    w.writerow(cols)
    for r in rows:
        w.writerow([train._fmt(r[c]) for c in cols])
    return 0


def cmd_report(args) -> int:
    run = Path(args.run)
    metrics_path = run / "metrics.csv"
    if not metrics_path.exists():
        raise DataError(f"{metrics_path}: not found")
    rows = train.read_csv(metrics_path)
    timing = train.read_csv(run / "timing.csv") if (run / "timing.csv").exists() else None
    path = report.training_curves(rows, Path(args.out or run) / "curves.png", timing)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stftkan", description="STFT-KAN liteDGCNN point-cloud classifier")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("preprocess", help="raw class folders -> binary cache")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--points", type=int, default=1024)
    s.add_argument("--seed", type=int, default=0, help="split seed for the printed summary")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train", help="train one variant")
    s.add_argument("--variant", default=None, choices=[v.label for v in model.Variant])
    s.add_argument("--data", required=True, help="cache file or synthetic[:per_class[:points]]")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--batch", type=int, default=None)
    s.add_argument("--out", default="run")
    s.add_argument("--config", default=None, help="key=value file; flags override it")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--resume", default=None, help="run directory to continue from")
    s.add_argument("--no-augment", action="store_true")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--seed", type=int, default=0, help="split seed used at training time")
    s.add_argument("--split", choices=["test", "train", "all"], default="test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("params", help="parameter counts")
    s.add_argument("--variant", default="all", choices=["all"] + [v.label for v in model.Variant])
    s.add_argument("--classes", type=int, default=7)
    s.add_argument("--plot", default=None, help="write a bar chart to this path")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("search", help="random search over STFT-KAN layer settings")
    s.add_argument("--space", default=None)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--epochs", type=int, required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", default="search")
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("report", help="render figures for a finished run")
    s.add_argument("--run", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StftKanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
