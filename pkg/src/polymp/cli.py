"""Command-line entry point: data generation, training, evaluation, the
benchmark grid, gradient checks, and saliency export.

Every command is deterministic under a fixed --seed. Errors exit nonzero
with one machine-parsable line on stderr: `error: <Kind>: <message>`.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .dataset import (
    DEFAULT_CLASS_NAMES,
    RATIOS,
    Dataset,
    build_ratio_split,
    build_simplified_view,
    generate_base_samples,
    generate_test_set,
    load_dataset,
    read_manifest,
    save_dataset,
    write_manifest,
)
from .errors import (
    EmptyDataset,
    GradCheckFailed,
    IncompatibleCheckpoint,
    InvalidRatio,
    PolyError,
)
from .gradcheck import model_gradcheck
from .models import ARCHS, default_config, init_params, load_checkpoint, save_checkpoint
from .saliency import export_saliency
from .training import (
    EVAL_CSV_HEADER,
    TrainConfig,
    evaluate,
    train,
    write_epoch_log,
)

_TRAIN_CONFIG_KEYS = ("lr", "batch_size", "max_epochs", "plateau_patience",
                      "plateau_factor", "early_stop_patience", "min_delta",
                      "val_fraction", "seed")
_MODEL_CONFIG_KEYS = ("pooling", "msg_reduce", "relative_only", "head_hidden")


def _ratio_value(text: str) -> float:
    r = float(text)
    if r > 1:
        r /= 100.0
    if not any(abs(r - known) < 1e-9 for known in RATIOS):
        raise argparse.ArgumentTypeError(f"ratio must be one of {RATIOS} (or percents)")
    return round(r, 2)


def _split_filename(ratio: float) -> str:
    return f"train_r{int(round(ratio * 100)):02d}.jsonl"


def _ckpt_filename(arch: str, ratio: float) -> str:
    return f"{arch}_r{int(round(ratio * 100)):02d}.ckpt.json"


def _load_train_split(data_dir: str, ratio: float) -> Dataset:
    path = os.path.join(data_dir, _split_filename(ratio))
    if not os.path.exists(path):
        raise EmptyDataset(f"no training split at {path}; run gen-data first")
    return load_dataset(path)


def _load_test_split(data_dir: str) -> Dataset:
    path = os.path.join(data_dir, "test.jsonl")
    if not os.path.exists(path):
        raise EmptyDataset(f"no test split at {path}; run gen-data first")
    return load_dataset(path)


def _merged_config(args) -> tuple[TrainConfig, dict]:
    """Defaults < config file < explicit CLI flags."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as f:
            file_cfg = json.load(f)
        if not isinstance(file_cfg, dict):
            raise PolyError("config file must hold a flat JSON object")
    train_kwargs = {}
    for key in _TRAIN_CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            train_kwargs[key] = flag
        elif key in file_cfg:
            train_kwargs[key] = file_cfg[key]
    model_kwargs = {}
    for key in _MODEL_CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            model_kwargs[key] = flag
        elif key in file_cfg:
            model_kwargs[key] = file_cfg[key]
    return TrainConfig(**train_kwargs), model_kwargs


def _train_one(arch: str, ratio: float, data_dir: str, out_dir: str,
               tcfg: TrainConfig, model_kwargs: dict, force: bool = True,
               quiet: bool = False):
    """Train (or reuse) one grid cell; returns (params, ckpt_path, test set)."""
    os.makedirs(out_dir, exist_ok=True)
    test = _load_test_split(data_dir)
    ckpt_path = os.path.join(out_dir, _ckpt_filename(arch, ratio))
    if os.path.exists(ckpt_path) and not force:
        return load_checkpoint(ckpt_path), ckpt_path, test

    train_ds = _load_train_split(data_dir, ratio)
    cfg = default_config(arch, n_classes=len(train_ds.class_names), **model_kwargs)
    params = init_params(cfg, seed=tcfg.seed)
    log_fn = None if quiet else (lambda msg: print(f"[{arch} r{int(ratio*100):02d}] {msg}",
                                                   file=sys.stderr))
    params, log = train(params, train_ds, None, tcfg, log_fn=log_fn)
    save_checkpoint(params, ckpt_path)
    write_epoch_log(log, os.path.join(out_dir, f"{arch}_r{int(ratio*100):02d}_log.csv"))
    return params, ckpt_path, test


# --- subcommands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    if args.per_class <= 0:
        raise EmptyDataset(f"--per-class must be positive, got {args.per_class}")
    os.makedirs(args.out, exist_ok=True)
    base = generate_base_samples(classes, args.per_class, args.seed)
    entries = {}
    for ratio in RATIOS:
        split = build_ratio_split(base, ratio)
        path = os.path.join(args.out, _split_filename(ratio))
        entries[_split_filename(ratio)[:-6]] = save_dataset(split, path)
    test = generate_test_set(classes, args.test_per_tag, args.seed)
    entries["test"] = save_dataset(test, os.path.join(args.out, "test.jsonl"))
    write_manifest(os.path.join(args.out, "manifest.json"), classes, args.seed, entries)
    print(f"wrote {len(entries)} splits to {args.out} "
          f"({args.per_class}/class train, {args.test_per_tag}/class/tag test)")
    return 0


def cmd_train(args) -> int:
    tcfg, model_kwargs = _merged_config(args)
    params, ckpt_path, test = _train_one(args.arch, args.ratio, args.data, args.out,
                                         tcfg, model_kwargs, force=True,
                                         quiet=args.quiet)
    report = evaluate(params, test, model=args.arch,
                      trans_ratio=f"{int(round(args.ratio * 100))}%")
    with open(os.path.join(args.out, "eval.json"), "w") as f:
        json.dump(report.to_dict(), f, indent=2)
        f.write("\n")
    # canonical names expected alongside the checkpoint
    log_src = os.path.join(args.out, f"{args.arch}_r{int(args.ratio*100):02d}_log.csv")
    log_dst = os.path.join(args.out, "log.csv")
    if os.path.exists(log_src):
        with open(log_src) as fsrc, open(log_dst, "w") as fdst:
            fdst.write(fsrc.read())
    print(EVAL_CSV_HEADER)
    print(report.csv_row())
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    params = load_checkpoint(args.ckpt)
    test = _load_test_split(args.data) if os.path.isdir(args.data) else load_dataset(args.data)
    if len(test.class_names) != params.config.n_classes:
        raise IncompatibleCheckpoint(
            f"checkpoint has {params.config.n_classes} classes, "
            f"dataset has {len(test.class_names)}")
    view = "glyph"
    if args.simplified:
        test = build_simplified_view(test, tolerance=args.tolerance)
        view = "simplified"
    model = os.path.basename(args.ckpt).split("_")[0]
    report = evaluate(params, test, model=model, trans_ratio=args.ratio_label or "")
    report.extras["view"] = view
    print(EVAL_CSV_HEADER)
    print(report.csv_row())
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
            f.write("\n")
    return 0


def cmd_benchmark(args) -> int:
    archs = sorted(ARCHS) if args.archs == "all" else sorted(
        a.strip() for a in args.archs.split(",") if a.strip())
    for a in archs:
        if a not in ARCHS:
            raise PolyError(f"unknown arch {a!r}; choose from {ARCHS}")
    ratios = list(RATIOS) if args.ratios == "all" else sorted(
        _ratio_value(r) for r in args.ratios.split(",") if r.strip())
    tcfg, model_kwargs = _merged_config(args)
    os.makedirs(args.out, exist_ok=True)

    rows_glyph, rows_simplified = [], []
    best: dict = {}
    for arch in archs:
        for ratio in ratios:
            label = f"{int(round(ratio * 100))}%"
            params, _, test = _train_one(arch, ratio, args.data, args.out, tcfg,
                                         model_kwargs, force=args.force,
                                         quiet=args.quiet)
            rep = evaluate(params, test, model=arch, trans_ratio=label)
            simp = evaluate(params, build_simplified_view(test), model=arch,
                            trans_ratio=label)
            rows_glyph.append(rep.csv_row())
            rows_simplified.append(simp.csv_row())
            key = (ratio, label)
            if key not in best or rep.overall > best[key][1]:
                best[key] = (arch, rep.overall)
            print(f"{arch} @ {label}: OA {rep.overall:.4f} "
                  f"(simplified {simp.overall:.4f})")

    for name, rows in (("benchmark_glyph.csv", rows_glyph),
                       ("benchmark_simplified.csv", rows_simplified)):
        with open(os.path.join(args.out, name), "w") as f:
            f.write(EVAL_CSV_HEADER + "\n")
            f.write("\n".join(rows) + "\n")
    for (ratio, label) in sorted(best):
        arch, oa = best[(ratio, label)]
        print(f"best at {label}: {arch} (OA {oa:.4f})")
    return 0


def cmd_gradcheck(args) -> int:
    archs = list(ARCHS) if args.arch == "all" else [args.arch]
    tol = args.tol
    failed = []
    for arch in archs:
        report = model_gradcheck(arch, seed=args.seed)
        for name, err in report.items():
            status = "ok" if err < tol else "FAIL"
            print(f"{arch:8s} {name:16s} rel_err {err:.3e}  {status}")
        worst = max(report, key=report.get)
        if report[worst] >= tol:
            failed.append((arch, worst, report[worst]))
    if failed:
        arch, worst, err = failed[0]
        raise GradCheckFailed(
            f"{len(failed)} architecture(s) failed; worst {arch}/{worst} "
            f"rel err {err:.3e} >= {tol}", worst_name=worst, worst_err=err)
    print(f"gradcheck passed for {', '.join(archs)} (tol {tol:g})")
    return 0


def cmd_saliency(args) -> int:
    params = load_checkpoint(args.ckpt)
    ds = _load_test_split(args.data) if os.path.isdir(args.data) else load_dataset(args.data)
    ids = [s.strip() for s in args.ids.split(",") if s.strip()] if args.ids else None
    paths = export_saliency(params, ds.samples, args.out, ids=ids,
                            class_names=ds.class_names)
    print(f"wrote {len(paths)} files to {args.out}")
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polymp",
        description="Polygon shape classification experiments (graphs, sets, "
                    "sequences) with reproducible seeds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic splits")
    p.add_argument("--classes", default=",".join(DEFAULT_CLASS_NAMES))
    p.add_argument("--per-class", type=int, default=100, dest="per_class")
    p.add_argument("--test-per-tag", type=int, default=10, dest="test_per_tag")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    def add_train_flags(q):
        q.add_argument("--config", default=None, help="flat JSON config file")
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--epochs", type=int, default=None, dest="max_epochs")
        q.add_argument("--lr", type=float, default=None)
        q.add_argument("--batch-size", type=int, default=None, dest="batch_size")
        q.add_argument("--pooling", choices=("mean", "max"), default=None)
        q.add_argument("--msg-reduce", choices=("mean", "max"), default=None,
                       dest="msg_reduce")
        q.add_argument("--relative-only", action="store_const", const=True,
                       default=None, dest="relative_only")
        q.add_argument("--quiet", action="store_true")

    p = sub.add_parser("train", help="train one model on one ratio split")
    p.add_argument("--arch", required=True, choices=ARCHS)
    p.add_argument("--ratio", type=_ratio_value, default=0.0)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--simplified", action="store_true")
    p.add_argument("--tolerance", type=float, default=1.0)
    p.add_argument("--ratio-label", default=None, dest="ratio_label")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("benchmark", help="train/evaluate the arch x ratio grid")
    p.add_argument("--archs", default="all")
    p.add_argument("--ratios", default="all")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true",
                   help="retrain even when a checkpoint exists")
    add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference check of model gradients")
    p.add_argument("--arch", default="all", choices=ARCHS + ("all",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("saliency", help="export per-node saliency JSON + SVG")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ids", default=None, help="comma-separated sample ids (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_saliency)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (PolyError, OSError, np.linalg.LinAlgError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
