"""Command-line entry point: ``foodnet <subcommand> [flags]``.

Exit codes: 0 success, 1 runtime failure (including a failed gradient
check), 2 usage error.  Values come from flags, then an optional JSON
``--config`` file whose keys mirror the flag names, then built-in defaults.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bof, checkpoint, dataset, gradcheck, report
from .augment import AugmentConfig, affine_matrix, sample_affine, warp_bilinear
from .errors import ConfigError, FoodnetError
from .metrics import EvalReport
from .network import build_paper_network, predict
from .rng import Rng
from .synthetic import make_synthetic
from .train import TrainConfig, train

log = logging.getLogger("foodnet")

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="64-bit seed (default: %(default)s)")
    g.add_argument("--threads", type=int, default=1,
                   help="BLAS threads; 1 is the bit-reproducible path, 0 leaves the library default "
                        "(default: %(default)s)")
    g.add_argument("--config", default=None, help="JSON file of flag values (flags override it)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _augment_flags(p: argparse.ArgumentParser) -> None:
    d = AugmentConfig()
    g = p.add_argument_group("augmentation bounds")
    g.add_argument("--max-rotation", type=float, default=d.max_rotation_deg,
                   help="max |rotation| in degrees (default: %(default)s)")
    g.add_argument("--max-translate", type=float, default=d.max_translate_frac,
                   help="max |shift| as a fraction of width/height (default: %(default)s)")
    g.add_argument("--scale-min", type=float, default=d.scale_min, help="(default: %(default)s)")
    g.add_argument("--scale-max", type=float, default=d.scale_max, help="(default: %(default)s)")
    g.add_argument("--fill", type=float, default=d.fill_value,
                   help="value for pixels warped in from outside (default: %(default)s)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="foodnet", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs.required = True
    table = {}

    def sub(name, help_text):
        p = subs.add_parser(name, help=help_text, description=help_text,
                            formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        table[name] = p
        return p

    p = sub("ingest", "pack a class-per-subdirectory image tree into a dataset file")
    p.add_argument("--root", help="directory with one subdirectory per class")
    p.add_argument("--out", help="packed dataset to write")
    p.add_argument("--size", type=int, default=dataset.IMAGE_SIZE, help="output side length")
    _common(p)

    p = sub("synth", "generate the synthetic ten-class shape dataset")
    p.add_argument("--per-class", type=int, default=50, help="images per class")
    p.add_argument("--classes", type=int, default=10, help="number of classes (2-10)")
    p.add_argument("--size", type=int, default=dataset.IMAGE_SIZE, help="image side length")
    p.add_argument("--out", help="packed dataset to write")
    _common(p)

    p = sub("split", "stratified train/test split of a packed dataset")
    p.add_argument("--input", help="packed dataset to split")
    p.add_argument("--train-out", help="training split to write")
    p.add_argument("--test-out", help="test split to write")
    p.add_argument("--frac", type=float, default=0.8, help="training fraction per class")
    _common(p)

    t = TrainConfig()
    p = sub("train-cnn", "train the five-layer CNN")
    p.add_argument("--train", help="packed training set")
    p.add_argument("--test", help="packed test set (drives early stopping)")
    p.add_argument("--checkpoint-out", help="best-model checkpoint to write")
    p.add_argument("--curves-out", help="per-epoch CSV to write")
    p.add_argument("--chart-out", default=None, help="optional SVG of the accuracy/loss curves")
    p.add_argument("--eta0", type=float, default=t.eta0, help="base learning rate")
    p.add_argument("--eta-max", type=float, default=t.eta_max, help="learning-rate ceiling")
    p.add_argument("--batch-size", type=int, default=t.batch_size, help="minibatch size")
    p.add_argument("--max-epochs", type=int, default=t.max_epochs, help="epoch limit")
    p.add_argument("--patience", type=int, default=t.patience,
                   help="epochs without a test-accuracy gain before stopping")
    p.add_argument("--augment", action=argparse.BooleanOptionalAction, default=False,
                   help="re-sample a random affine warp of every training image each epoch")
    _augment_flags(p)
    _common(p)

    p = sub("train-bof", "train the bag-of-features + linear SVM baseline")
    p.add_argument("--train", help="packed training set")
    p.add_argument("--model-out", help="BoF model file to write")
    p.add_argument("--k", type=int, default=256, help="vocabulary size")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4, help="SVM regularisation")
    p.add_argument("--epochs", type=int, default=100, help="SVM passes over the data")
    p.add_argument("--kmeans-iters", type=int, default=50, help="Lloyd iteration cap")
    p.add_argument("--max-descriptors", type=int, default=100_000,
                   help="descriptor sample size for the vocabulary")
    _common(p)

    p = sub("eval", "evaluate a CNN checkpoint or BoF model on a packed test set")
    p.add_argument("--model", help="CNCK1 checkpoint or BOFM1 model")
    p.add_argument("--test", help="packed test set")
    p.add_argument("--report-out", default=None, help="JSON report to write")
    _common(p)

    p = sub("gradcheck", "finite-difference check of backpropagation (exit 0 iff error < 1e-5)")
    p.add_argument("--corrupt", action="store_true", help="negate analytic gradients (checker self-test)")
    _common(p)

    p = sub("augment-preview", "write original and randomly warped copies of dataset images")
    p.add_argument("--dataset", help="packed dataset")
    p.add_argument("--n", type=int, default=5, help="number of images")
    p.add_argument("--out-dir", help="directory for the PNG pairs")
    _augment_flags(p)
    _common(p)
    return parser, table


REQUIRED = {
    "ingest": ("root", "out"),
    "synth": ("out",),
    "split": ("input", "train_out", "test_out"),
    "train-cnn": ("train", "test", "checkpoint_out", "curves_out"),
    "train-bof": ("train", "model_out"),
    "eval": ("model", "test"),
    "gradcheck": (),
    "augment-preview": ("dataset", "out_dir"),
}


def _load_config(path, sub: argparse.ArgumentParser) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    known = {a.dest: a for a in sub._actions}
    for a in sub._actions:
        for opt in a.option_strings:
            known.setdefault(opt.lstrip("-").replace("-", "_"), a)
    out = {}
    for key, value in doc.items():
        action = known.get(key.replace("-", "_"))
        if action is None or action.dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        out[action.dest] = value
    return out


def parse_args(argv=None):
    parser, table = build_parser()
    args = parser.parse_args(argv)
    sub = table[args.command]
    if args.config:
        try:
            sub.set_defaults(**_load_config(args.config, sub))
        except UsageError as exc:
            sub.error(str(exc))
        args = parser.parse_args(argv)
    missing = [n for n in REQUIRED[args.command] if getattr(args, n, None) is None]
    if missing:
        sub.error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args, sub


def _augment_config(args) -> AugmentConfig:
    return AugmentConfig(args.max_rotation, args.max_translate, args.scale_min, args.scale_max, args.fill)


def _validate(args) -> None:
    """Fail fast on values that violate a module's invariants."""
    if args.threads < 0:
        raise UsageError("--threads must be >= 0")
    if args.command == "split" and not 0 < args.frac < 1:
        raise UsageError(f"--frac must lie strictly between 0 and 1, got {args.frac}")
    if args.command in ("synth",) and args.per_class < 2:
        raise UsageError("--per-class must be >= 2")
    if args.command in ("ingest", "synth") and args.size < 1:
        raise UsageError("--size must be positive")
    if args.command == "train-cnn":
        try:
            args.train_config = TrainConfig(args.eta0, args.eta_max, args.batch_size, args.max_epochs,
                                            args.patience, args.seed,
                                            _augment_config(args) if args.augment else None)
            _augment_config(args)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc
    if args.command == "train-bof" and (args.k < 2 or args.lam <= 0 or args.epochs < 1):
        raise UsageError("need --k >= 2, --lambda > 0 and --epochs >= 1")
    if args.command == "augment-preview":
        if args.n < 1:
            raise UsageError("--n must be >= 1")
        try:
            args.augment_config = _augment_config(args)
        except ConfigError as exc:
            raise UsageError(str(exc)) from exc


def cmd_ingest(args) -> int:
    manifest = dataset.ingest_directory(args.root)
    ds = dataset.pack(manifest, args.out, args.size)
    print(f"packed {len(ds)} images in {len(ds.class_names)} classes to {args.out}"
          + (f" ({manifest.skipped} unreadable files skipped)" if manifest.skipped else ""))
    return 0


def cmd_synth(args) -> int:
    ds = make_synthetic(args.classes, args.per_class, args.seed, args.size)
    dataset.save_packed(ds, args.out)
    print(f"wrote {len(ds)} synthetic records to {args.out}")
    return 0


def cmd_split(args) -> int:
    ds = dataset.load_packed(args.input)
    tr, te = dataset.split_packed(ds, args.frac, args.seed)
    dataset.save_packed(tr, args.train_out)
    dataset.save_packed(te, args.test_out)
    print(f"split {len(ds)} records into {len(tr)} train / {len(te)} test")
    return 0


def cmd_train_cnn(args) -> int:
    tr = dataset.load_packed(args.train)
    te = dataset.load_packed(args.test)
    if tr.class_names != te.class_names:
        raise FoodnetError("training and test sets have different class lists")
    model = build_paper_network(args.seed, (tr.height, tr.width, tr.channels), tr.class_names)
    def progress(r):
        log.info("epoch %d: train loss %.4f acc %.4f, test loss %.4f acc %.4f, eta %.5f",
                 r.epoch, r.train_loss, r.train_acc, r.test_loss, r.test_acc, r.eta)

    best, curves = train(model, (tr.images(), tr.labels), (te.images(), te.labels), args.train_config,
                         on_epoch=progress)
    checkpoint.save_checkpoint(best, args.checkpoint_out)
    report.emit_curves(curves, args.curves_out)
    if args.chart_out:
        report.emit_chart(curves, args.chart_out, "augmented" if args.augment else "no augmentation")
    b = curves.best
    print(f"{len(curves)} epochs; best test accuracy {b.test_acc:.4f} at epoch {b.epoch} "
          f"(train accuracy {b.train_acc:.4f})")
    return 0


def cmd_train_bof(args) -> int:
    tr = dataset.load_packed(args.train)
    model = bof.train_bof(tr.images(), tr.labels, len(tr.class_names), args.k, args.lam, args.epochs,
                          args.seed, args.max_descriptors, args.kmeans_iters)
    bof.save_bof(model, args.model_out)
    acc = float(np.mean(model.predict(tr.images()) == tr.labels))
    print(f"trained k={args.k} vocabulary and {len(tr.class_names)}-class SVM; training accuracy {acc:.4f}")
    return 0


def cmd_eval(args) -> int:
    te = dataset.load_packed(args.test)
    head = Path(args.model).read_bytes()[:6]
    if head == checkpoint.MAGIC:
        model = checkpoint.load_checkpoint(args.model)
        if model.n_classes != len(te.class_names):
            raise FoodnetError(f"model has {model.n_classes} classes, test set {len(te.class_names)}")
        preds, kind = predict(model, te.images()), "cnn"
    elif head == bof.MAGIC:
        model = bof.load_bof(args.model)
        if model.svm.n_classes != len(te.class_names):
            raise FoodnetError(f"model has {model.svm.n_classes} classes, test set {len(te.class_names)}")
        preds, kind = model.predict(te.images()), "bof"
    else:
        raise FoodnetError(f"unrecognised model file {args.model}: magic {head!r}")
    rep = EvalReport.from_predictions(te.labels, preds, te.class_names)
    if args.report_out:
        report.emit_report(rep, args.report_out, {"model_kind": kind})
    print(report.format_report(rep))
    return 0


def cmd_gradcheck(args) -> int:
    res = gradcheck.gradient_check(seed=args.seed, corrupt=args.corrupt)
    ok = res.passed
    print(f"max relative error {res.max_rel_error:.3e} over {res.n_checked} parameters "
          f"({'PASS' if ok else 'FAIL'}, threshold {gradcheck.TOLERANCE:g})")
    return 0 if ok else EXIT_RUNTIME


def cmd_augment_preview(args) -> int:
    ds = dataset.load_packed(args.dataset)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = args.augment_config
    rng = Rng(args.seed)
    n = min(args.n, len(ds))
    for i in range(n):
        img = ds.pixels[i].astype(np.float32) / np.float32(255.0)
        params = sample_affine(cfg, rng, ds.width, ds.height)
        warped = warp_bilinear(img, affine_matrix(params, ds.width, ds.height), cfg.fill_value)
        dataset.save_image(ds.pixels[i], out / f"original_{i:03d}.png")
        dataset.save_image(warped, out / f"augmented_{i:03d}.png")
    print(f"wrote {n} original/augmented pairs to {out}")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "split": cmd_split,
    "train-cnn": cmd_train_cnn,
    "train-bof": cmd_train_bof,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "augment-preview": cmd_augment_preview,
}


def _thread_limit(n: int):
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args, sub = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
    except UsageError as exc:
        sub.error(str(exc))
    try:
        with _thread_limit(args.threads):
            return COMMANDS[args.command](args)
    except FoodnetError as exc:
        print(f"foodnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"foodnet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
