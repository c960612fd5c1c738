"""Command-line front end: train / evaluate / predict / summary / gradcheck / synth.

One flat key=value config file (``#`` comments, unknown keys rejected)
drives every command, with flags overriding file values.  Exit codes are
stable API: 0 success, 2 config/usage error, 3 data error, 4 numeric
failure.  All randomness expands from the single ``seed`` key into
per-purpose sub-streams (init, dropout, shuffle, augment, split, synth).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import data as D
from .errors import (
    BadConfig,
    BadFraction,
    BadMagic,
    ConfigMismatch,
    CorruptFile,
    EmptyClassWarning,
    EmptyDataset,
    NoClassesFound,
    RankOutOfRange,
    SepsenetError,
    ShapeMismatch,
    TruncatedPayload,
    UnsupportedFormat,
)
from .layers import BatchNorm2D, Dense, SEBlock, SeparableConv2D
from .metrics import render_text, write_csv
from .model import (
    ModelConfig,
    PUBLISHED_NON_TRAINABLE_PARAMS,
    PUBLISHED_TOTAL_PARAMS,
    PUBLISHED_TRAINABLE_PARAMS,
    build_model,
    count_params,
    load_checkpoint,
    model_summary,
    save_checkpoint,
)
from .optim import grad_check, one_hot
from .tensor import make_rng, sub_rng
from .trainer import TrainConfig, evaluate, train

# key -> (type tag, default); the canonical ordering doubles as the
# snapshot ordering.
SCHEMA = {
    "seed": ("int", 0),
    "out": ("str", "run"),
    "data": ("str", ""),
    "synth_per_class": ("int", 0),
    "synth_size": ("int", 32),
    "epochs": ("int", 25),
    "batch_size": ("int", 32),
    "lr": ("float", 1e-3),
    "beta1": ("float", 0.9),
    "beta2": ("float", 0.999),
    "adam_eps": ("float", 1e-8),
    "val_fraction": ("float", 0.1),
    "hflip_prob": ("float", 0.5),
    "rotate_max_degrees": ("float", 15.0),
    "input_size": ("ints", (150, 150, 3)),
    "filter_ladder": ("ints", (32, 64, 128)),
    "kernel": ("ints", (3, 3)),
    "se_ratio": ("int", 16),
    "head_widths": ("ints", (128, 64)),
    "head_dropout": ("floats", (0.3, 0.4)),
    "num_classes": ("int", 4),
    "padding": ("str", "same"),
    "pool_window": ("ints", (2, 2)),
    "pool_stride": ("ints", (2, 2)),
    "bn_epsilon": ("float", 1e-3),
    "bn_momentum": ("float", 0.99),
    "threads": ("int", 0),
}


def _coerce(key: str, raw: str):
    tag = SCHEMA[key][0]
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "ints":
            return tuple(int(v) for v in raw.split(","))
        if tag == "floats":
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise BadConfig(f"config key {key}: cannot parse {raw!r} as {tag}") from exc


def parse_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise BadConfig(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BadConfig(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise BadConfig(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve_run_config(args) -> dict:
    """defaults <- config file <- command-line flag overrides."""
    cfg = {key: default for key, (_, default) in SCHEMA.items()}
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for key in ("seed", "out", "data", "epochs", "batch_size", "threads",
                "synth_per_class", "synth_size", "val_fraction"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    size = _parse_hw(getattr(args, "input_size", None))
    if size is not None:
        cfg["input_size"] = (size[0], size[1], cfg["input_size"][2])
    return cfg


def _parse_hw(text):
    if text is None:
        return None
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise BadConfig(f"--input-size wants <H>x<W>, got {text!r}") from exc


def write_snapshot(cfg: dict, path) -> None:
    lines = []
    for key in SCHEMA:
        value = cfg[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def model_config_from_run(cfg: dict) -> ModelConfig:
    return ModelConfig(
        input_size=cfg["input_size"],
        filter_ladder=cfg["filter_ladder"],
        kernel=cfg["kernel"],
        se_ratio=cfg["se_ratio"],
        head_widths=cfg["head_widths"],
        head_dropout=cfg["head_dropout"],
        num_classes=cfg["num_classes"],
        padding=cfg["padding"],
        pool_window=cfg["pool_window"],
        pool_stride=cfg["pool_stride"],
        bn_epsilon=cfg["bn_epsilon"],
        bn_momentum=cfg["bn_momentum"],
        seed=cfg["seed"],
    )


@contextmanager
def _thread_limits(n: int):
    if n and n > 0:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=n):
            yield
    else:
        yield


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = resolve_run_config(args)
    if not 0 < cfg["val_fraction"] < 1:
        raise BadConfig(f"training needs val_fraction in (0, 1), got {cfg['val_fraction']}")
    seed = cfg["seed"]
    if cfg["data"]:
        train_dir = D.resolve_split_dir(cfg["data"], "train")
        full = D.load_split(train_dir, cfg["input_size"][:2], "train")
    elif cfg["synth_per_class"] > 0:
        size = cfg["synth_size"]
        cfg["input_size"] = (size, size, 3)
        full = D.synth_dataset(cfg["synth_per_class"], size, sub_rng(seed, "synth"))
    else:
        raise BadConfig("no data source: set data=<dir> or synth_per_class=<n>")
    if len(full) == 0:
        raise EmptyDataset(f"no images under {cfg['data']}")
    cfg["num_classes"] = len(full.class_names)

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_snapshot(cfg, out_dir / "run-config.txt")

    train_set, val_set = D.split(full, cfg["val_fraction"], sub_rng(seed, "split"))
    model = build_model(model_config_from_run(cfg))
    model.class_names = full.class_names

    augment_cfg = D.AugmentConfig(cfg["hflip_prob"], cfg["rotate_max_degrees"], sub_rng(seed, "augment"))
    train_cfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        shuffle_seed=int(sub_rng(seed, "shuffle").integers(2**63)),
        augment=augment_cfg,
        lr=cfg["lr"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        adam_eps=cfg["adam_eps"],
        val_fraction=cfg["val_fraction"],
    )
    history_path = out_dir / "history.csv"
    if history_path.exists():
        history_path.unlink()
    # honor threads= from the config file when no flag was given (the flag
    # is applied process-wide in main)
    config_threads = cfg["threads"] if getattr(args, "threads", None) is None else 0
    with _thread_limits(config_threads):
        train(
            model,
            train_set,
            val_set,
            train_cfg,
            log=print,
            history_csv=history_path,
            save_best_to=out_dir / "best.sepse1",
        )
    save_checkpoint(model, out_dir / "model.sepse1")
    print(f"wrote {history_path}, {out_dir / 'model.sepse1'}, {out_dir / 'best.sepse1'}")
    return 0


def _load_eval_dataset(data_dir, image_size):
    """Accept either a class tree directly or a root holding test/."""
    root = Path(data_dir)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyClassWarning)
            manifest = D.scan_directory(root)
        if manifest.entries:
            return D.load_split(root, image_size, "test")
    except NoClassesFound:
        pass
    return D.load_split(D.resolve_split_dir(root, "test"), image_size, "test")


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    size = _parse_hw(args.input_size)
    if size is not None and size != tuple(model.config.input_size[:2]):
        raise ConfigMismatch(
            f"--input-size {size[0]}x{size[1]} conflicts with checkpoint input "
            f"{model.config.input_size[0]}x{model.config.input_size[1]}"
        )
    dataset = _load_eval_dataset(args.data, model.config.input_size[:2])
    if len(dataset.class_names) != model.config.num_classes:
        raise ConfigMismatch(
            f"data has {len(dataset.class_names)} classes, checkpoint head expects {model.config.num_classes}"
        )
    loss, acc, cm = evaluate(model, dataset, args.batch_size)
    print(f"loss={loss:.6f} accuracy={acc:.6f} samples={cm.total}")
    print(render_text(cm))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(cm, out_dir / "confusion.csv")
    print(f"wrote {out_dir / 'confusion.csv'}")
    return 0


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint)
    h, w, _ = model.config.input_size
    img = D.normalize(D.resize_bilinear(D.decode_image(args.image), (h, w)))
    probs = model.forward(img[None], train=False)[0]
    names = model.class_names or [f"class{i}" for i in range(model.config.num_classes)]
    for name, p in zip(names, probs):
        print(f"{name} {p:.6f}")
    winner = int(probs.argmax())
    print(f"predicted: {names[winner]} (class {winner})")
    return 0


def cmd_summary(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        cfg = resolve_run_config(args)
        model = build_model(model_config_from_run(cfg))
    print(model_summary(model))
    if args.audit_paper:
        audit = count_params(model)
        print()
        print(f"reported totals: total={PUBLISHED_TOTAL_PARAMS:,} "
              f"trainable={PUBLISHED_TRAINABLE_PARAMS:,} "
              f"non-trainable={PUBLISHED_NON_TRAINABLE_PARAMS:,}")
        print(f"audited totals:  total={audit.total:,} "
              f"trainable={audit.trainable:,} non-trainable={audit.non_trainable:,}")
        trainable_tag = "matches" if audit.trainable == PUBLISHED_TRAINABLE_PARAMS else "UNREPRODUCED"
        frozen_tag = "matches" if audit.non_trainable == PUBLISHED_NON_TRAINABLE_PARAMS else "UNREPRODUCED"
        total_tag = "matches" if audit.total == PUBLISHED_TOTAL_PARAMS else "UNREPRODUCED"
        print(f"reported trainable 1,039,615: {trainable_tag}")
        print(f"reported non-trainable 448: {frozen_tag}")
        print(f"reported total 1,040,063: {total_tag}")
    return 0


_GRADCHECK_SCOPES = ("full", "dense", "batchnorm", "sepconv", "se")


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = make_rng(seed)
    size = _parse_hw(args.input_size) or (12, 12)
    if args.scope == "full":
        cfg = ModelConfig(
            input_size=(size[0], size[1], 1),
            filter_ladder=(4,),
            se_ratio=2,
            head_widths=(16, 8),
            head_dropout=(0.3, 0.4),
            num_classes=3,
            seed=seed,
        )
        target = build_model(cfg)
        x = rng.standard_normal((2, size[0], size[1], 1)).astype(np.float32)
        labels = one_hot(rng.integers(0, 3, size=2), 3)
        tol = 1e-4
    else:
        labels = None
        tol = 1e-5
        if args.scope == "dense":
            target = Dense(5, 4, rng)
            x = rng.standard_normal((3, 5)).astype(np.float32)
        elif args.scope == "batchnorm":
            target = BatchNorm2D(3)
            x = rng.standard_normal((4, 2, 2, 3)).astype(np.float32)
        elif args.scope == "sepconv":
            target = SeparableConv2D(2, 3, rng=rng)
            x = rng.standard_normal((2, 5, 5, 2)).astype(np.float32)
        else:  # se
            target = SEBlock(4, ratio=2, rng=rng)
            x = rng.standard_normal((1, 2, 2, 4)).astype(np.float32)
    report = grad_check(target, x, labels, tol=tol, corrupt_sign=args.inject_sign_flip)
    for line in report.lines():
        print(line)
    print(f"{'OK' if report.ok else 'FAILED'} max_rel_error={report.max_rel_error:.3e} tol={tol:g}")
    return 0 if report.ok else 1


def cmd_synth(args) -> int:
    rng = sub_rng(args.seed if args.seed is not None else 0, "synth")
    train_ds = D.synth_dataset(args.train_per_class, args.size, rng)
    test_ds = D.synth_dataset(args.test_per_class, args.size, rng, partition="test")
    out = Path(args.out)
    D.save_dataset_png(train_ds, out / "train")
    D.save_dataset_png(test_ds, out / "test")
    print(f"wrote {len(train_ds)} train and {len(test_ds)} test images under {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sepsenet",
        description="Train and evaluate the separable-conv + squeeze-excite CNN.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (expands into per-purpose streams)")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread cap; 0 = auto, 1 = bit-reproducible")

    p = sub.add_parser("train", help="train a model and write run artifacts")
    common(p)
    p.add_argument("--data", help="dataset root containing train/<class>/ images")
    p.add_argument("--synth-per-class", dest="synth_per_class", type=int, help="train on generated data instead")
    p.add_argument("--synth-size", dest="synth_size", type=int, help="generated image side length")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--input-size", dest="input_size", help="<H>x<W> model input")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a directory tree")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="class tree (or root holding test/)")
    p.add_argument("--out", default=".", help="where confusion.csv goes")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--input-size", dest="input_size", help="<H>x<W>; must match the checkpoint")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one image")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("image", help="PNG or JPEG file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("summary", help="print the layer table and parameter audit")
    common(p)
    p.add_argument("--checkpoint", help="read architecture from a checkpoint instead of config")
    p.add_argument("--input-size", dest="input_size", help="<H>x<W> model input")
    p.add_argument("--audit-paper", action="store_true",
                   help="compare the audit against the published totals for this architecture")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p, config=False)
    p.add_argument("--scope", choices=_GRADCHECK_SCOPES, default="full")
    p.add_argument("--input-size", dest="input_size", help="<H>x<W> toy input (full scope)")
    p.add_argument("--inject-sign-flip", action="store_true",
                   help="negative control: corrupt analytic grads, expect failure")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate the 4-class synthetic image tree")
    common(p, config=False)
    p.add_argument("--out", required=True)
    p.add_argument("--train-per-class", dest="train_per_class", type=int, default=100)
    p.add_argument("--test-per-class", dest="test_per_class", type=int, default=50)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads is not None else 0
    try:
        with _thread_limits(threads):
            return args.func(args)
    except (BadConfig, ConfigMismatch, BadMagic, TruncatedPayload, RankOutOfRange,
            ShapeMismatch, BadFraction) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NoClassesFound, UnsupportedFormat, CorruptFile, EmptyDataset,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except SepsenetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
