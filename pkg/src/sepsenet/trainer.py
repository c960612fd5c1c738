"""The epoch loop and the evaluator.

Each epoch: seeded shuffle, on-the-fly per-sample augmentation,
mini-batches (the last partial batch is kept), train-mode forward, mean
cross-entropy, backward, one Adam step per batch; then a full infer-mode
pass over the validation set.  Single-threaded runs with fixed seeds are
bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as D
from . import metrics as M
from .errors import EmptyDataset, ShapeMismatch
from .model import Model, save_checkpoint
from .optim import Adam, cross_entropy, one_hot, softmax_xent_grad
from .tensor import make_rng

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "ms")


@dataclass
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    shuffle_seed: int = 0
    augment: D.AugmentConfig | None = None
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.1

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"epochs and batch_size must be >= 1, got {self.epochs}/{self.batch_size}")
        return self


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    wall_ms: int

    def log_line(self) -> str:
        return (f"epoch={self.epoch} train_loss={self.train_loss:.6f} "
                f"train_acc={self.train_acc:.6f} val_loss={self.val_loss:.6f} "
                f"val_acc={self.val_acc:.6f} ms={self.wall_ms}")

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.train_loss:.6f},{self.train_acc:.6f},"
                f"{self.val_loss:.6f},{self.val_acc:.6f},{self.wall_ms}")


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(HISTORY_COLUMNS) + "\n")
            for r in self.records:
                f.write(r.csv_row() + "\n")


def _check_inputs(model: Model, dataset: D.Dataset):
    if len(dataset) == 0:
        raise EmptyDataset(f"{dataset.partition} set holds no samples")
    got = dataset.samples[0].image.shape
    expected = model.config.input_size
    if tuple(got) != tuple(expected):
        raise ShapeMismatch(f"dataset images are {got}, model expects {expected}")


def evaluate(model: Model, dataset: D.Dataset, batch_size: int = 32):
    """Infer-mode pass: (mean_loss, accuracy, ConfusionMatrix)."""
    _check_inputs(model, dataset)
    k = len(dataset.class_names)
    losses = []
    preds = []
    labels = dataset.labels()
    for start in range(0, len(dataset), batch_size):
        batch = dataset.samples[start : start + batch_size]
        xb = np.stack([s.image for s in batch])
        yb = one_hot([s.label for s in batch], k)
        probs = model.forward(xb, train=False)
        losses.append(cross_entropy(probs, yb).per_sample)
        preds.append(probs.argmax(axis=1))
    mean_loss = float(np.concatenate(losses).mean())
    cm = M.confusion(labels, np.concatenate(preds), dataset.class_names)
    return mean_loss, M.accuracy(cm), cm


def train(model: Model, train_set: D.Dataset, val_set: D.Dataset,
          cfg: TrainConfig, log=None, history_csv=None, save_best_to=None) -> TrainHistory:
    """Run cfg.epochs epochs of Adam on the mean cross-entropy.

    Per-epoch metrics stream to ``log`` (a callable taking one line) and
    append to ``history_csv`` when given.  If ``save_best_to`` is set, a
    checkpoint is written every time validation accuracy improves.
    """
    cfg.validate()
    _check_inputs(model, train_set)
    _check_inputs(model, val_set)
    k = len(train_set.class_names)
    shuffle_rng = make_rng(cfg.shuffle_seed)
    adam = Adam(model.trainable_arrays(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    grads = model.trainable_grads()
    history = TrainHistory()
    csv_file = None
    if history_csv is not None:
        fresh = not Path(history_csv).exists()
        csv_file = open(history_csv, "a", encoding="utf-8", newline="\n")
        if fresh:
            csv_file.write(",".join(HISTORY_COLUMNS) + "\n")
    best_val_acc = -1.0
    try:
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            order = shuffle_rng.permutation(len(train_set))
            loss_sum = 0.0
            hits = 0
            for start in range(0, len(order), cfg.batch_size):
                batch_idx = order[start : start + cfg.batch_size]
                samples = [train_set.samples[i] for i in batch_idx]
                if cfg.augment is not None:
                    samples = [D.augment(s, cfg.augment) for s in samples]
                xb = np.stack([s.image for s in samples])
                yb = one_hot([s.label for s in samples], k)
                probs = model.forward(xb, train=True)
                report = cross_entropy(probs, yb)
                if not np.isfinite(report.mean_loss):
                    raise ArithmeticError(f"non-finite training loss at epoch {epoch}")
                loss_sum += float(report.per_sample.sum())
                hits += int((probs.argmax(axis=1) == np.array([s.label for s in samples])).sum())
                model.zero_grads()
                model.backward(softmax_xent_grad(model.last_logits, yb))
                adam.step(grads)
            val_loss, val_acc, _ = evaluate(model, val_set, cfg.batch_size)
            record = EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / len(order),
                train_acc=hits / len(order),
                val_loss=val_loss,
                val_acc=val_acc,
                wall_ms=int((time.perf_counter() - started) * 1000),
            )
            history.append(record)
            if log is not None:
                log(record.log_line())
            if csv_file is not None:
                csv_file.write(record.csv_row() + "\n")
                csv_file.flush()
            if save_best_to is not None and val_acc > best_val_acc:
                best_val_acc = val_acc
                save_checkpoint(model, save_best_to)
    finally:
        if csv_file is not None:
            csv_file.close()
    return history
