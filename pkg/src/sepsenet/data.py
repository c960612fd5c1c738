"""Dataset ingestion, preprocessing, augmentation, and a synthetic corpus.

The on-disk contract is a class-directory tree: ``root/<split>/<class>/``
holding PNG or JPEG files.  Class labels are the indices of the sorted
class directory names, so re-scanning always yields the same encoding.
After the pipeline (decode -> resize -> normalize) every image is an
(H, W, 3) float32 array with values in [0, 1].

Resizing and rotation are implemented here with explicit half-pixel
center alignment rather than delegated to an imaging library, because
library resampling filters differ subtly and the bilinear semantics are
part of this package's contract.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    BadFraction,
    BadTarget,
    CorruptFile,
    EmptyClassWarning,
    NoClassesFound,
    UnsupportedFormat,
)

RASTER_EXTENSIONS = {".png", ".jpg", ".jpeg"}


@dataclass
class Sample:
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    label: int
    source_path: str = ""


@dataclass
class Dataset:
    samples: list
    class_names: list
    partition: str = "train"

    def __len__(self):
        return len(self.samples)

    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass
class Manifest:
    entries: list  # (path, class_name) pairs, lexicographic order
    class_names: list

    def label_of(self, class_name: str) -> int:
        return self.class_names.index(class_name)


@dataclass
class AugmentConfig:
    """Horizontal flip + small rotation, deterministic under the rng."""

    hflip_prob: float = 0.5
    rotate_degrees_max: float = 15.0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def scan_directory(root) -> Manifest:
    """List images under root/<class_name>/; classes are sorted subdirs."""
    root = Path(root)
    if not root.is_dir():
        raise NoClassesFound(f"dataset root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise NoClassesFound(f"no class subdirectories under {root}")
    entries = []
    for d in class_dirs:
        files = sorted(
            f for f in d.iterdir()
            if f.is_file() and f.suffix.lower() in RASTER_EXTENSIONS
        )
        if not files:
            warnings.warn(f"class directory {d} holds no images", EmptyClassWarning)
        entries.extend((f, d.name) for f in files)
    return Manifest(entries, [d.name for d in class_dirs])


def write_manifest(manifest: Manifest, path) -> None:
    """CSV cache: header path,class_name,label; UTF-8, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["path", "class_name", "label"])
        for p, cls in manifest.entries:
            writer.writerow([str(p), cls, manifest.label_of(cls)])


def read_manifest(path) -> Manifest:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["path", "class_name", "label"]:
            raise NoClassesFound(f"{path} is not a manifest CSV (header {header})")
        entries = []
        pairs = {}
        for row in reader:
            p, cls, label = row
            entries.append((Path(p), cls))
            pairs[cls] = int(label)
    class_names = [cls for cls, _ in sorted(pairs.items(), key=lambda kv: kv[1])]
    return Manifest(entries, class_names)


def decode_image(path) -> np.ndarray:
    """Decode PNG/JPEG into (H, W, 3) float32 with values in [0, 255].

    Grayscale sources are replicated across the three channels; alpha is
    dropped.
    """
    path = Path(path)
    if path.suffix.lower() not in RASTER_EXTENSIONS:
        raise UnsupportedFormat(f"{path}: only {sorted(RASTER_EXTENSIONS)} are supported")
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise UnsupportedFormat(f"{path}: decoded format {im.format!r} is not PNG/JPEG")
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32)
    except UnidentifiedImageError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    except OSError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return arr


def resize_bilinear(img: np.ndarray, target) -> np.ndarray:
    """Bilinear resize with half-pixel center alignment and edge clamping."""
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise BadTarget(f"resize target must be positive, got {target}")
    h, w = img.shape[:2]
    if (h, w) == (th, tw):
        return img.copy()
    ys = np.clip((np.arange(th, dtype=np.float64) + 0.5) * (h / th) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(tw, dtype=np.float64) + 0.5) * (w / tw) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return out.astype(img.dtype, copy=False)


def normalize(img: np.ndarray) -> np.ndarray:
    """Scale [0, 255] pixel values into [0, 1] by dividing by exactly 255."""
    return np.asarray(img, dtype=np.float32) / np.float32(255.0)


def _rotate_bilinear(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, bilinear resampling, zero fill."""
    h, w = img.shape[:2]
    theta = np.deg2rad(degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    jj, ii = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    xs = cos * (jj - cx) + sin * (ii - cy) + cx
    ys = -sin * (jj - cx) + cos * (ii - cy) + cy
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    out = np.zeros(img.shape, dtype=np.float64)
    for dy, dx, weight in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        inside = ((yy >= 0) & (yy < h) & (xx >= 0) & (xx < w))[..., None]
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        out += weight * inside * vals
    return out.astype(img.dtype, copy=False)


def augment(sample: Sample, cfg: AugmentConfig) -> Sample:
    """Optional horizontal flip, then rotation by a uniform random angle.

    The label never changes, the shape never changes, and both random
    draws happen on every call so the stream stays aligned regardless of
    the outcome.
    """
    img = sample.image
    do_flip = cfg.rng.random() < cfg.hflip_prob
    angle = float(cfg.rng.uniform(-cfg.rotate_degrees_max, cfg.rotate_degrees_max))
    if do_flip:
        img = img[:, ::-1, :]
    if angle != 0.0:
        img = _rotate_bilinear(img, angle)
    return replace(sample, image=np.ascontiguousarray(img, dtype=np.float32))


def split(dataset: Dataset, val_fraction: float, rng: np.random.Generator):
    """Stratified (train, val) split; disjoint and exhaustive per class."""
    if not 0 <= val_fraction < 1:
        raise BadFraction(f"val fraction must be in [0, 1), got {val_fraction}")
    labels = dataset.labels()
    train_samples, val_samples = [], []
    for label in range(len(dataset.class_names)):
        idx = np.flatnonzero(labels == label)
        perm = rng.permutation(idx)
        n_val = int(np.floor(len(idx) * val_fraction + 0.5))
        val_samples.extend(dataset.samples[i] for i in perm[:n_val])
        train_samples.extend(dataset.samples[i] for i in perm[n_val:])
    return (
        Dataset(train_samples, dataset.class_names, "train"),
        Dataset(val_samples, dataset.class_names, "val"),
    )


_SPLIT_ALIASES = {"train": ("train", "Training"), "test": ("test", "Testing")}


def resolve_split_dir(root, partition: str) -> Path:
    """Locate root/<split>; accepts the capitalized public-corpus names too."""
    root = Path(root)
    candidates = _SPLIT_ALIASES.get(partition, (partition,))
    for name in candidates:
        d = root / name
        if d.is_dir():
            return d
    raise NoClassesFound(f"no {partition} split under {root} (tried {', '.join(candidates)})")


def load_split(split_dir, image_size, partition="train") -> Dataset:
    """Scan a class-directory tree and run the full preprocessing pipeline."""
    manifest = scan_directory(split_dir)
    th, tw = int(image_size[0]), int(image_size[1])
    samples = []
    for path, cls in manifest.entries:
        img = normalize(resize_bilinear(decode_image(path), (th, tw)))
        samples.append(Sample(img, manifest.label_of(cls), str(path)))
    return Dataset(samples, manifest.class_names, partition)


# ---------------------------------------------------------------------------
# Synthetic 4-class corpus: desk-scale stand-in for a real image tree.
# ---------------------------------------------------------------------------

SYNTH_CLASS_NAMES = ["disc", "ring", "cross", "checker"]


def _synth_image(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    bg = 0.12 + 0.06 * rng.random()
    fg = 0.75 + 0.15 * rng.random()
    cy = (size - 1) / 2.0 + rng.uniform(-0.08, 0.08) * size
    cx = (size - 1) / 2.0 + rng.uniform(-0.08, 0.08) * size
    ii, jj = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    r = np.sqrt((ii - cy) ** 2 + (jj - cx) ** 2)
    canvas = np.full((size, size), bg, dtype=np.float64)
    if kind == "disc":
        radius = 0.25 * size * (1.0 + rng.uniform(-0.1, 0.1))
        canvas[r <= radius] = fg
    elif kind == "ring":
        outer = 0.30 * size * (1.0 + rng.uniform(-0.08, 0.08))
        inner = outer - 0.08 * size
        canvas[(r <= outer) & (r >= inner)] = fg
    elif kind == "cross":
        half = 0.07 * size * (1.0 + rng.uniform(-0.2, 0.2))
        reach = 0.40 * size
        vertical = (np.abs(jj - cx) <= half) & (np.abs(ii - cy) <= reach)
        horizontal = (np.abs(ii - cy) <= half) & (np.abs(jj - cx) <= reach)
        canvas[vertical | horizontal] = fg
    elif kind == "checker":
        tile = max(2, size // 8)
        phase = rng.integers(0, tile, size=2)
        board = ((ii + phase[0]) // tile + (jj + phase[1]) // tile) % 2 == 0
        canvas[board] = fg
    else:
        raise ValueError(f"unknown synthetic class {kind!r}")
    canvas += rng.normal(0.0, 0.06, canvas.shape)
    canvas = np.clip(canvas, 0.0, 1.0)
    return np.repeat(canvas[:, :, None], 3, axis=2).astype(np.float32)


def synth_dataset(n_per_class: int, size: int, rng: np.random.Generator,
                  partition="train") -> Dataset:
    """Procedural 4-class dataset (disc / ring / cross / checker).

    Classes are visually distinct but jittered and noisy, so a pixel
    threshold alone cannot solve all four while a small CNN can.
    """
    samples = []
    for label, kind in enumerate(SYNTH_CLASS_NAMES):
        for _ in range(n_per_class):
            samples.append(Sample(_synth_image(kind, size, rng), label))
    return Dataset(samples, list(SYNTH_CLASS_NAMES), partition)


def save_dataset_png(dataset: Dataset, out_dir) -> None:
    """Write samples as root/<label>_<class>/NNNNN.png (sortable encoding).

    The label prefix keeps the sorted-directory-name label encoding
    identical when the tree is re-scanned.
    """
    out_dir = Path(out_dir)
    counters = {}
    for sample in dataset.samples:
        cls = dataset.class_names[sample.label]
        d = out_dir / f"{sample.label}_{cls}"
        d.mkdir(parents=True, exist_ok=True)
        n = counters.get(cls, 0)
        counters[cls] = n + 1
        pixels = np.clip(np.rint(sample.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(pixels, mode="RGB").save(d / f"{n:05d}.png")
