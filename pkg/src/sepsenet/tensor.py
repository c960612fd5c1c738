"""Dense float32 tensors, seeded randomness, and the raw ``.rtf1`` file format.

Tensors are plain C-contiguous ``numpy.ndarray`` objects of dtype float32
with rank 1 to 4; the conventional 4-D axis order is (batch N, height H,
width W, channels C), so the flat offset of index (n, h, w, c) is
``((n*H + h)*W + w)*C + c``.  Randomness always flows through an explicit
``numpy.random.Generator`` seeded with PCG64 so that a given seed yields
the same stream on every platform.

File format ``.rtf1``: magic bytes ``RTF1``, then u8 rank, then
rank x u32 little-endian dims, then element-count x f32 little-endian
payload.  No padding, no checksum.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadDistributionParams,
    BadMagic,
    LengthMismatch,
    RankOutOfRange,
    TruncatedPayload,
)

MAGIC = b"RTF1"
MAX_RANK = 4

# Fixed sub-stream indices so one master seed reproducibly expands into
# independent per-purpose generators.
_PURPOSES = {
    "init": 0,
    "dropout": 1,
    "shuffle": 2,
    "augment": 3,
    "split": 4,
    "synth": 5,
}


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for the given 64-bit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def sub_rng(seed: int, purpose: str) -> np.random.Generator:
    """Derive the named per-purpose generator from a master seed.

    Uses ``SeedSequence(seed, spawn_key=(index,))`` with a fixed purpose
    index, so each stage (init, shuffle, ...) is independently
    reproducible from the one top-level seed.
    """
    try:
        key = _PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown rng purpose {purpose!r}; expected one of {sorted(_PURPOSES)}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))


def check_shape(shape) -> tuple:
    shape = tuple(int(d) for d in shape)
    if not 1 <= len(shape) <= MAX_RANK:
        raise RankOutOfRange(f"rank {len(shape)} outside 1..{MAX_RANK}")
    if any(d < 1 for d in shape):
        raise ValueError(f"all dims must be >= 1, got {shape}")
    return shape


def new_tensor(shape, fill=0.0) -> np.ndarray:
    """Create a float32 tensor; ``fill`` is a scalar or a flat value list.

    A scalar broadcasts to every element; a list must match the element
    count exactly (row-major order, last axis fastest) or
    ``LengthMismatch`` is raised.
    """
    shape = check_shape(shape)
    if np.isscalar(fill):
        return np.full(shape, fill, dtype=np.float32)
    values = np.asarray(fill, dtype=np.float32).ravel()
    count = int(np.prod(shape))
    if values.size != count:
        raise LengthMismatch(f"{values.size} values for shape {shape} ({count} elements)")
    return values.reshape(shape).copy()


def random_uniform(shape, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform fill on [lo, hi); deterministic given the generator state."""
    shape = check_shape(shape)
    if not lo < hi:
        raise BadDistributionParams(f"uniform requires lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, size=shape).astype(np.float32)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform fill with limit sqrt(6 / (fan_in + fan_out))."""
    shape = check_shape(shape)
    if fan_in < 1 or fan_out < 1:
        raise BadDistributionParams(f"fans must be >= 1, got ({fan_in}, {fan_out})")
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedPayload(f"wanted {n} bytes, got {len(data)}")
    return data


def write_tensor(t: np.ndarray, sink) -> None:
    """Serialize a float32 tensor to a path or binary file object.

    The round trip ``read_tensor(write_tensor(t))`` is bit-identical on
    (shape, data), which is why only float32 input is accepted.
    """
    if t.dtype != np.float32:
        raise TypeError(f"only float32 tensors are serializable, got {t.dtype}")
    shape = check_shape(t.shape)
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as f:
            write_tensor(t, f)
        return
    sink.write(MAGIC)
    sink.write(struct.pack("<B", len(shape)))
    sink.write(struct.pack(f"<{len(shape)}I", *shape))
    sink.write(np.ascontiguousarray(t).astype("<f4", copy=False).tobytes())


def read_tensor(source) -> np.ndarray:
    """Read one tensor record from a path or binary file object."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as f:
            return read_tensor(f)
    magic = _read_exact(source, len(MAGIC))
    if magic != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {magic!r}")
    (rank,) = struct.unpack("<B", _read_exact(source, 1))
    if not 1 <= rank <= MAX_RANK:
        raise RankOutOfRange(f"rank {rank} outside 1..{MAX_RANK}")
    dims = struct.unpack(f"<{rank}I", _read_exact(source, 4 * rank))
    if any(d < 1 for d in dims):
        raise TruncatedPayload(f"invalid zero dim in header {dims}")
    count = int(np.prod(dims))
    payload = _read_exact(source, 4 * count)
    data = np.frombuffer(payload, dtype="<f4", count=count)
    return data.reshape(dims).astype(np.float32, copy=True)
