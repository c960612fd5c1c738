"""Architecture assembly, parameter audit, summary, and checkpoints.

The default stack is three conv blocks over a widening filter ladder,
each block being SeparableConv2D -> BatchNorm -> ReLU -> MaxPool -> SE,
followed by global average pooling and a small dense head ending in
softmax.  The auditor counts parameters analytically per layer and keeps
the published totals for this architecture around so the summary command
can flag that the dense-head count reported alongside it is not what a
GAP head actually yields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import (
    BackwardBeforeForward,
    BadConfig,
    BadMagic,
    ConfigMismatch,
    ShapeMismatch,
    TruncatedPayload,
)
from .ops import ConvGeometry
from .tensor import make_rng, read_tensor, sub_rng, write_tensor

CHECKPOINT_MAGIC = b"SEPSE1"

# Totals published for this architecture (4-class, 150x150x3, ladder
# 32/64/128).  The non-trainable part matches the three BatchNorm layers
# exactly; the trainable part does not follow from a GAP head and is
# reported by `summary --audit-paper` as unreproduced.
PUBLISHED_TOTAL_PARAMS = 1_040_063
PUBLISHED_TRAINABLE_PARAMS = 1_039_615
PUBLISHED_NON_TRAINABLE_PARAMS = PUBLISHED_TOTAL_PARAMS - PUBLISHED_TRAINABLE_PARAMS  # 448


@dataclass
class ModelConfig:
    """Declarative architecture description."""

    input_size: tuple = (150, 150, 3)
    filter_ladder: tuple = (32, 64, 128)
    kernel: tuple = (3, 3)
    se_ratio: int = 16
    head_widths: tuple = (128, 64)
    head_dropout: tuple = (0.3, 0.4)
    num_classes: int = 4
    padding: str = "same"
    pool_window: tuple = (2, 2)
    pool_stride: tuple = (2, 2)
    bn_epsilon: float = 1e-3
    bn_momentum: float = 0.99
    seed: int = 0

    def __post_init__(self):
        self.input_size = tuple(int(d) for d in self.input_size)
        self.filter_ladder = tuple(int(f) for f in self.filter_ladder)
        self.kernel = tuple(int(k) for k in self.kernel)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        self.head_dropout = tuple(float(p) for p in self.head_dropout)
        self.pool_window = tuple(int(p) for p in self.pool_window)
        self.pool_stride = tuple(int(s) for s in self.pool_stride)

    def validate(self):
        if len(self.input_size) != 3 or any(d < 1 for d in self.input_size):
            raise BadConfig(f"input_size must be (H, W, C) of positive ints, got {self.input_size}")
        if not self.filter_ladder or any(f < 1 for f in self.filter_ladder):
            raise BadConfig(f"filter_ladder must be non-empty and positive, got {self.filter_ladder}")
        if len(self.kernel) != 2 or any(k < 1 for k in self.kernel):
            raise BadConfig(f"kernel must be (kh, kw) positive, got {self.kernel}")
        if self.se_ratio < 1:
            raise BadConfig(f"se_ratio must be >= 1, got {self.se_ratio}")
        if self.num_classes < 2:
            raise BadConfig(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.head_widths) != len(self.head_dropout):
            raise BadConfig("head_widths and head_dropout must pair up")
        if any(w < 1 for w in self.head_widths):
            raise BadConfig(f"head widths must be positive, got {self.head_widths}")
        if any(not 0 <= p < 1 for p in self.head_dropout):
            raise BadConfig(f"dropout rates must be in [0, 1), got {self.head_dropout}")
        if self.padding not in ("same", "valid"):
            raise BadConfig(f"padding must be same|valid, got {self.padding!r}")
        if any(p < 1 for p in self.pool_window) or any(s < 1 for s in self.pool_stride):
            raise BadConfig(f"pool window/stride must be positive, got {self.pool_window}/{self.pool_stride}")
        if self.bn_epsilon <= 0:
            raise BadConfig(f"bn_epsilon must be > 0, got {self.bn_epsilon}")
        if not 0 < self.bn_momentum < 1:
            raise BadConfig(f"bn_momentum must be in (0, 1), got {self.bn_momentum}")
        return self

    # Canonical key=value block: fixed key order, comma-joined sequences.
    _KV_ORDER = (
        "input_size", "filter_ladder", "kernel", "se_ratio", "head_widths",
        "head_dropout", "num_classes", "padding", "pool_window", "pool_stride",
        "bn_epsilon", "bn_momentum", "seed",
    )

    def to_kv(self) -> str:
        lines = []
        for key in self._KV_ORDER:
            value = getattr(self, key)
            if isinstance(value, tuple):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "ModelConfig":
        kv = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigMismatch(f"malformed config line {line!r}")
            key, value = line.split("=", 1)
            kv[key.strip()] = value.strip()
        known = set(cls._KV_ORDER)
        unknown = set(kv) - known - {"class_names"}
        if unknown:
            raise ConfigMismatch(f"unknown config keys {sorted(unknown)}")
        missing = known - set(kv)
        if missing:
            raise ConfigMismatch(f"missing config keys {sorted(missing)}")
        def ints(s):
            return tuple(int(v) for v in s.split(","))
        def floats(s):
            return tuple(float(v) for v in s.split(","))
        cfg = cls(
            input_size=ints(kv["input_size"]),
            filter_ladder=ints(kv["filter_ladder"]),
            kernel=ints(kv["kernel"]),
            se_ratio=int(kv["se_ratio"]),
            head_widths=ints(kv["head_widths"]),
            head_dropout=floats(kv["head_dropout"]),
            num_classes=int(kv["num_classes"]),
            padding=kv["padding"],
            pool_window=ints(kv["pool_window"]),
            pool_stride=ints(kv["pool_stride"]),
            bn_epsilon=float(kv["bn_epsilon"]),
            bn_momentum=float(kv["bn_momentum"]),
            seed=int(kv["seed"]),
        )
        try:
            cfg.validate()
        except BadConfig as exc:
            raise ConfigMismatch(f"invalid stored config: {exc}") from exc
        return cfg


class Model:
    """An ordered layer stack with a train/infer mode switch per call."""

    def __init__(self, stack, config: ModelConfig, class_names=None):
        self.layers = list(stack)
        self.config = config
        self.class_names = list(class_names) if class_names else None
        self.last_logits = None
        self._forward_ran = False

    def forward(self, x, train=False):
        """Run the stack; rows of the result are probability vectors."""
        expected = self.config.input_size
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeMismatch(f"expected batch of shape (N, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
        out = x
        for layer in self.layers:
            if isinstance(layer, L.Softmax):
                self.last_logits = out
            out = layer.forward(out, train=train)
        self._forward_ran = True
        return out

    def backward(self, grad_logits):
        """Accumulate parameter gradients by reverse traversal.

        The gradient is taken at the logits (the softmax input): the
        training loss fuses softmax with cross-entropy, so the final
        Softmax layer is skipped here.
        """
        if not self._forward_ran:
            raise BackwardBeforeForward("model backward before any forward")
        grad = grad_logits
        body = self.layers[:-1] if isinstance(self.layers[-1], L.Softmax) else self.layers
        for layer in reversed(body):
            grad = layer.backward(grad)
        return grad

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def param_entries(self):
        """Stable (layer, qualified_name, array, trainable) listing."""
        out = []
        for layer in self.layers:
            for name, arr, trainable in layer.param_items():
                out.append((layer, f"{layer.name}.{name}", arr, trainable))
        return out

    def trainable_arrays(self):
        return [arr for _, _, arr, trainable in self.param_entries() if trainable]

    def trainable_grads(self):
        return [layer.grads[qname.split(".", 1)[1]]
                for layer, qname, _, trainable in self.param_entries() if trainable]


def build_model(config: ModelConfig, rng=None) -> Model:
    """Instantiate the layer stack; deterministic for a given seed/rng."""
    config.validate()
    if rng is None:
        rng = sub_rng(config.seed, "init")
    geom = ConvGeometry(kernel=config.kernel, stride=(1, 1), padding=config.padding)
    stack = []
    in_channels = config.input_size[2]
    for i, filters in enumerate(config.filter_ladder, start=1):
        stack.append(L.SeparableConv2D(in_channels, filters, geom, rng, name=f"sepconv{i}"))
        stack.append(L.BatchNorm2D(filters, config.bn_epsilon, config.bn_momentum, name=f"bn{i}"))
        stack.append(L.ReLU(name=f"relu{i}"))
        stack.append(L.MaxPool2D(config.pool_window, config.pool_stride, name=f"pool{i}"))
        stack.append(L.SEBlock(filters, config.se_ratio, rng, name=f"se{i}"))
        in_channels = filters
    stack.append(L.GlobalAvgPool(name="gap"))
    features = in_channels
    n_blocks = len(config.filter_ladder)
    for j, (width, p) in enumerate(zip(config.head_widths, config.head_dropout), start=1):
        stack.append(L.Dense(features, width, rng, name=f"dense{j}"))
        stack.append(L.ReLU(name=f"relu{n_blocks + j}"))
        drop_rng = make_rng(int(rng.integers(2**63)))
        stack.append(L.Dropout(p, drop_rng, name=f"drop{j}"))
        features = width
    stack.append(L.Dense(features, config.num_classes, rng, name=f"dense{len(config.head_widths) + 1}"))
    stack.append(L.Softmax(name="softmax"))
    return Model(stack, config)


@dataclass
class AuditRow:
    name: str
    out_shape: tuple
    trainable: int
    non_trainable: int


@dataclass
class ParamAudit:
    rows: list = field(default_factory=list)
    trainable: int = 0
    non_trainable: int = 0

    @property
    def total(self):
        return self.trainable + self.non_trainable


def count_params(model: Model) -> ParamAudit:
    """Analytic per-layer parameter counts with output shapes."""
    audit = ParamAudit()
    shape = (1,) + model.config.input_size
    for layer in model.layers:
        shape = layer.output_shape(shape)
        t, nt = layer.param_count()
        audit.rows.append(AuditRow(layer.name, shape[1:], t, nt))
        audit.trainable += t
        audit.non_trainable += nt
    return audit


def model_summary(model: Model) -> str:
    """Layer/shape/parameter table with audit totals in the footer."""
    audit = count_params(model)
    header = f"{'layer':<12}{'output shape':<18}{'trainable':>12}{'frozen':>10}"
    rule = "-" * len(header)
    lines = [header, rule]
    for row in audit.rows:
        shape = "x".join(str(d) for d in row.out_shape)
        lines.append(f"{row.name:<12}{shape:<18}{row.trainable:>12,}{row.non_trainable:>10,}")
    lines.append(rule)
    lines.append(f"{'total':<12}{'':<18}{audit.trainable:>12,}{audit.non_trainable:>10,}")
    lines.append(f"parameters: {audit.total:,} ({audit.trainable:,} trainable, {audit.non_trainable:,} non-trainable)")
    return "\n".join(lines)


def save_checkpoint(model: Model, sink) -> None:
    """Write magic, config block, then every parameter tensor in stack order."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as f:
            save_checkpoint(model, f)
        return
    config_text = model.config.to_kv()
    if model.class_names:
        config_text += "class_names=" + ",".join(model.class_names) + "\n"
    blob = config_text.encode("utf-8")
    sink.write(CHECKPOINT_MAGIC)
    sink.write(struct.pack("<I", len(blob)))
    sink.write(blob)
    for _, qname, arr, _ in model.param_entries():
        write_tensor(arr, sink)


def load_checkpoint(source) -> Model:
    """Rebuild the model from a checkpoint; bit-exact parameter restore."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            return load_checkpoint(f)
    magic = source.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise BadMagic(f"expected {CHECKPOINT_MAGIC!r}, got {magic!r}")
    raw_len = source.read(4)
    if len(raw_len) != 4:
        raise TruncatedPayload("checkpoint ends inside the config length field")
    (blob_len,) = struct.unpack("<I", raw_len)
    blob = source.read(blob_len)
    if len(blob) != blob_len:
        raise TruncatedPayload("checkpoint ends inside the config block")
    text = blob.decode("utf-8")
    config = ModelConfig.from_kv(text)
    class_names = None
    for line in text.splitlines():
        if line.startswith("class_names="):
            class_names = line.split("=", 1)[1].split(",")
    model = build_model(config)
    model.class_names = class_names
    for _, qname, arr, _ in model.param_entries():
        stored = read_tensor(source)
        if stored.shape != arr.shape:
            raise ConfigMismatch(f"{qname}: stored shape {stored.shape} != expected {arr.shape}")
        np.copyto(arr, stored)
    return model
