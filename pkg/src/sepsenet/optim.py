"""Cross-entropy loss, the Adam optimizer, and gradient checking.

The loss reported everywhere is the batch MEAN of per-sample categorical
cross-entropy, so the learning rate does not depend on the batch size.
Its gradient at the logits is the fused closed form (softmax - labels)/N,
which is what the trainer feeds into Model.backward.

The gradient checker recomputes everything in float64: main-path
tensors are float32, and central differences at step 1e-4 are only
meaningful above float32 rounding noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonDeterministicForward,
    NotDistribution,
    NotOneHot,
    ShapeMismatch,
)
from .layers import Dropout
from .ops import softmax

PROB_FLOOR = 1e-12  # clamp inside the log; avoids -inf on saturated misses


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, num_classes), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1.0
    return out


def _check_one_hot(labels):
    if labels.ndim != 2:
        raise NotOneHot(f"labels must be (N, K), got shape {labels.shape}")
    ok = np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)
    if not ok:
        raise NotOneHot("label rows must contain exactly one 1 and otherwise 0")


@dataclass
class LossReport:
    mean_loss: float
    per_sample: np.ndarray


def cross_entropy(probs, labels) -> LossReport:
    """Mean categorical cross-entropy of probability rows vs one-hot labels."""
    if probs.shape != labels.shape:
        raise ShapeMismatch(f"probs {probs.shape} vs labels {labels.shape}")
    _check_one_hot(labels)
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-4):
        raise NotDistribution(f"probability rows must sum to 1, worst sum {row_sums[np.argmax(np.abs(row_sums - 1))]}")
    picked = (probs * labels).sum(axis=1)
    per_sample = -np.log(np.maximum(picked, PROB_FLOOR))
    return LossReport(float(per_sample.mean()), per_sample)


def softmax_xent_grad(logits, labels) -> np.ndarray:
    """d(mean cross-entropy)/d(logits) = (softmax(logits) - labels) / N."""
    _check_one_hot(labels)
    if logits.shape != labels.shape:
        raise ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    return (softmax(logits) - labels) / logits.shape[0]


class Adam:
    """Adam with bias correction; updates parameters in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with the first and
    second moments m, v tracked per parameter tensor.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if lr < 0 or eps <= 0:
            raise ValueError(f"need lr >= 0 and eps > 0, got {lr}, {eps}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        grads = list(grads)
        if len(grads) != len(self.params):
            raise ShapeMismatch(f"{len(grads)} grads for {len(self.params)} params")
        for p, g in zip(self.params, grads):
            if p.shape != g.shape:
                raise ShapeMismatch(f"param {p.shape} vs grad {g.shape}")
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            m_hat = m / c1
            v_hat = v / c2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class GradCheckRow:
    tensor: str
    max_rel_error: float
    ok: bool


@dataclass
class GradCheckReport:
    rows: list = field(default_factory=list)
    tol: float = 0.0

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.rows), default=0.0)

    def lines(self):
        for r in self.rows:
            yield f"{'PASS' if r.ok else 'FAIL'} {r.tensor} max_rel_err={r.max_rel_error:.3e}"


def _rel_error(analytic, numeric):
    # Normalized by the tensor's gradient scale so near-zero elements do
    # not blow up the ratio; a systematic error on the dominant entries
    # still trips the tolerance.  The 1e-8 floor keeps tensors whose true
    # gradient is exactly zero (e.g. a conv bias absorbed by the following
    # batch norm) from comparing float64 rounding residue against itself.
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def grad_check(target, x, labels=None, step=1e-4, tol=1e-5, corrupt_sign=False):
    """Compare analytic gradients against 64-bit central differences.

    ``target`` is either a Model (loss = mean cross-entropy on
    ``labels``) or a single layer (loss = sum of the output weighted by a
    fixed random projection).  Dropout is forced off and batch-norm sees
    the same fixed batch on every evaluation, so the loss is a
    deterministic function of the parameters; that is verified up front
    by running the forward twice.

    ``corrupt_sign`` flips the analytic gradients before comparison; it
    exists as a negative control for the harness itself.
    """
    is_model = hasattr(target, "layers")
    target_layers = target.layers if is_model else [target]

    # Snapshot, then promote every parameter (and gradient slot) to float64.
    saved = []
    for layer in target_layers:
        for name, arr, _ in layer.param_items():
            saved.append((layer, name, arr))
            layer.set_param(name, arr.astype(np.float64))
    saved_p = [(layer, layer.p) for layer in target_layers if isinstance(layer, Dropout)]
    for layer, _ in saved_p:
        layer.p = 0.0

    x64 = np.asarray(x, dtype=np.float64)
    try:
        if is_model:
            y64 = np.asarray(labels, dtype=np.float64)
            _check_one_hot(y64)

            def loss():
                probs = target.forward(x64, train=True)
                return float(cross_entropy(probs, y64).mean_loss)

            def analytic_backward():
                target.zero_grads()
                loss()
                target.backward(softmax_xent_grad(target.last_logits, y64))
        else:
            probe = target.forward(x64, train=True)
            projection = np.random.Generator(np.random.PCG64(0)).standard_normal(probe.shape)

            def loss():
                return float((target.forward(x64, train=True) * projection).sum())

            def analytic_backward():
                target.zero_grads()
                target.forward(x64, train=True)
                nonlocal input_grad
                input_grad = target.backward(projection)

        input_grad = None
        first, second = loss(), loss()
        if np.isnan(first) or first != second:
            raise NonDeterministicForward(f"two identical forwards gave {first!r} and {second!r}")

        analytic_backward()
        report = GradCheckReport(tol=tol)

        def fd_tensor(arr):
            numeric = np.zeros_like(arr)
            for i in range(arr.size):
                orig = arr.flat[i]
                arr.flat[i] = orig + step
                up = loss()
                arr.flat[i] = orig - step
                down = loss()
                arr.flat[i] = orig
                numeric.flat[i] = (up - down) / (2.0 * step)
            return numeric

        for layer in target_layers:
            for name, arr, trainable in layer.param_items():
                if not trainable:
                    continue
                analytic = layer.grads[name].copy()
                if corrupt_sign:
                    analytic = -analytic
                numeric = fd_tensor(arr)
                err = _rel_error(analytic, numeric)
                report.rows.append(GradCheckRow(f"{layer.name}.{name}", err, err < tol))

        if not is_model:
            analytic = input_grad.copy()
            if corrupt_sign:
                analytic = -analytic
            numeric = fd_tensor(x64)
            err = _rel_error(analytic, numeric)
            report.rows.append(GradCheckRow("input", err, err < tol))

        return report
    finally:
        for layer, name, arr in saved:
            layer.set_param(name, arr)
        for layer, p in saved_p:
            layer.p = p
        for layer in target_layers:
            layer.cache = None
