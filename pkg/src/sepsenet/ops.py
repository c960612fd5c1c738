"""Stateless convolution, pooling, and activation kernels.

All functions are pure: they take (N, H, W, C) arrays and return new
arrays, preserving the input dtype so the same kernels serve both the
float32 forward path and 64-bit gradient checking.  Convolution here is
cross-correlation (no kernel flip).  Every forward has an explicit
backward companion; the semantic reference for each kernel is plain
quadruple-loop summation, which the test suite implements independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, ShapeMismatch, WindowTooLarge


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel size, stride, and padding rule of one 2-D convolution.

    Output spatial size: ``valid`` gives floor((in - k)/s) + 1; ``same``
    gives ceil(in/s) with the zero padding split floor-left / ceil-right.
    """

    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    padding: str = "same"

    def __post_init__(self):
        kh, kw = self.kernel
        sh, sw = self.stride
        if kh < 1 or kw < 1 or sh < 1 or sw < 1:
            raise ValueError(f"kernel/stride must be positive, got {self.kernel}/{self.stride}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")

    def out_hw(self, h: int, w: int) -> tuple:
        kh, kw = self.kernel
        sh, sw = self.stride
        if self.padding == "same":
            return -(-h // sh), -(-w // sw)
        if h < kh or w < kw:
            raise ShapeMismatch(f"valid conv: kernel {self.kernel} larger than input {h}x{w}")
        return (h - kh) // sh + 1, (w - kw) // sw + 1

    def pad_amounts(self, h: int, w: int) -> tuple:
        """(top, bottom, left, right) zero padding."""
        if self.padding == "valid":
            return 0, 0, 0, 0
        kh, kw = self.kernel
        sh, sw = self.stride
        ho, wo = self.out_hw(h, w)
        total_h = max(0, (ho - 1) * sh + kh - h)
        total_w = max(0, (wo - 1) * sw + kw - w)
        return total_h // 2, total_h - total_h // 2, total_w // 2, total_w - total_w // 2


def _pad(x, geom):
    pt, pb, pl, pr = geom.pad_amounts(x.shape[1], x.shape[2])
    if pt or pb or pl or pr:
        return np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    return x


def _window(xp, a, b, ho, wo, sh, sw):
    # The (ho, wo) view of padded input seen by kernel tap (a, b).
    return xp[:, a : a + (ho - 1) * sh + 1 : sh, b : b + (wo - 1) * sw + 1 : sw, :]


def depthwise_conv2d(x, kernels, geom: ConvGeometry):
    """Per-channel 2-D correlation; channels never mix.

    x: (N, H, W, C); kernels: (kh, kw, C) -> (N, H', W', C).
    """
    n, h, w, c = x.shape
    kh, kw = geom.kernel
    if kernels.shape[-1] != c:
        raise ChannelMismatch(f"kernels carry {kernels.shape[-1]} channels, input has {c}")
    if kernels.shape[:2] != (kh, kw):
        raise ShapeMismatch(f"kernels {kernels.shape[:2]} disagree with geometry {geom.kernel}")
    sh, sw = geom.stride
    ho, wo = geom.out_hw(h, w)
    xp = _pad(x, geom)
    out = np.zeros((n, ho, wo, c), dtype=np.result_type(x, kernels))
    for a in range(kh):
        for b in range(kw):
            out += _window(xp, a, b, ho, wo, sh, sw) * kernels[a, b]
    return out


def depthwise_conv2d_backward(grad, x, kernels, geom: ConvGeometry):
    """Gradients of depthwise_conv2d w.r.t. input and kernels."""
    n, h, w, c = x.shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    ho, wo = geom.out_hw(h, w)
    xp = _pad(x, geom)
    pt, _, pl, _ = geom.pad_amounts(h, w)
    dk = np.zeros_like(kernels, dtype=grad.dtype)
    dxp = np.zeros(xp.shape, dtype=grad.dtype)
    for a in range(kh):
        for b in range(kw):
            win = _window(xp, a, b, ho, wo, sh, sw)
            dk[a, b] = np.einsum("nijc,nijc->c", grad, win)
            _window(dxp, a, b, ho, wo, sh, sw)[...] += grad * kernels[a, b]
    dx = dxp[:, pt : pt + h, pl : pl + w, :]
    return dx, dk


def pointwise_conv2d(x, weights, bias):
    """1x1 convolution: a per-pixel affine map over channels.

    x: (N, H, W, Cin); weights: (Cin, Cout); bias: (Cout,).
    """
    n, h, w, cin = x.shape
    if weights.shape[0] != cin:
        raise ChannelMismatch(f"weights expect {weights.shape[0]} channels, input has {cin}")
    cout = weights.shape[1]
    if bias.shape != (cout,):
        raise ShapeMismatch(f"bias {bias.shape} does not match {cout} output channels")
    y = x.reshape(-1, cin) @ weights + bias
    return y.reshape(n, h, w, cout)


def pointwise_conv2d_backward(grad, x, weights):
    n, h, w, cin = x.shape
    cout = weights.shape[1]
    g2 = grad.reshape(-1, cout)
    x2 = x.reshape(-1, cin)
    dw = x2.T @ g2
    db = g2.sum(axis=0)
    dx = (g2 @ weights.T).reshape(x.shape)
    return dx, dw, db


def separable_conv2d(x, dw_kernels, pw_weights, bias, geom: ConvGeometry):
    """Depthwise stage followed by pointwise stage.

    Defined (and tested) as exactly the composition
    ``pointwise_conv2d(depthwise_conv2d(x, ...), ...)``.
    """
    return pointwise_conv2d(depthwise_conv2d(x, dw_kernels, geom), pw_weights, bias)


def standard_conv2d(x, kernels, bias, geom: ConvGeometry):
    """Dense convolution mixing all input channels.

    x: (N, H, W, Cin); kernels: (kh, kw, Cin, Cout); bias: (Cout,).
    Implemented by patch extraction + matrix product; the direct
    summation oracle in the tests is the semantic definition.
    """
    n, h, w, cin = x.shape
    kh, kw = geom.kernel
    if kernels.shape[2] != cin:
        raise ChannelMismatch(f"kernels expect {kernels.shape[2]} channels, input has {cin}")
    if kernels.shape[:2] != (kh, kw):
        raise ShapeMismatch(f"kernels {kernels.shape[:2]} disagree with geometry {geom.kernel}")
    cout = kernels.shape[3]
    if bias.shape != (cout,):
        raise ShapeMismatch(f"bias {bias.shape} does not match {cout} output channels")
    sh, sw = geom.stride
    ho, wo = geom.out_hw(h, w)
    xp = _pad(x, geom)
    cols = np.empty((n, ho, wo, kh, kw, cin), dtype=xp.dtype)
    for a in range(kh):
        for b in range(kw):
            cols[:, :, :, a, b, :] = _window(xp, a, b, ho, wo, sh, sw)
    y = cols.reshape(n * ho * wo, kh * kw * cin) @ kernels.reshape(kh * kw * cin, cout) + bias
    return y.reshape(n, ho, wo, cout)


def standard_conv2d_backward(grad, x, kernels, geom: ConvGeometry):
    n, h, w, cin = x.shape
    kh, kw = geom.kernel
    sh, sw = geom.stride
    ho, wo = geom.out_hw(h, w)
    cout = kernels.shape[3]
    xp = _pad(x, geom)
    pt, _, pl, _ = geom.pad_amounts(h, w)
    cols = np.empty((n, ho, wo, kh, kw, cin), dtype=xp.dtype)
    for a in range(kh):
        for b in range(kw):
            cols[:, :, :, a, b, :] = _window(xp, a, b, ho, wo, sh, sw)
    g2 = grad.reshape(n * ho * wo, cout)
    dk = (cols.reshape(n * ho * wo, kh * kw * cin).T @ g2).reshape(kernels.shape)
    db = g2.sum(axis=0)
    dcols = (g2 @ kernels.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros(xp.shape, dtype=grad.dtype)
    for a in range(kh):
        for b in range(kw):
            _window(dxp, a, b, ho, wo, sh, sw)[...] += dcols[:, :, :, a, b, :]
    dx = dxp[:, pt : pt + h, pl : pl + w, :]
    return dx, dk, db


def max_pool2d(x, window, stride):
    """Valid-coverage max pooling; the trailing remainder is dropped.

    Returns (output, argmax) where argmax holds, per output element, the
    flat within-window index of the winning input position (ties go to
    the lowest index).  Feed argmax back to max_pool2d_backward.
    """
    n, h, w, c = x.shape
    ph, pw = window
    sh, sw = stride
    if ph < 1 or pw < 1 or sh < 1 or sw < 1:
        raise ValueError(f"window/stride must be positive, got {window}/{stride}")
    if ph > h or pw > w:
        raise WindowTooLarge(f"window {window} exceeds input {h}x{w}")
    ho = (h - ph) // sh + 1
    wo = (w - pw) // sw + 1
    taps = np.stack(
        [_window(x, a, b, ho, wo, sh, sw) for a in range(ph) for b in range(pw)],
        axis=0,
    )
    argmax = taps.argmax(axis=0)
    out = np.take_along_axis(taps, argmax[None], axis=0)[0]
    return out, argmax


def max_pool2d_backward(grad, argmax, input_shape, window, stride):
    """Route each upstream gradient to its single winning input position."""
    n, h, w, c = input_shape
    ph, pw = window
    sh, sw = stride
    ho, wo = grad.shape[1], grad.shape[2]
    dx = np.zeros(input_shape, dtype=grad.dtype)
    for a in range(ph):
        for b in range(pw):
            mask = argmax == (a * pw + b)
            _window(dx, a, b, ho, wo, sh, sw)[...] += grad * mask
    return dx


def global_avg_pool(x):
    """Collapse each HxW feature map to its mean: (N,H,W,C) -> (N,C)."""
    if x.ndim != 4:
        raise ShapeMismatch(f"expected rank-4 input, got shape {x.shape}")
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(grad, input_shape):
    n, h, w, c = input_shape
    dx = np.empty(input_shape, dtype=grad.dtype)
    dx[:] = grad[:, None, None, :] / (h * w)
    return dx


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, grad):
    # Subgradient at 0 is taken as 0.
    return grad * (x > 0)


def sigmoid(x):
    """Numerically stable logistic function (no overflow for any x)."""
    x = np.asarray(x)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(logits):
    """Row-wise softmax of (N, K) logits with max subtraction."""
    if logits.ndim != 2:
        raise ShapeMismatch(f"expected (N, K) logits, got shape {logits.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
