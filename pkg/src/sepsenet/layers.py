"""Differentiable layers: forward(train/infer), backward, parameter slots.

Each layer keeps its parameters in ``self.params`` (name -> array) and
accumulates gradients into ``self.grads`` on every backward call, so two
identical forward/backward passes leave exactly doubled gradients; the
optimizer is expected to zero them between steps.  A layer caches its
forward activations and is therefore single-writer while training;
infer-mode forward on a frozen layer is side-effect free except for
nothing at all.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import BackwardBeforeForward, BadConfig, DegenerateBatch, ShapeMismatch
from .tensor import glorot_uniform


class Layer:
    """Base class: parameter/gradient bookkeeping and the forward cache."""

    kind = "layer"

    def __init__(self, name=None):
        self.name = name or self.kind
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.non_trainable: tuple = ()
        self.cache = None

    def add_param(self, name, value, trainable=True):
        self.params[name] = value
        if trainable:
            self.grads[name] = np.zeros_like(value)
        else:
            self.non_trainable = self.non_trainable + (name,)

    def set_param(self, name, value):
        """Replace a parameter array (used by the gradient checker)."""
        self.params[name] = value
        if name in self.grads:
            self.grads[name] = np.zeros_like(value)

    def param_items(self):
        """Stable (name, array, trainable) listing."""
        return [(n, a, n not in self.non_trainable) for n, a in self.params.items()]

    def zero_grads(self):
        for g in self.grads.values():
            g[...] = 0

    def param_count(self):
        """Analytic (trainable, non_trainable) scalar counts."""
        return 0, 0

    def output_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _need_cache(self):
        if self.cache is None:
            raise BackwardBeforeForward(f"{self.name}: backward before forward")
        return self.cache

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class SeparableConv2D(Layer):
    """Depthwise 2-D convolution followed by a pointwise (1x1) one."""

    kind = "sepconv"

    def __init__(self, in_channels, filters, geom=None, rng=None, name=None):
        super().__init__(name)
        self.geom = geom or ops.ConvGeometry()
        self.in_channels = in_channels
        self.filters = filters
        kh, kw = self.geom.kernel
        rng = rng or np.random.default_rng()
        self.add_param("depthwise", glorot_uniform((kh, kw, in_channels), kh * kw, kh * kw, rng))
        self.add_param("pointwise", glorot_uniform((in_channels, filters), in_channels, filters, rng))
        self.add_param("bias", np.zeros(filters, dtype=np.float32))

    def param_count(self):
        kh, kw = self.geom.kernel
        return kh * kw * self.in_channels + self.in_channels * self.filters + self.filters, 0

    def output_shape(self, in_shape):
        n, h, w, _ = in_shape
        ho, wo = self.geom.out_hw(h, w)
        return (n, ho, wo, self.filters)

    def forward(self, x, train=False):
        mid = ops.depthwise_conv2d(x, self.params["depthwise"], self.geom)
        out = ops.pointwise_conv2d(mid, self.params["pointwise"], self.params["bias"])
        self.cache = (x, mid)
        return out

    def backward(self, grad):
        x, mid = self._need_cache()
        dmid, dpw, dbias = ops.pointwise_conv2d_backward(grad, mid, self.params["pointwise"])
        dx, ddw = ops.depthwise_conv2d_backward(dmid, x, self.params["depthwise"], self.geom)
        self.grads["depthwise"] += ddw
        self.grads["pointwise"] += dpw
        self.grads["bias"] += dbias
        return dx


class BatchNorm2D(Layer):
    """Per-channel batch normalization over (N,H,W,C) or (N,C) inputs.

    Train mode normalizes with batch statistics and updates the moving
    mean/variance as ``m <- momentum*m + (1-momentum)*batch_stat``; infer
    mode normalizes with the moving statistics.  gamma/beta train, the
    moving statistics do not.
    """

    kind = "bn"

    def __init__(self, channels, epsilon=1e-3, momentum=0.99, name=None):
        super().__init__(name)
        if epsilon <= 0:
            raise BadConfig(f"bn epsilon must be > 0, got {epsilon}")
        if not 0 < momentum < 1:
            raise BadConfig(f"bn momentum must be in (0,1), got {momentum}")
        self.channels = channels
        self.epsilon = epsilon
        self.momentum = momentum
        self.add_param("gamma", np.ones(channels, dtype=np.float32))
        self.add_param("beta", np.zeros(channels, dtype=np.float32))
        self.add_param("moving_mean", np.zeros(channels, dtype=np.float32), trainable=False)
        self.add_param("moving_var", np.ones(channels, dtype=np.float32), trainable=False)

    def param_count(self):
        return 2 * self.channels, 2 * self.channels

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeMismatch(f"{self.name}: input carries {x.shape[-1]} channels, layer has {self.channels}")
        axes = tuple(range(x.ndim - 1))
        if train:
            m_count = int(np.prod([x.shape[a] for a in axes]))
            if m_count < 2:
                raise DegenerateBatch(f"{self.name}: need >= 2 elements per channel, got {m_count}")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            mom = np.asarray(self.momentum, dtype=self.params["moving_mean"].dtype)
            self.params["moving_mean"][...] = mom * self.params["moving_mean"] + (1 - mom) * mean
            self.params["moving_var"][...] = mom * self.params["moving_var"] + (1 - mom) * var
        else:
            mean = self.params["moving_mean"]
            var = self.params["moving_var"]
        inv = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv
        self.cache = (xhat, inv, axes, train)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad):
        xhat, inv, axes, was_train = self._need_cache()
        self.grads["beta"] += grad.sum(axis=axes)
        self.grads["gamma"] += (grad * xhat).sum(axis=axes)
        dxhat = grad * self.params["gamma"]
        if not was_train:
            return dxhat * inv
        # Gradient flows through the batch mean and variance.
        return inv * (
            dxhat
            - dxhat.mean(axis=axes)
            - xhat * (dxhat * xhat).mean(axis=axes)
        )


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self.cache = x
        return ops.relu(x)

    def backward(self, grad):
        return ops.relu_backward(self._need_cache(), grad)


class MaxPool2D(Layer):
    kind = "pool"

    def __init__(self, window=(2, 2), stride=(2, 2), name=None):
        super().__init__(name)
        self.window = tuple(window)
        self.stride = tuple(stride)

    def output_shape(self, in_shape):
        n, h, w, c = in_shape
        ho = (h - self.window[0]) // self.stride[0] + 1
        wo = (w - self.window[1]) // self.stride[1] + 1
        return (n, ho, wo, c)

    def forward(self, x, train=False):
        out, argmax = ops.max_pool2d(x, self.window, self.stride)
        self.cache = (argmax, x.shape)
        return out

    def backward(self, grad):
        argmax, in_shape = self._need_cache()
        return ops.max_pool2d_backward(grad, argmax, in_shape, self.window, self.stride)


class SEBlock(Layer):
    """Channel recalibration: GAP -> Dense(C/r) -> ReLU -> Dense(C) -> sigmoid,
    then scale each input channel by its weight in (0, 1).

    The backward pass carries both the multiplicative re-scaling path and
    the squeeze path back through the pooled statistics.
    """

    kind = "se"

    def __init__(self, channels, ratio=16, rng=None, name=None):
        super().__init__(name)
        if ratio < 1:
            raise BadConfig(f"se ratio must be >= 1, got {ratio}")
        self.channels = channels
        self.ratio = ratio
        self.reduced = max(1, channels // ratio)
        rng = rng or np.random.default_rng()
        self.add_param("w1", glorot_uniform((channels, self.reduced), channels, self.reduced, rng))
        self.add_param("b1", np.zeros(self.reduced, dtype=np.float32))
        self.add_param("w2", glorot_uniform((self.reduced, channels), self.reduced, channels, rng))
        self.add_param("b2", np.zeros(channels, dtype=np.float32))

    def param_count(self):
        c, cr = self.channels, self.reduced
        return c * cr + cr + cr * c + c, 0

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeMismatch(f"{self.name}: input carries {x.shape[-1]} channels, layer has {self.channels}")
        z = ops.global_avg_pool(x)
        h1 = z @ self.params["w1"] + self.params["b1"]
        a1 = ops.relu(h1)
        h2 = a1 @ self.params["w2"] + self.params["b2"]
        s = ops.sigmoid(h2)
        self.cache = (x, z, h1, a1, s)
        return x * s[:, None, None, :]

    def backward(self, grad):
        x, z, h1, a1, s = self._need_cache()
        n, h, w, c = x.shape
        dx = grad * s[:, None, None, :]
        ds = np.einsum("nhwc,nhwc->nc", grad, x)
        dh2 = ds * s * (1.0 - s)
        self.grads["w2"] += a1.T @ dh2
        self.grads["b2"] += dh2.sum(axis=0)
        da1 = dh2 @ self.params["w2"].T
        dh1 = ops.relu_backward(h1, da1)
        self.grads["w1"] += z.T @ dh1
        self.grads["b1"] += dh1.sum(axis=0)
        dz = dh1 @ self.params["w1"].T
        dx += dz[:, None, None, :] / (h * w)
        return dx


class GlobalAvgPool(Layer):
    kind = "gap"

    def output_shape(self, in_shape):
        n, h, w, c = in_shape
        return (n, c)

    def forward(self, x, train=False):
        self.cache = x.shape
        return ops.global_avg_pool(x)

    def backward(self, grad):
        return ops.global_avg_pool_backward(grad, self._need_cache())


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None, name=None):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng()
        self.add_param("w", glorot_uniform((in_features, out_features), in_features, out_features, rng))
        self.add_param("b", np.zeros(out_features, dtype=np.float32))

    def param_count(self):
        return self.in_features * self.out_features + self.out_features, 0

    def output_shape(self, in_shape):
        return (in_shape[0], self.out_features)

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"{self.name}: expected (N, {self.in_features}), got {x.shape}")
        self.cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, grad):
        x = self._need_cache()
        self.grads["w"] += x.T @ grad
        self.grads["b"] += grad.sum(axis=0)
        return grad @ self.params["w"].T


class Dropout(Layer):
    """Inverted dropout: train-time masking scaled by 1/(1-p); inference
    is the identity."""

    kind = "drop"

    def __init__(self, p, rng=None, name=None):
        super().__init__(name)
        if not 0 <= p < 1:
            raise BadConfig(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng or np.random.default_rng()

    def forward(self, x, train=False):
        if not train:
            self.cache = ("infer", None)
            return x
        mask = self.rng.random(x.shape) >= self.p
        self.cache = ("train", mask)
        return (x * mask) / (1.0 - self.p)

    def backward(self, grad):
        mode, mask = self._need_cache()
        if mode == "infer":
            return grad
        return (grad * mask) / (1.0 - self.p)

    @property
    def last_mask(self):
        """Keep mask of the most recent train-mode forward (None in infer)."""
        return self.cache[1] if self.cache else None


class Softmax(Layer):
    """Row-wise softmax head.  Kept in the stack so predictions are
    probabilities; the trainer bypasses it with a fused loss gradient."""

    kind = "softmax"

    def forward(self, x, train=False):
        probs = ops.softmax(x)
        self.cache = probs
        return probs

    def backward(self, grad):
        probs = self._need_cache()
        return probs * (grad - (grad * probs).sum(axis=1, keepdims=True))
