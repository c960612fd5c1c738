"""Separable convolution from its two factors, and why it is lightweight.

Run from the repository root:  python3 demos/01_convolution_kernels.py
"""

import numpy as np

from sepsenet import ConvGeometry, make_rng
from sepsenet.ops import (
    depthwise_conv2d,
    max_pool2d,
    pointwise_conv2d,
    separable_conv2d,
    standard_conv2d,
)

rng = make_rng(0)

# A separable convolution is a depthwise stage (one 3x3 filter per input
# channel, channels never mix) followed by a pointwise stage (a 1x1
# convolution that mixes channels).  Build one by hand on a small input.
x = rng.uniform(-1, 1, (1, 6, 6, 3)).astype(np.float32)
geom = ConvGeometry(kernel=(3, 3), stride=(1, 1), padding="same")

dw_kernels = rng.uniform(-1, 1, (3, 3, 3)).astype(np.float32)   # (kh, kw, Cin)
pw_weights = rng.uniform(-1, 1, (3, 8)).astype(np.float32)      # (Cin, Cout)
bias = np.zeros(8, dtype=np.float32)

stage1 = depthwise_conv2d(x, dw_kernels, geom)
stage2 = pointwise_conv2d(stage1, pw_weights, bias)
fused = separable_conv2d(x, dw_kernels, pw_weights, bias, geom)
print("separable == depthwise then pointwise:", np.array_equal(fused, stage2))
print("output shape:", fused.shape)

# The dense alternative carries a full (kh, kw, Cin, Cout) kernel.
dense_kernels = rng.uniform(-1, 1, (3, 3, 3, 8)).astype(np.float32)
dense_out = standard_conv2d(x, dense_kernels, bias, geom)
print("standard conv output shape:", dense_out.shape)

# Parameter arithmetic (biases excluded): for k x k kernels the ratio
# separable/standard collapses to 1/Cout + 1/k^2.
k2 = 3 * 3
for cin, cout in [(3, 32), (32, 64), (64, 128)]:
    sep = k2 * cin + cin * cout
    std = k2 * cin * cout
    print(f"Cin={cin:>3} Cout={cout:>3}: separable {sep:>6} vs standard {std:>7} "
          f"-> ratio {sep / std:.4f} = 1/{cout} + 1/9 = {1 / cout + 1 / 9:.4f}")

# Same-padding convolutions keep the spatial size; only pooling shrinks it.
# The default 150x150 input walks down 150 -> 75 -> 37 -> 18.
side = 150
for block in (1, 2, 3):
    feature = rng.random((1, side, side, 1)).astype(np.float32)
    pooled, _ = max_pool2d(feature, (2, 2), (2, 2))
    side = pooled.shape[1]
    print(f"after pool {block}: {side}x{side}")
