"""sepsenet: a from-scratch CNN micro-framework.

Separable convolutions with squeeze-and-excitation blocks, manually
derived backward passes verified by finite differences, an analytic
parameter auditor, and a full image-classification pipeline (ingestion,
augmentation, training loop, metrics) on plain numpy arrays.
"""

from .data import (
    AugmentConfig,
    Dataset,
    Sample,
    augment,
    decode_image,
    load_split,
    normalize,
    resize_bilinear,
    scan_directory,
    split,
    synth_dataset,
)
from .layers import (
    BatchNorm2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    MaxPool2D,
    ReLU,
    SEBlock,
    SeparableConv2D,
    Softmax,
)
from .metrics import ConfusionMatrix, accuracy, confusion
from .model import (
    Model,
    ModelConfig,
    ParamAudit,
    build_model,
    count_params,
    load_checkpoint,
    model_summary,
    save_checkpoint,
)
from .ops import ConvGeometry
from .optim import Adam, cross_entropy, grad_check, one_hot, softmax_xent_grad
from .tensor import (
    glorot_uniform,
    make_rng,
    new_tensor,
    random_uniform,
    read_tensor,
    sub_rng,
    write_tensor,
)
from .trainer import TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"
