"""A compact 3D CNN built on numpy: forward, gradients, Adam, serialization."""

from .layers import (
    BatchNorm,
    Conv3d,
    Dense,
    GlobalMaxPool,
    ReLU,
    Tanh,
    same_padding,
)
from .model import (
    DEFAULT_MU_G,
    Network,
    NetworkSpec,
    ResidualBlock,
    default_network_spec,
    truncated_normal,
)
from .optim import Adam, lr_schedule
from .weights_io import (
    NetworkWeights,
    apply_weights,
    load_weights,
    save_weights,
    weights_from_network,
)

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv3d",
    "DEFAULT_MU_G",
    "Dense",
    "GlobalMaxPool",
    "Network",
    "NetworkSpec",
    "NetworkWeights",
    "ReLU",
    "ResidualBlock",
    "Tanh",
    "apply_weights",
    "default_network_spec",
    "load_weights",
    "lr_schedule",
    "same_padding",
    "save_weights",
    "truncated_normal",
    "weights_from_network",
]
