"""Minimal numpy neural-network engine: the layer set, losses, Adam and a gradient checker."""
from . import checkpoint
from .gradcheck import grad_check
from .layers import (
    Activation,
    BatchNorm,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    MaxPool2D,
    Reshape,
    spec_from_dict,
)
from .losses import feature_matching_loss, log_softmax, mse_loss, softmax, sparse_ce_loss
from .model import Cache, Sequential
from .optim import AdamState, adam_step

__all__ = [
    "Activation", "AdamState", "BatchNorm", "Cache", "Conv1D", "Conv2D", "Dense", "Dropout",
    "Flatten", "LayerSpec", "MaxPool2D", "Reshape", "Sequential", "adam_step",
    "feature_matching_loss", "grad_check", "log_softmax", "mse_loss", "softmax",
    "sparse_ce_loss", "spec_from_dict", "checkpoint",
]
