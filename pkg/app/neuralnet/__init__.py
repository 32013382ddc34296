"""
神经网络模块
"""

from .neuralnet_layers import LAYER_KINDS, BatchNorm, Dense, Dropout, LayerSpec, batchnorm_update
from .neuralnet_losses import LOSSES, loss_gradient, loss_value
from .neuralnet_network import (
    NetworkState, gradient_check, init_weights, load_checkpoint, save_checkpoint,
)
from .neuralnet_train import TrainConfig, TrainHistory, adam_step, minibatches, train

__all__ = [
    "LAYER_KINDS", "BatchNorm", "Dense", "Dropout", "LayerSpec", "batchnorm_update",
    "LOSSES", "loss_gradient", "loss_value",
    "NetworkState", "gradient_check", "init_weights", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainHistory", "adam_step", "minibatches", "train",
]
