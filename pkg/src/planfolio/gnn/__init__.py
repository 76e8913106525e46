"""Numpy EdgeConv network, losses, Adam, training and checkpoints."""
from .adam import AdamState, adam_step
from .checkpoint import CheckpointError, load, save
from .layers import MlpSpec, init_mlp, log_softmax, mlp_backward, mlp_forward, selu, softmax
from .model import (MODEL_VERSION, GraphBatch, Model, ModelConfig, ShapeError, edgeconv_forward,
                    loss_and_grad, mse, nll, readout_sum)
from .train import TrainConfig, TrainingDivergedError, TrainLog, accuracy, evaluate_loss, train

__all__ = [
    "AdamState", "adam_step", "CheckpointError", "load", "save", "MlpSpec", "init_mlp",
    "log_softmax", "mlp_backward", "mlp_forward", "selu", "softmax", "MODEL_VERSION",
    "GraphBatch", "Model", "ModelConfig", "ShapeError", "edgeconv_forward", "loss_and_grad",
    "mse", "nll", "readout_sum", "TrainConfig", "TrainingDivergedError", "TrainLog",
    "accuracy", "evaluate_loss", "train",
]
