"""Minimal differentiable numerics used to train the multi-task model."""
from .checkpoint import CheckpointError, load_checkpoint, restore_parameters, save_checkpoint
from .gradcheck import grad_check
from .layers import DenseParams, GruLayerParams, dense_forward, gru_forward, gru_layer, gru_param_count
from .losses import cross_entropy_loss, mse_loss, softmax
from .optim import AdamWState, adamw_step, step_lr
from .tensor import Tensor, backward, mul, parameter, reshape, take, transpose, weighted_sum, zero_grad

__all__ = [
    "AdamWState", "CheckpointError", "DenseParams", "GruLayerParams", "Tensor", "adamw_step",
    "backward", "cross_entropy_loss", "dense_forward", "grad_check", "gru_forward", "gru_layer",
    "gru_param_count", "load_checkpoint", "mse_loss", "mul", "param_count", "parameter", "reshape",
    "restore_parameters", "save_checkpoint", "softmax", "step_lr", "take", "transpose", "weighted_sum",
    "zero_grad",
]


def param_count(model) -> int:
    """Number of trainable scalars in anything exposing ``parameters()``."""
    return sum(p.size for p in model.parameters())
