from .network import (
    NetConfig,
    StudentNet,
    backward,
    backward_arrays,
    channel_plan,
    default_loss_weights,
    forward,
    forward_arrays,
    init,
    pair_to_input,
    param_shapes,
    predict_flow,
)
from .optim import OptimizerState, init_optimizer, optimizer_step
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "NetConfig",
    "StudentNet",
    "init",
    "forward",
    "backward",
    "forward_arrays",
    "backward_arrays",
    "pair_to_input",
    "param_shapes",
    "channel_plan",
    "default_loss_weights",
    "predict_flow",
    "OptimizerState",
    "init_optimizer",
    "optimizer_step",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
]
