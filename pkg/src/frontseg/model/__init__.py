"""Small encoder-decoder network with hand-written reverse-mode
differentiation, Adam, a triangular cyclic learning-rate schedule, binary
checkpoints, and the training loop."""

from .network import NetworkSpec, UNet
from .optim import Adam, CyclicLrSchedule, lr_at
from .checkpoint import save_checkpoint, load_checkpoint
from .training import TrainConfig, train, predict_image

__all__ = [
    "NetworkSpec",
    "UNet",
    "Adam",
    "CyclicLrSchedule",
    "lr_at",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "train",
    "predict_image",
]
