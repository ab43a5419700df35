"""Stochastic gaze attention for joint gaze estimation and action recognition."""
from .grid import GridShape, entropy, gumbel_softmax_sample, kl_divergence, normalize
from .learning import LossBreakdown, TrainConfig, backward, loss, lr_at_epoch, sgd_step, train
from .model import ClipSample, ModelParams, forward_infer, forward_train, init_params
from .prior import GazeKind, GazeRecord, PriorConfig, build_prior, uniform_prior

__version__ = "0.1.0"

__all__ = [
    "GridShape", "entropy", "gumbel_softmax_sample", "kl_divergence", "normalize",
    "LossBreakdown", "TrainConfig", "backward", "loss", "lr_at_epoch", "sgd_step", "train",
    "ClipSample", "ModelParams", "forward_infer", "forward_train", "init_params",
    "GazeKind", "GazeRecord", "PriorConfig", "build_prior", "uniform_prior",
]
