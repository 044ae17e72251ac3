"""Batched objectives, L-BFGS and the fitting loops."""

from .lbfgs import LBFGSResult, lbfgs_minimize
from .trainer import TrainConfig, TrainResult, train

__all__ = ["LBFGSResult", "lbfgs_minimize", "TrainConfig", "TrainResult", "train"]
