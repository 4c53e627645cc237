"""Toy 2D diffusion models trained in four prediction spaces under a shared cosine schedule."""

from .datasets import DatasetKind, PointCloud, generate, split
from .denoiser import Architecture, DenoiserModel, init, load_checkpoint, save_checkpoint
from .losses import LossForm
from .sampler import SampleConfig, sample
from .schedule import TargetSpace
from .trainer import NumericalAbort, TrainConfig, train

__all__ = [
    "Architecture",
    "DatasetKind",
    "DenoiserModel",
    "LossForm",
    "NumericalAbort",
    "PointCloud",
    "SampleConfig",
    "TargetSpace",
    "TrainConfig",
    "generate",
    "init",
    "load_checkpoint",
    "sample",
    "save_checkpoint",
    "split",
    "train",
]
