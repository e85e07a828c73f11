"""Hierarchical graph network for individual, social-group and global activity recognition."""

from .config import ClusterConfig, ModelConfig, SynthConfig, TrainConfig
from .metrics import evaluate
from .model import ParModel
from .scene import load_dataset, save_dataset
from .synth import synth_generate
from .training import infer, predict_all, train

__all__ = [
    "ClusterConfig",
    "ModelConfig",
    "SynthConfig",
    "TrainConfig",
    "ParModel",
    "evaluate",
    "infer",
    "load_dataset",
    "predict_all",
    "save_dataset",
    "synth_generate",
    "train",
]
