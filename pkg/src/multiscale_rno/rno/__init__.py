"""Recurrent neural operator surrogate for the cell-problem solution map."""
from .checkpoint import load_model, save_model
from .metrics import property_errors, timestep_independence
from .mlp import MLP
from .model import RNOConfig, RNOModel, compute_loss, rno_forward, rno_step
from .normalizer import Normalizer, fit_normalizer
from .train import TrainConfig, TrainResult, gradient_check, split_dataset, train

__all__ = [
    "MLP", "Normalizer", "RNOConfig", "RNOModel", "TrainConfig", "TrainResult",
    "compute_loss", "fit_normalizer", "gradient_check", "load_model", "property_errors",
    "rno_forward", "rno_step", "save_model", "split_dataset", "timestep_independence", "train",
]
