"""Multimodal cross-attention classifier (image tokens + clinical + values vectors)."""

from .harness import ablation_grid, evaluate_harness, stratified_folds
from .model import (
    Batch, FusionConfig, cross_attend, encode_image, encode_vector, forward, init_params,
    loss_and_grads,
)
from .train import FusionDataset, load_checkpoint, predict_proba, save_checkpoint, train

__all__ = [
    "Batch", "FusionConfig", "FusionDataset", "ablation_grid", "cross_attend", "encode_image",
    "encode_vector", "evaluate_harness", "forward", "init_params", "load_checkpoint",
    "loss_and_grads", "predict_proba", "save_checkpoint", "stratified_folds", "train",
]
