"""Minimal reverse-mode autodiff: tensors, layers, Adam/AdamW, training loop."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (LSTM, BatchNorm1d, Conv1d, Dense, Dropout, LayerNorm, LayerSpec, Module,
                     MultiHeadSelfAttention, ReLU, Sequential, build_layer, forward)
from .optim import Adam, OptimizerSpec, adam_update, learning_rate_at, optimizer_step
from .tensor import Tensor, no_grad
from .train import History, train_loop

__all__ = [
    "load_checkpoint", "save_checkpoint",
    "LSTM", "BatchNorm1d", "Conv1d", "Dense", "Dropout", "LayerNorm", "LayerSpec", "Module",
    "MultiHeadSelfAttention", "ReLU", "Sequential", "build_layer", "forward",
    "Adam", "OptimizerSpec", "adam_update", "learning_rate_at", "optimizer_step",
    "Tensor", "no_grad", "History", "train_loop",
]
