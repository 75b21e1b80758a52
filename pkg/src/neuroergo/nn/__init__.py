"""Minimal differentiable-computation kernel for the CNN/GAT models."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gat import GraphBatch, batch_complete_graphs, make_graph_batch
from .gradcheck import grad_check, grad_check_layer
from .layers import ELU, BatchNorm2d, Conv2d, Dense, Dropout, GATConv, ReLU
from .optim import PlateauScheduler, plateau_step, sgd_step
from .params import ParamStore

__all__ = [
    "BatchNorm2d", "Conv2d", "Dense", "Dropout", "ELU", "GATConv", "GraphBatch", "ParamStore",
    "PlateauScheduler", "ReLU", "batch_complete_graphs", "grad_check", "grad_check_layer",
    "load_checkpoint", "make_graph_batch", "plateau_step", "save_checkpoint", "sgd_step",
]
