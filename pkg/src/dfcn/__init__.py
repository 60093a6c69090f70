"""Deep fusion clustering of attributed graphs.

A classic autoencoder and a symmetric graph autoencoder are trained
jointly; their latents are merged by a learnable fusion module into a
consensus embedding that both decoders reconstruct from, and a triplet
self-supervised KL objective sharpens the clustering. Everything runs
on a small reverse-mode tape over float64 matrices, with the hot
kernels compiled (see :mod:`dfcn.backend`).
"""

from .backend import BACKEND
from .cluster_eval import EvalReport, accuracy, ari, evaluate, kmeans, kuhn_munkres, macro_f1, nmi
from .graph import GraphData, SparseAdjacency, knn_heat_graph, normalize_adjacency, sbm_synthesize, spmm
from .numcore import Tape, finite_diff_check
from .trainer import ModelParams, TrainConfig, TrainReport, run_training

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EvalReport",
    "GraphData",
    "ModelParams",
    "SparseAdjacency",
    "Tape",
    "TrainConfig",
    "TrainReport",
    "accuracy",
    "ari",
    "evaluate",
    "finite_diff_check",
    "kmeans",
    "knn_heat_graph",
    "kuhn_munkres",
    "macro_f1",
    "nmi",
    "normalize_adjacency",
    "run_training",
    "sbm_synthesize",
    "spmm",
]
